#pragma once

// CLI command implementations. Each returns a process exit code and writes
// human-readable progress to `log`; machine-readable output goes to files.

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "moc/config.hpp"

namespace moc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kToolVersion = "0.1.0";

// Runs a command, mapping escaping errors to exit codes: configuration, input
// and precondition problems give kExitConfig, anything else kExitPartial.
int run_command(const std::function<int()>& command, std::ostream& log);

// Reports are JSON Lines whose first line is {"header": {...}} holding the
// volatile fields (time, version); the body is deterministic.
nlohmann::json report_header(const std::string& command);

struct ChunkArgs {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::optional<std::string> method;  // overrides chunker.method
  std::optional<std::filesystem::path> report;
};

int cmd_chunk(const RunConfig& config, const ChunkArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path corpus;
  std::filesystem::path chunks;
  std::filesystem::path out;
  // bc, cs, cs_c, cs_i, ds, cp
  std::vector<std::string> metrics{"bc", "cs_c", "cs_i"};
  // QA records {id, answer, retrieved: [{doc_id, index}]}, needed for cp.
  std::optional<std::filesystem::path> qa;
};

int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::vector<double> numeric(const std::string& column) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Pearson correlation of every numeric column against `target`.
std::vector<std::pair<std::string, double>> correlate_columns(
    const CsvTable& table, const std::string& target);

struct PearsonArgs {
  std::filesystem::path table;
  std::optional<std::string> target;  // default: last column
  std::optional<std::filesystem::path> out;
};

int cmd_pearson(const PearsonArgs& args, std::ostream& log);

struct DatasetArgs {
  // windows | distill | clean | rules | label | emit
  std::string subcommand;
  std::filesystem::path corpus;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> chunks;
  // clean: records {doc_id, chunks: [text, ...]}
  std::optional<std::filesystem::path> generated;
  // emit: drop documents with a flagged chunk in this verdict file
  std::optional<std::filesystem::path> verdicts;
};

int cmd_dataset(const RunConfig& config, const DatasetArgs& args,
                std::ostream& log);

}  // namespace moc
