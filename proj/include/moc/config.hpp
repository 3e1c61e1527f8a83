#pragma once

// Run configuration shared by every CLI command and the backend factory that
// turns it into scorers, generators and embedders.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moc/chunkers.hpp"
#include "moc/metrics.hpp"
#include "moc/pipeline.hpp"
#include "moc/text.hpp"

namespace moc {

// Backend roles. Scorer roles: "scorer" (metrics) and "router". Generator
// roles: "expert" (all labels), "expert_0".."expert_3" (per label, override
// "expert") and "distiller". Embedder role: "embedder".
struct BackendSpec {
  // http | ngram | uniform | fixture | hashing
  std::string kind;
  nlohmann::json options = nlohmann::json::object();
};

struct MetricParams {
  std::vector<double> k{0.8};
  std::size_t delta = 0;
  // Variant used by the plain "cs" metric.
  GraphVariant graph = GraphVariant::complete;
};

struct MocSettings {
  WindowOptions windows;
  std::string placeholder = std::string(kDefaultPlaceholder);
  GenerationParams generation;
  double max_ratio = 0.5;
  std::optional<GranularityLabel> fallback_label;
  std::string routing_prompt = kDefaultRoutingPrompt;
};

struct DatasetParams {
  WindowOptions windows;
  std::size_t anchor_len = 10;
  std::string placeholder = std::string(kDefaultPlaceholder);
  // Router texts are sized in characters, windows in (proxy) tokens.
  std::size_t router_chars = 1024;
  double imbalance_ratio = 1.5;
  GenerationParams generation;
};

struct RunConfig {
  std::map<std::string, BackendSpec> backends;
  MetricParams metrics;
  ChunkerConfig chunker;
  std::optional<double> calibrate_avg;  // target mean chunk length
  MocSettings moc;
  DatasetParams dataset;
  std::size_t concurrency = 1;
  std::uint64_t seed = 0;
  // The effective configuration after overrides, echoed into reports.
  nlohmann::json effective;
};

// Throws Error(ErrorCode::config) on unknown keys, wrong types, K outside
// (0, 1) or backend specs that do not fit their role.
RunConfig parse_config(const nlohmann::json& j);

// "a.b.c=value": value is parsed as JSON when it is valid JSON and taken as a
// plain string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides = {});

// Seed for a named sub-stream, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// Throws Error(ErrorCode::config) naming the first missing role.
void require_roles(const RunConfig& config,
                   const std::vector<std::string>& roles);

bool has_expert(const RunConfig& config, int label);

// Owns the backends of a run. n-gram scorers without an explicit training
// file are trained on `corpus`.
class Backends {
 public:
  Backends(const RunConfig& config, const std::vector<Document>* corpus);
  ~Backends();

  const Scorer& scorer(const std::string& role);
  const Generator& generator(const std::string& role);
  const Embedder& embedder(const std::string& role = "embedder");
  // Per-label experts, falling back to the "expert" role.
  Experts experts();

 private:
  const RunConfig& config_;
  const std::vector<Document>* corpus_;
  std::map<std::string, std::unique_ptr<Scorer>> scorers_;
  std::map<std::string, std::unique_ptr<Generator>> generators_;
  std::map<std::string, std::unique_ptr<Embedder>> embedders_;
};

}  // namespace moc
