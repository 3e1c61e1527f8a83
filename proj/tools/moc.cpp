#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moc/commands.hpp"
#include "moc/config.hpp"

namespace {

// Named flags are shorthands for --set on the config key they mirror.
struct FlagOverride {
  std::string key;
  std::string value;
  bool list = false;
};

void add_flag(CLI::App* cmd, std::vector<FlagOverride>& flags,
              const std::string& name, const std::string& key,
              const std::string& help, bool list = false) {
  flags.push_back({key, {}, list});
  // Element addresses stay valid: every flag is registered before parsing.
  cmd->add_option(name, flags.back().value, help + " (config: " + key + ")");
}

std::vector<std::string> to_overrides(const std::vector<FlagOverride>& flags) {
  std::vector<std::string> out;
  for (const auto& f : flags) {
    if (f.value.empty()) continue;
    out.push_back(f.key + "=" + (f.list ? "[" + f.value + "]" : f.value));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text chunking toolkit: chunkers, chunk-quality metrics and "
               "training-data distillation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", moc::kToolVersion);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides,
                 "Override a config key, e.g. --set metrics.k=[0.7,0.8]");

  moc::ChunkArgs chunk;
  std::string chunk_method;
  std::string chunk_report;
  auto* chunk_cmd = app.add_subcommand("chunk", "Chunk a corpus");
  chunk_cmd->add_option("--corpus", chunk.corpus, "Corpus JSONL")->required();
  chunk_cmd->add_option("-o,--out", chunk.out, "Chunk set JSONL")->required();
  chunk_cmd->add_option("-m,--method", chunk_method,
                        "fixed | boundary | semantic | moc");
  chunk_cmd->add_option("--report", chunk_report, "Per-document report JSONL");
  std::vector<FlagOverride> flags;
  flags.reserve(32);
  add_flag(chunk_cmd, flags, "--target-len", "chunker.target_len", "Target chunk length");
  add_flag(chunk_cmd, flags, "--overlap", "chunker.overlap", "Boundary-aware overlap");
  add_flag(chunk_cmd, flags, "--threshold", "chunker.similarity_threshold",
           "Semantic split threshold");
  add_flag(chunk_cmd, flags, "--calibrate-avg", "chunker.calibrate_avg",
           "Calibrate to this mean chunk length");
  add_flag(chunk_cmd, flags, "--placeholder", "moc.placeholder", "Rule placeholder");
  add_flag(chunk_cmd, flags, "--max-window", "moc.max_tokens", "Window budget in tokens");
  add_flag(chunk_cmd, flags, "--router-model", "backends.router.model", "Router model");
  for (int k = 0; k < 4; ++k) {
    const std::string n = std::to_string(k);
    add_flag(chunk_cmd, flags, "--expert-model-" + n, "backends.expert_" + n + ".model",
             "Expert model for label " + n);
  }

  moc::EvalArgs eval;
  std::string eval_qa;
  auto* eval_cmd = app.add_subcommand("eval", "Score chunk sets");
  eval_cmd->add_option("--corpus", eval.corpus, "Corpus JSONL")->required();
  eval_cmd->add_option("--chunks", eval.chunks, "Chunk set JSONL")->required();
  eval_cmd->add_option("-o,--out", eval.out, "Report JSONL")->required();
  eval_cmd->add_option("--metrics", eval.metrics, "bc cs cs_c cs_i ds cp")
      ->delimiter(',')
      ->capture_default_str();
  eval_cmd->add_option("--qa", eval_qa, "QA records JSONL (for cp)");
  add_flag(eval_cmd, flags, "--k", "metrics.k", "Edge thresholds, comma separated", true);
  add_flag(eval_cmd, flags, "--graph", "metrics.graph", "complete | sequence");
  add_flag(eval_cmd, flags, "--delta", "metrics.delta", "Sequence graph offset");

  moc::PearsonArgs pearson;
  std::string pearson_target;
  std::string pearson_out;
  auto* pearson_cmd =
      app.add_subcommand("pearson", "Correlate metric columns of a CSV table");
  pearson_cmd->add_option("table", pearson.table, "CSV with a header row")
      ->required();
  pearson_cmd->add_option("--target", pearson_target,
                          "Target column (default: last)");
  pearson_cmd->add_option("-o,--out", pearson_out, "Report JSONL");

  moc::DatasetArgs dataset;
  std::string ds_chunks, ds_generated, ds_verdicts;
  auto* dataset_cmd = app.add_subcommand("dataset", "Build training data");
  dataset_cmd->add_option("subcommand", dataset.subcommand,
                          "windows | distill | clean | rules | label | emit")
      ->required();
  dataset_cmd->add_option("--corpus", dataset.corpus, "Corpus JSONL")->required();
  dataset_cmd->add_option("-o,--out", dataset.out_dir, "Output directory")
      ->required();
  dataset_cmd->add_option("--chunks", ds_chunks, "Chunk set JSONL");
  dataset_cmd->add_option("--generated", ds_generated,
                          "Generated chunks JSONL (clean)");
  dataset_cmd->add_option("--verdicts", ds_verdicts,
                          "Drop documents flagged in this verdict file (emit)");
  add_flag(dataset_cmd, flags, "--max-window", "dataset.max_tokens", "Window budget in tokens");
  add_flag(dataset_cmd, flags, "--anchor-len", "dataset.anchor_len", "Anchor length");
  add_flag(dataset_cmd, flags, "--router-chars", "dataset.router_chars",
           "Router text length in characters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? moc::kExitOk : moc::kExitConfig;
  }

  auto opt = [](const std::string& s) -> std::optional<std::string> {
    if (s.empty()) return std::nullopt;
    return s;
  };

  return moc::run_command(
      [&]() -> int {
        if (*pearson_cmd) {
          if (auto t = opt(pearson_target)) pearson.target = *t;
          if (auto o = opt(pearson_out)) pearson.out = *o;
          return moc::cmd_pearson(pearson, std::cout);
        }
        std::optional<std::filesystem::path> path;
        if (!config_path.empty()) path = config_path;
        // Named flags first so an explicit --set wins.
        std::vector<std::string> all = to_overrides(flags);
        all.insert(all.end(), overrides.begin(), overrides.end());
        const moc::RunConfig config = moc::load_config(path, all);
        if (*chunk_cmd) {
          chunk.method = opt(chunk_method);
          if (auto r = opt(chunk_report)) chunk.report = *r;
          return moc::cmd_chunk(config, chunk, std::cerr);
        }
        if (*eval_cmd) {
          if (auto q = opt(eval_qa)) eval.qa = *q;
          return moc::cmd_eval(config, eval, std::cerr);
        }
        if (auto c = opt(ds_chunks)) dataset.chunks = *c;
        if (auto g = opt(ds_generated)) dataset.generated = *g;
        if (auto v = opt(ds_verdicts)) dataset.verdicts = *v;
        return moc::cmd_dataset(config, dataset, std::cerr);
      },
      std::cerr);
}
