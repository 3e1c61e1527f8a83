#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moc/commands.hpp"
#include "moc/config.hpp"
#include "moc/dataset.hpp"
#include "moc/error.hpp"
#include "moc/io.hpp"
#include "moc/moc.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

#ifndef MOC_TEST_DATA_DIR
#error "MOC_TEST_DATA_DIR must point at tests/data"
#endif

namespace moc {
namespace {

using nlohmann::json;
using testing::TempDir;

ErrorCode config_error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "config accepted: " << j.dump();
  return ErrorCode::invariant;
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  io::for_each_record(p, [&](const json& j, std::size_t) { out.push_back(j); });
  return out;
}

// Everything after the header line.
std::string body_of(const std::filesystem::path& p) {
  const std::string all = testing::read_file(p);
  return all.substr(all.find('\n') + 1);
}

std::vector<Document> three_docs() {
  return {{"a", std::string(400, 'a') + ". " + std::string(200, 'b') + ".", {}},
          {"b", "Short one. Short two. Short three.", {}},
          {"c", std::string(1000, 'c'), {}}};
}

template <typename Fn>
int run(std::string& log, Fn&& fn) {
  std::ostringstream out;
  const int code = run_command(fn, out);
  log = out.str();
  return code;
}

TEST(Config, DefaultsAndSections) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.metrics.k, std::vector<double>{0.8});
  EXPECT_EQ(c.moc.windows.max_tokens, 1024u);
  EXPECT_EQ(c.dataset.anchor_len, 10u);
  EXPECT_EQ(c.dataset.router_chars, 1024u);
  EXPECT_EQ(c.moc.placeholder, "[MASK]");
  EXPECT_DOUBLE_EQ(c.moc.generation.temperature, 0.1);

  const RunConfig d = parse_config(json::parse(R"({
    "metrics": {"k": [0.7, 0.9], "graph": "sequence", "delta": 2},
    "chunker": {"method": "boundary", "target_len": 150, "overlap": 20},
    "moc": {"max_tokens": 512, "fallback_label": 2},
    "concurrency": 3, "seed": 42})"));
  EXPECT_EQ(d.metrics.k, (std::vector<double>{0.7, 0.9}));
  EXPECT_EQ(d.metrics.graph, GraphVariant::sequence);
  EXPECT_EQ(d.chunker.method, ChunkMethod::boundary);
  EXPECT_EQ(d.moc.windows.max_tokens, 512u);
  EXPECT_EQ(d.moc.fallback_label->value(), 2);
  EXPECT_EQ(d.concurrency, 3u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_EQ(config_error_of(json{{"metric", json::object()}}), ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"metrics", {{"k", 1.0}}}}), ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"metrics", {{"k", 0.0}}}}), ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"metrics", {{"graph", "ring"}}}}), ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"chunker", {{"method", "llm"}}}}), ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"backends", {{"scorer", {{"kind", "http"}}}}}}),
            ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"backends", {{"expert", {{"kind", "ngram"}}}}}}),
            ErrorCode::config);
  EXPECT_EQ(config_error_of(json{{"backends", {{"oracle", {{"kind", "uniform"}}}}}}),
            ErrorCode::config);
  ::unsetenv("MOC_TEST_UNSET_KEY");
  EXPECT_EQ(config_error_of(json{{"backends",
                                  {{"scorer",
                                    {{"kind", "http"},
                                     {"base_url", "http://x"},
                                     {"model", "m"},
                                     {"api_key_env", "MOC_TEST_UNSET_KEY"}}}}}}),
            ErrorCode::config);
}

TEST(Config, OverridesParseJsonOrString) {
  json j = json::object();
  apply_override(j, "metrics.k=[0.7,0.8]");
  apply_override(j, "metrics.graph=sequence");
  apply_override(j, "moc.max_tokens=256");
  EXPECT_EQ(j["metrics"]["k"], json({0.7, 0.8}));
  EXPECT_EQ(j["metrics"]["graph"], "sequence");
  EXPECT_EQ(j["moc"]["max_tokens"], 256);
  EXPECT_THROW(apply_override(j, "novalue"), Error);

  TempDir dir;
  testing::write_file(dir / "c.json", R"({"metrics": {"k": 0.6}, "seed": 1})");
  const RunConfig c = load_config(dir / "c.json", {"metrics.k=0.9"});
  EXPECT_EQ(c.metrics.k, std::vector<double>{0.9});
  EXPECT_EQ(c.effective["metrics"]["k"], 0.9);
}

TEST(Config, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "calibration"), derive_seed(7, "calibration"));
  EXPECT_NE(derive_seed(7, "calibration"), derive_seed(7, "windows"));
  EXPECT_NE(derive_seed(7, "calibration"), derive_seed(8, "calibration"));
}

TEST(Config, RequireRoles) {
  const RunConfig c = parse_config(json::parse(R"({"backends": {
      "router": {"kind": "uniform"},
      "expert": {"kind": "fixture", "path": "x.jsonl"}}})"));
  EXPECT_NO_THROW(require_roles(c, {"router", "experts"}));
  EXPECT_TRUE(has_expert(c, 3));
  EXPECT_THROW(require_roles(c, {"scorer"}), Error);
}

TEST(CliChunk, FixedWiring) {
  TempDir dir;
  io::save_corpus(three_docs(), dir / "corpus.jsonl");
  RunConfig config = parse_config(json{{"chunker", {{"method", "fixed"}, {"target_len", 178}}}});
  std::string log;
  const int code = run(log, [&] {
    return cmd_chunk(config, {dir / "corpus.jsonl", dir / "chunks.jsonl", {}, dir / "report.jsonl"},
                     std::cerr);
  });
  EXPECT_EQ(code, kExitOk) << log;
  const auto sets = io::load_chunksets(dir / "chunks.jsonl", three_docs());
  ASSERT_EQ(sets.size(), 3u);
  EXPECT_EQ(sets[0].chunks[0].text.size(), 178u);
  const auto report = read_jsonl(dir / "report.jsonl");
  ASSERT_TRUE(report.front().contains("header"));
  EXPECT_EQ(report.front()["header"]["version"], kToolVersion);
  EXPECT_EQ(report.back()["type"], "summary");
  EXPECT_EQ(report.back()["chunked"], 3);
}

TEST(CliChunk, MissingMocBackendFailsBeforeWork) {
  TempDir dir;
  io::save_corpus(three_docs(), dir / "corpus.jsonl");
  RunConfig config = parse_config(json{{"chunker", {{"method", "moc"}}},
                                       {"backends", {{"router", {{"kind", "uniform"}}}}}});
  std::ostringstream log;
  const int code = run_command(
      [&] { return cmd_chunk(config, {dir / "corpus.jsonl", dir / "chunks.jsonl"}, log); }, log);
  EXPECT_EQ(code, kExitConfig);
  EXPECT_FALSE(std::filesystem::exists(dir / "chunks.jsonl"));
  EXPECT_NE(log.str().find("expert"), std::string::npos);
}

TEST(CliChunk, MocWithFixtureBackends) {
  TempDir dir;
  const Document doc{"m", "The harbour woke early. Boats slid out past the breakwater. "
                          "By noon the market was loud with gulls and haggling.", {}};
  io::save_corpus({doc}, dir / "corpus.jsonl");
  {
    io::JsonlWriter router(dir / "router.jsonl");
    const std::string prompt = render_routing_prompt(doc.text);
    for (int k = 0; k < 4; ++k) {
      router.write({{"text", std::to_string(k)},
                    {"context", prompt},
                    {"logprobs", {std::log(k == 1 ? 0.7 : 0.1)}}});
    }
    io::JsonlWriter expert(dir / "expert.jsonl");
    expert.write({{"prompt", render_chunking_prompt(doc.text)},
                  {"text", "[\"The harbour [MASK] breakwater.\", \"By noon the [MASK] hagglinG.\"]"}});
  }
  const json cfg = {{"chunker", {{"method", "moc"}}},
                    {"backends",
                     {{"router", {{"kind", "fixture"}, {"path", (dir / "router.jsonl").string()}}},
                      {"expert", {{"kind", "fixture"}, {"path", (dir / "expert.jsonl").string()}}}}}};
  const RunConfig config = parse_config(cfg);
  std::string log;
  const int code = run(log, [&] {
    return cmd_chunk(config, {dir / "corpus.jsonl", dir / "chunks.jsonl", {}, dir / "report.jsonl"},
                     std::cerr);
  });
  ASSERT_EQ(code, kExitOk) << log;
  const auto sets = io::load_chunksets(dir / "chunks.jsonl", {doc});
  ASSERT_EQ(sets[0].size(), 2u);
  EXPECT_EQ(sets[0].chunks[1].text, "By noon the market was loud with gulls and haggling.");
  const auto report = read_jsonl(dir / "report.jsonl");
  const json& window = report[2]["windows"][0];
  EXPECT_EQ(window["label"], 1);
  EXPECT_EQ(window["recovered"], 1);
  EXPECT_EQ(window["rule_list"]["rules"][1]["suffix"], " hagglinG.");
  EXPECT_EQ(window["extraction"][1]["mode"], "recovered");
  EXPECT_EQ(window["extraction"][1]["distance"], 1);
}

TEST(CliEval, BcWithoutScorerIsConfigError) {
  TempDir dir;
  io::save_corpus(three_docs(), dir / "corpus.jsonl");
  const RunConfig config = parse_config(json::object());
  std::string log;
  EXPECT_EQ(run(log, [&] {
              return cmd_eval(config, {dir / "corpus.jsonl", dir / "c.jsonl", dir / "e.jsonl"},
                              std::cerr);
            }),
            kExitConfig);
}

TEST(CliEval, OrphansAreListed) {
  TempDir dir;
  auto docs = three_docs();
  io::save_corpus(docs, dir / "corpus.jsonl");
  io::save_chunksets({chunk_fixed(docs[0], 100), chunk_fixed(Document{"zz", "orphan", {}}, 3)},
                     dir / "chunks.jsonl");
  const RunConfig config = parse_config(json{{"backends", {{"scorer", {{"kind", "uniform"}}}}}});
  std::ostringstream log;
  const int code = run_command(
      [&] {
        return cmd_eval(config, {dir / "corpus.jsonl", dir / "chunks.jsonl", dir / "e.jsonl"}, log);
      },
      log);
  EXPECT_NE(code, kExitOk);
  EXPECT_NE(log.str().find("zz"), std::string::npos);
  EXPECT_NE(log.str().find("b"), std::string::npos);
}

TEST(CliEval, KSweepIsNonIncreasingPerDocumentForNgramScorer) {
  TempDir dir;
  const auto corpus = testing::two_topic_corpus(3);
  std::vector<Document> docs;
  std::vector<ChunkSet> sets;
  for (const auto& td : corpus.docs) {
    docs.push_back(td.doc);
    sets.push_back(chunk_fixed(td.doc, 120));
  }
  io::save_corpus(docs, dir / "corpus.jsonl");
  io::save_corpus({{"bg", corpus.background, {}}}, dir / "background.jsonl");
  io::save_chunksets(sets, dir / "chunks.jsonl");
  const json cfg = {{"metrics", {{"k", {0.7, 0.8, 0.9}}}},
                    {"backends",
                     {{"scorer",
                       {{"kind", "ngram"},
                        {"order", 3},
                        {"cache_weight", 50},
                        {"training", (dir / "background.jsonl").string()}}}}}};
  const RunConfig config = parse_config(cfg);
  std::string log;
  ASSERT_EQ(run(log, [&] {
              return cmd_eval(config,
                              {dir / "corpus.jsonl", dir / "chunks.jsonl", dir / "eval.jsonl",
                               {"bc", "cs_c", "cs_i"}},
                              std::cerr);
            }),
            kExitOk)
      << log;
  std::size_t docs_seen = 0;
  for (const auto& r : read_jsonl(dir / "eval.jsonl")) {
    if (r.value("type", "") != "doc") continue;
    ++docs_seen;
    for (const char* m : {"cs_c", "cs_i"}) {
      const double a = r[m]["0.7"], b = r[m]["0.8"], c = r[m]["0.9"];
      EXPECT_GE(a, b) << r["doc_id"] << " " << m;
      EXPECT_GE(b, c) << r["doc_id"] << " " << m;
    }
    EXPECT_GT(r["bc"].get<double>(), 0.0);
  }
  EXPECT_EQ(docs_seen, docs.size());
}

TEST(CliEval, ReportsAreReproducible) {
  TempDir dir;
  auto docs = three_docs();
  io::save_corpus(docs, dir / "corpus.jsonl");
  std::vector<ChunkSet> sets;
  for (const auto& d : docs) sets.push_back(chunk_fixed(d, 20));
  io::save_chunksets(sets, dir / "chunks.jsonl");
  const RunConfig config = parse_config(json{
      {"concurrency", 4},
      {"backends", {{"scorer", {{"kind", "ngram"}, {"order", 2}, {"cache_weight", 2}}},
                    {"embedder", {{"kind", "hashing"}}}}}});
  for (int run_no = 0; run_no < 2; ++run_no) {
    std::string log;
    ASSERT_EQ(run(log, [&] {
                return cmd_eval(config,
                                {dir / "corpus.jsonl", dir / "chunks.jsonl",
                                 dir / ("e" + std::to_string(run_no) + ".jsonl"),
                                 {"bc", "cs", "ds"}},
                                std::cerr);
              }),
              kExitOk)
        << log;
  }
  EXPECT_EQ(body_of(dir / "e0.jsonl"), body_of(dir / "e1.jsonl"));
  EXPECT_NE(body_of(dir / "e0.jsonl").find("\"ds\""), std::string::npos);

  for (int run_no = 0; run_no < 2; ++run_no) {
    const RunConfig boundary = parse_config(json{{"chunker", {{"method", "boundary"}}}});
    std::string log;
    ASSERT_EQ(run(log, [&] {
                return cmd_chunk(boundary,
                                 {dir / "corpus.jsonl", dir / ("c" + std::to_string(run_no)),
                                  {}, dir / ("r" + std::to_string(run_no))},
                                 std::cerr);
              }),
              kExitOk);
  }
  EXPECT_EQ(testing::read_file(dir / "c0"), testing::read_file(dir / "c1"));
  EXPECT_EQ(body_of(dir / "r0"), body_of(dir / "r1"));
}

TEST(CliPearson, PublishedTableGivesItsCoefficients) {
  const auto path = std::filesystem::path(MOC_TEST_DATA_DIR) / "method_quality.csv";
  const CsvTable table = read_csv(path);
  const auto results = correlate_columns(table, "ROUGE-L");
  ASSERT_EQ(results.size(), 3u);
  EXPECT_EQ(results[0].first, "BC");
  EXPECT_NEAR(results[0].second, 0.8776, 5e-4);
  EXPECT_NEAR(results[2].second, -0.6663, 5e-4);

  std::ostringstream log;
  TempDir dir;
  EXPECT_EQ(cmd_pearson({path, std::nullopt, dir / "p.jsonl"}, log), kExitOk);
  EXPECT_NE(log.str().find("BC vs ROUGE-L: 0.8776"), std::string::npos) << log.str();
  const auto records = read_jsonl(dir / "p.jsonl");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_TRUE(records[0].contains("header"));
  EXPECT_EQ(records[1]["correlations"].size(), 3u);
  EXPECT_NEAR(records[1]["correlations"]["BC"].get<double>(), results[0].second, 1e-15);
}

TEST(CliDataset, CleanWithVerbatimChunksFlagsNothing) {
  TempDir dir;
  const auto docs = three_docs();
  io::save_corpus(docs, dir / "corpus.jsonl");
  {
    io::JsonlWriter gen(dir / "generated.jsonl");
    gen.write({{"doc_id", "b"}, {"chunks", {"Short one.", "Short two. Short three."}}});
    gen.write({{"doc_id", "a"}, {"chunks", {docs[0].text.substr(0, 300)}}});
  }
  const RunConfig config = parse_config(json::object());
  std::string log;
  DatasetArgs args{"clean", dir / "corpus.jsonl", dir / "out", {}, dir / "generated.jsonl", {}};
  ASSERT_EQ(run(log, [&] { return cmd_dataset(config, args, std::cerr); }), kExitOk) << log;
  const json manifest = json::parse(testing::read_file(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["counts"]["chunks"], 3);
  EXPECT_EQ(manifest["counts"]["flagged"], 0);
  EXPECT_TRUE(read_jsonl(dir / "out" / "flagged.jsonl").empty());
}

TEST(CliDataset, EmitWarnsOnImbalance) {
  TempDir dir;
  std::vector<Document> docs;
  std::vector<ChunkSet> sets;
  // Five fine-grained documents, one coarse one.
  for (int i = 0; i < 6; ++i) {
    const std::size_t len = i < 5 ? 50 : 200;
    docs.push_back({"d" + std::to_string(i), std::string(len * 4, char('a' + i)), {}});
    sets.push_back(chunk_fixed(docs.back(), len));
  }
  io::save_corpus(docs, dir / "corpus.jsonl");
  io::save_chunksets(sets, dir / "chunks.jsonl");
  const RunConfig config = parse_config(json::object());
  std::ostringstream log;
  DatasetArgs args{"emit", dir / "corpus.jsonl", dir / "out", dir / "chunks.jsonl", {}, {}};
  const int code = run_command([&] { return cmd_dataset(config, args, log); }, log);
  EXPECT_EQ(code, kExitOk) << log.str();
  const json manifest = json::parse(testing::read_file(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["counts"]["expert_0"], 5);
  EXPECT_EQ(manifest["counts"]["expert_3"], 1);
  EXPECT_FALSE(manifest["warnings"].empty());
  EXPECT_NE(log.str().find("warning:"), std::string::npos);
}

TEST(CliDataset, DistillPipelineWithFixtureGenerator) {
  TempDir dir;
  const Document doc{"dd", "First idea here. Second idea follows. Third idea closes.", {}};
  io::save_corpus({doc}, dir / "corpus.jsonl");
  {
    io::JsonlWriter gen(dir / "distiller.jsonl");
    gen.write({{"prompt", render_distill_prompt(doc.text)},
               {"text", "<chunk>First idea here. Second idea follows.</chunk>"
                        "<chunk>Third idea closes.</chunk>"}});
  }
  const RunConfig config = parse_config(json{
      {"backends", {{"distiller", {{"kind", "fixture"}, {"path", (dir / "distiller.jsonl").string()}}}}}});
  std::string log;
  DatasetArgs distill{"distill", dir / "corpus.jsonl", dir / "d", {}, {}, {}};
  ASSERT_EQ(run(log, [&] { return cmd_dataset(config, distill, std::cerr); }), kExitOk) << log;
  for (const char* f : {"raw.jsonl", "generated.jsonl", "verdicts.jsonl", "chunks.jsonl",
                        "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "d" / f)) << f;
  }
  const auto chunks = io::load_chunksets(dir / "d" / "chunks.jsonl", {doc});
  ASSERT_EQ(chunks[0].size(), 2u);

  DatasetArgs rules{"rules", dir / "corpus.jsonl", dir / "r", dir / "d" / "chunks.jsonl", {}, {}};
  ASSERT_EQ(run(log, [&] { return cmd_dataset(config, rules, std::cerr); }), kExitOk) << log;
  const auto r = read_jsonl(dir / "r" / "rules.jsonl");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0]["label"], 0);
  EXPECT_EQ(r[0]["rules"][0]["prefix"], "First idea");
  EXPECT_EQ(r[0]["rules"][1]["literal"], true);

  DatasetArgs emit{"emit", dir / "corpus.jsonl", dir / "e", dir / "d" / "chunks.jsonl", {},
                   dir / "d" / "verdicts.jsonl"};
  ASSERT_EQ(run(log, [&] { return cmd_dataset(config, emit, std::cerr); }), kExitOk) << log;
  const json manifest = json::parse(testing::read_file(dir / "e" / "manifest.json"));
  EXPECT_EQ(manifest["counts"]["expert_0"], 1);
  EXPECT_EQ(manifest["counts"]["router"], 1);
}

TEST(CliDataset, MissingDistillerIsConfigError) {
  TempDir dir;
  io::save_corpus(three_docs(), dir / "corpus.jsonl");
  std::string log;
  DatasetArgs args{"distill", dir / "corpus.jsonl", dir / "d", {}, {}, {}};
  EXPECT_EQ(run(log, [&] { return cmd_dataset(parse_config(json::object()), args, std::cerr); }),
            kExitConfig);
}

}  // namespace
}  // namespace moc
