#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moc/dataset.hpp"
#include "moc/edit_distance.hpp"
#include "moc/error.hpp"
#include "moc/io.hpp"
#include "moc/offline.hpp"
#include "moc/utf8.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace moc {
namespace {

using nlohmann::json;
using testing::Rng;
using testing::TempDir;

std::string letters(Rng& rng, std::size_t n, const std::string& alphabet) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[testing::uniform(rng, 0, alphabet.size() - 1)];
  return s;
}

// Brute-force minimum edit distance to any substring of the document.
std::size_t min_substring_distance(const std::string& needle, const std::string& hay) {
  std::size_t best = utf8::length(needle);
  for (std::size_t i = 0; i < hay.size(); ++i) {
    for (std::size_t j = i + 1; j <= hay.size(); ++j) {
      best = std::min(best, edit_distance(std::string_view(needle),
                                          std::string_view(hay).substr(i, j - i)));
    }
  }
  return best;
}

TEST(Hallucination, VerbatimChunkIsClean) {
  const Document doc{"d", "Some source text. Another sentence here.", {}};
  const auto v = detect_hallucination("Another sentence", doc);
  EXPECT_EQ(v.min_edit_distance, 0u);
  EXPECT_FALSE(v.flagged);
  EXPECT_EQ(doc.text.substr(v.start, v.end - v.start), "Another sentence");
}

TEST(Hallucination, TenPercentRuleIsStrict) {
  Rng rng(31);
  const std::string original = letters(rng, 100, "abcdefghijklmnopqrstuvwxyz");
  const Document doc{"d", "0123456789" + original + "9876543210", {}};
  auto altered = [&](std::size_t edits) {
    std::string s = original;
    for (std::size_t k = 0; k < edits; ++k) s[5 + 9 * k] = char('A' + k);
    return s;
  };
  const std::string ten = altered(10);
  const std::string eleven = altered(11);
  ASSERT_EQ(min_substring_distance(ten, doc.text), 10u);
  ASSERT_EQ(min_substring_distance(eleven, doc.text), 11u);

  const auto v10 = detect_hallucination(ten, doc);
  EXPECT_EQ(v10.min_edit_distance, 10u);
  EXPECT_DOUBLE_EQ(v10.threshold, 10.0);
  EXPECT_FALSE(v10.flagged);
  const auto v11 = detect_hallucination(eleven, doc);
  EXPECT_EQ(v11.min_edit_distance, 11u);
  EXPECT_TRUE(v11.flagged);
}

TEST(Hallucination, MatchesBruteForceAndIsMonotoneUnderNoise) {
  Rng rng(32);
  for (int t = 0; t < 40; ++t) {
    const Document doc{"d", letters(rng, 60, "abcde"), {}};
    std::string chunk = doc.text.substr(testing::uniform(rng, 0, 30), 20);
    for (int e = 0; e < 3; ++e) chunk[testing::uniform(rng, 0, 19)] = 'x';
    std::size_t last = detect_hallucination(chunk, doc).min_edit_distance;
    EXPECT_EQ(last, min_substring_distance(chunk, doc.text));
    for (int n = 0; n < 5; ++n) {
      chunk += letters(rng, testing::uniform(rng, 1, 4), "abcdexyz");
      const std::size_t d = detect_hallucination(chunk, doc).min_edit_distance;
      EXPECT_GE(d, last);
      last = d;
    }
  }
}

ChunkSet chunks_of(const Document& doc, const std::vector<std::size_t>& lengths) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t pos = 0;
  for (auto l : lengths) {
    const std::size_t end = utf8::advance(doc.text, pos, l);
    spans.emplace_back(pos, end);
    pos = end;
  }
  return make_chunk_set(doc, spans, "reference");
}

TEST(MakeRules, SlicesAnchorsOrKeepsShortChunksLiteral) {
  const Document doc{"d", "abcdefghij0123456789ABCDEFGHIJshort chunk 15", {}};
  const RuleList rules = make_rules(chunks_of(doc, {30, 14}));
  ASSERT_EQ(rules.rules.size(), 2u);
  EXPECT_EQ(rules.rules[0], ChunkRule::anchored("abcdefghij", "[MASK]", "ABCDEFGHIJ"));
  EXPECT_TRUE(rules.rules[1].literal);
  const Document fifteen{"d", "fifteen chars!!", {}};
  const RuleList lit = make_rules(chunks_of(fifteen, {15}));
  EXPECT_EQ(lit.rules[0], ChunkRule::literal_text("fifteen chars!!"));
  EXPECT_EQ(make_rules(chunks_of(doc, {30}), 10, "<pad>").rules[0].placeholder, "<pad>");
  EXPECT_THROW(make_rules(chunks_of(doc, {30}), 10, "<bogus>"), Error);
}

TEST(MakeRules, RoundTripThroughExtraction) {
  Rng rng(41);
  for (std::size_t anchor : {5u, 10u, 20u}) {
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
      Document doc{"rt-" + std::to_string(t), "", {}};
      std::vector<std::size_t> lengths;
      const std::size_t n = testing::uniform(rng, 1, 12);
      for (std::size_t i = 0; i < n; ++i) {
        lengths.push_back(testing::uniform(rng, 3, 150));
        std::string piece = letters(rng, lengths.back() - 1, "abcdefghijklmnopqrstuvwxyz ");
        piece += i % 3 ? "é" : ".";
        doc.text += piece;
      }
      const ChunkSet cs = chunks_of(doc, lengths);
      const RuleList rules = make_rules(cs, anchor);
      // Local uniqueness: each anchor first occurs where it belongs.
      bool unique = true;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto& c = cs.chunks[i];
        const auto& r = rules.rules[i];
        unique &= doc.text.find(r.prefix, c.start) == c.start;
        if (!r.literal) {
          unique &= doc.text.find(r.suffix, c.start + r.prefix.size()) ==
                    c.end - r.suffix.size();
        }
      }
      if (!unique) continue;
      ++checked;
      const Extraction ex = extract_chunks(doc, rules, {.method = "reference"});
      EXPECT_EQ(ex.chunks, cs) << "anchor " << anchor;
      EXPECT_EQ(ex.report.count(MatchMode::exact), cs.size());
    }
    EXPECT_GE(checked, 95);
  }
}

TEST(Labels, FromChunkSets) {
  const Document doc{"d", std::string(361, 'x'), {}};
  EXPECT_EQ(label_granularity(chunks_of(doc, {120, 120, 121})).value(), 1);
  EXPECT_EQ(label_granularity(chunks_of(doc, {180, 181})).value(), 3);
  EXPECT_EQ(label_granularity(chunks_of(doc, {1, 360})).value(), 3);
  EXPECT_EQ(label_granularity(chunks_of(doc, {1})).value(), 0);
  EXPECT_THROW(label_granularity(ChunkSet{"d", {}, "x"}), Error);
}

TEST(RouterShaping, LongDocumentCutClosestToTarget) {
  const Document doc{"long", std::string(1200, 'r'), {}};
  const auto out = shape_router_texts({doc}, {chunks_of(doc, {300, 300, 300, 300})}, 1024);
  ASSERT_EQ(out.samples.size(), 1u);
  EXPECT_EQ(out.samples[0].text.size(), 900u);
  EXPECT_EQ(out.samples[0].label.value(), 3);
  EXPECT_EQ(out.label_counts.at(3), 1u);
}

TEST(RouterShaping, HugeChunkIsSkipped) {
  const Document doc{"huge", std::string(5000, 'h'), {}};
  const auto out = shape_router_texts({doc}, {chunks_of(doc, {5000})}, 1024);
  EXPECT_TRUE(out.samples.empty());
  ASSERT_EQ(out.notices.size(), 1u);
  EXPECT_NE(out.notices[0].find("huge"), std::string::npos);
}

TEST(RouterShaping, ShortDocumentsJoinWithinALabel) {
  std::vector<Document> docs;
  std::vector<ChunkSet> sets;
  for (int i = 0; i < 6; ++i) {
    docs.push_back({"s" + std::to_string(i), std::string(400, char('a' + i)), {}});
    sets.push_back(chunks_of(docs.back(), {100, 100, 100, 100}));
  }
  const auto out = shape_router_texts(docs, sets, 1024);
  std::size_t total_ids = 0;
  for (const auto& s : out.samples) {
    EXPECT_EQ(s.label.value(), 0);
    total_ids += s.doc_ids.size();
    EXPECT_LE(s.doc_ids.size(), 3u);
  }
  EXPECT_EQ(total_ids, 6u);
  EXPECT_EQ(out.label_counts.at(0), out.samples.size());
}

TEST(RouterShaping, LabelCountsAuditBalance) {
  Rng rng(5);
  std::vector<Document> docs;
  std::vector<ChunkSet> sets;
  std::map<int, std::size_t> docs_per_label;
  for (int i = 0; i < 40; ++i) {
    const std::size_t len = testing::uniform(rng, 60, 240);
    docs.push_back({"b" + std::to_string(i), std::string(len * 6, 'z'), {}});
    sets.push_back(chunks_of(docs.back(), std::vector<std::size_t>(6, len)));
    ++docs_per_label[GranularityLabel::from_mean_length(double(len)).value()];
  }
  const auto out = shape_router_texts(docs, sets, 1024);
  std::map<int, std::size_t> recount, ids;
  for (const auto& s : out.samples) {
    ++recount[s.label.value()];
    ids[s.label.value()] += s.doc_ids.size();
  }
  const std::map<int, std::size_t> reported(out.label_counts.begin(), out.label_counts.end());
  EXPECT_EQ(recount, reported);
  EXPECT_EQ(ids, docs_per_label);
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::size_t n = 0;
  io::for_each_record(p, [&](const json&, std::size_t) { ++n; });
  return n;
}

std::vector<ChunkerSample> balanced_samples(std::size_t per_label) {
  std::vector<ChunkerSample> out;
  for (int label = 0; label < 4; ++label) {
    for (std::size_t i = 0; i < per_label; ++i) {
      ChunkerSample s;
      s.doc_id = "doc-" + std::to_string(label) + "-" + std::to_string(i);
      s.label = GranularityLabel(label);
      s.prompt = "prompt " + s.doc_id;
      s.target.rules = {ChunkRule::anchored("Start", "[MASK]", "end."),
                        ChunkRule::literal_text("Tail.")};
      out.push_back(std::move(s));
    }
  }
  return out;
}

TEST(Emit, PartitionsByLabel) {
  TempDir dir;
  const auto chunker = balanced_samples(25);
  std::vector<RouterSample> router;
  for (const auto& s : chunker) router.push_back({"text of " + s.doc_id, s.label, {s.doc_id}});
  const json manifest = emit_training_sets(chunker, router, dir.path());
  std::set<std::string> seen;
  for (int k = 0; k < 4; ++k) {
    const auto path = dir / ("expert_" + std::to_string(k) + ".jsonl");
    EXPECT_EQ(count_lines(path), 25u);
    EXPECT_EQ(manifest["counts"]["expert_" + std::to_string(k)], 25);
    io::for_each_record(path, [&](const json& j, std::size_t) {
      EXPECT_EQ(j["label"], k);
      EXPECT_TRUE(seen.insert(j["doc_id"].get<std::string>()).second);
      ASSERT_EQ(j["rules"].size(), 2u);
      EXPECT_EQ(j["rules"][0]["prefix"], "Start");
      const json target = json::parse(j["target"].get<std::string>());
      EXPECT_EQ(target, json({"Start[MASK]end.", "Tail."}));
    });
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(count_lines(dir / "router.jsonl"), 100u);
  EXPECT_EQ(manifest["counts"]["router"], 100);
  EXPECT_EQ(manifest["input"]["chunker_samples"], 100);
  EXPECT_TRUE(manifest["warnings"].empty());
  EXPECT_EQ(json::parse(testing::read_file(dir / "manifest.json")), manifest);
}

TEST(Emit, OverlappingDocIdsAcrossBucketsFail) {
  TempDir dir;
  auto chunker = balanced_samples(2);
  chunker[0].doc_id = chunker.back().doc_id;
  try {
    emit_training_sets(chunker, {}, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invariant);
  }
  auto ok = balanced_samples(1);
  std::vector<RouterSample> router = {{"t", GranularityLabel(2), {ok[0].doc_id}}};
  EXPECT_THROW(emit_training_sets(ok, router, dir.path()), Error);
}

TEST(Emit, WarnsOnEmptyAndUnbalancedBuckets) {
  TempDir dir;
  auto chunker = balanced_samples(4);
  chunker.erase(chunker.begin() + 4, chunker.begin() + 8);  // no label 1
  json m = emit_training_sets(chunker, {}, dir.path());
  ASSERT_EQ(m["warnings"].size(), 1u);
  EXPECT_NE(m["warnings"][0].get<std::string>().find("bucket 1"), std::string::npos);

  auto skewed = balanced_samples(2);
  auto more = balanced_samples(6);
  for (auto& s : more) {
    if (s.label.value() == 3) {
      s.doc_id += "-x";
      skewed.push_back(s);
    }
  }
  m = emit_training_sets(skewed, {}, dir.path());
  ASSERT_EQ(m["warnings"].size(), 1u);
  EXPECT_NE(m["warnings"][0].get<std::string>().find("unbalanced"), std::string::npos);
}

TEST(ChunkerSamples, WholeChunksWithinTheWindowBudget) {
  Rng rng(9);
  Document doc{"cs", "", {}};
  std::vector<std::size_t> lengths;
  for (int i = 0; i < 30; ++i) {
    lengths.push_back(testing::uniform(rng, 25, 90));
    doc.text += letters(rng, lengths.back(), "abcdefghijklmnopqrstuvwxyz");
  }
  const ChunkSet cs = chunks_of(doc, lengths);
  WindowOptions w;
  w.max_tokens = 256;
  const auto samples = make_chunker_samples(doc, cs, w);
  std::size_t rules = 0;
  for (const auto& s : samples) {
    EXPECT_EQ(s.doc_id, "cs");
    EXPECT_EQ(s.label, label_granularity(cs));
    rules += s.target.rules.size();
    // Reconstruct the sample span from the rules and check the budget.
    const Extraction ex = extract_chunks(doc, s.target);
    const std::size_t span = ex.chunks.chunks.back().end - ex.chunks.chunks.front().start;
    EXPECT_LE(span, 256u);
    EXPECT_NE(s.prompt.find(doc.text.substr(ex.chunks.chunks.front().start, span)),
              std::string::npos);
  }
  EXPECT_EQ(rules, cs.size());
}

TEST(Distill, TaggedChunksAreParsedTrimmedAndTolerant) {
  EXPECT_EQ(parse_tagged_chunks("<chunk> a </chunk>\n<chunk>b</chunk><chunk>c"),
            (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(parse_tagged_chunks("nothing tagged").empty());
  const std::string prompt = render_distill_prompt("DOC");
  EXPECT_NE(prompt.find("<chunk> and </chunk>"), std::string::npos);
  EXPECT_NE(prompt.find("DOC"), std::string::npos);
}

TEST(Distill, VerdictsFlagTheAlteredChunk) {
  const Document doc{"dist",
                     "The river ran high that spring. Farmers moved their herds uphill. "
                     "Nobody remembered a flood like it.",
                     {}};
  FixtureGenerator gen;
  gen.add(render_distill_prompt(doc.text),
          "<chunk>The river ran high that spring.</chunk>\n"
          "<chunk>Farmers moved their herds uphill.</chunk>\n"
          "<chunk>Everyone agreed it was a historic and terrible event.</chunk>");
  const DistillResult r = distill_document(doc, gen);
  ASSERT_EQ(r.verdicts.size(), 3u);
  EXPECT_FALSE(r.verdicts[0].flagged);
  EXPECT_FALSE(r.verdicts[1].flagged);
  EXPECT_TRUE(r.verdicts[2].flagged);
  EXPECT_EQ(r.raw.size(), 1u);
  EXPECT_EQ(r.chunks.method, "distilled");
  ASSERT_GE(r.chunks.size(), 2u);
  EXPECT_EQ(r.chunks.chunks[0].text, "The river ran high that spring.");
  EXPECT_EQ(r.chunks.chunks[1].text, "Farmers moved their herds uphill.");
}

}  // namespace
}  // namespace moc
