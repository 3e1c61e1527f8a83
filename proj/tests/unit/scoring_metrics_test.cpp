#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "moc/error.hpp"
#include "moc/metrics.hpp"
#include "moc/offline.hpp"
#include "moc/scoring.hpp"
#include "moc/text.hpp"
#include "support/synthetic.hpp"

namespace moc {
namespace {

using testing::Rng;

template <typename Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::invariant;
}

// Document whose chunks are the given texts, in order.
std::pair<Document, ChunkSet> doc_of(const std::vector<std::string>& texts) {
  Document doc{"doc", "", {}};
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& t : texts) {
    spans.emplace_back(doc.text.size(), doc.text.size() + t.size());
    doc.text += t;
  }
  ChunkSet set = make_chunk_set(doc, spans, "fixture");
  return {doc, set};
}

TEST(UniformScorer, EveryLogprobIsMinusLnV) {
  UniformScorer scorer(37);
  for (const std::string text : {"a", "hello world", "中文🙂"}) {
    const ScoredText st = scorer.score(text);
    EXPECT_EQ(st.logprobs.size(), st.tokens.size());
    for (double lp : st.logprobs) EXPECT_DOUBLE_EQ(lp, -std::log(37.0));
    EXPECT_NEAR(perplexity(st), 37.0, 1e-9);
  }
}

TEST(NGramScorer, OrderOneAddOneCounts) {
  NGramScorer scorer({"aab"}, {.order = 1});
  const ScoredText st = scorer.score("aab");
  ASSERT_EQ(st.logprobs.size(), 3u);
  EXPECT_NEAR(st.logprobs[0], std::log(3.0 / 5), 1e-12);
  EXPECT_NEAR(st.logprobs[1], std::log(3.0 / 5), 1e-12);
  EXPECT_NEAR(st.logprobs[2], std::log(2.0 / 5), 1e-12);
  const double expected =
      std::exp(-(std::log(0.6) + std::log(0.6) + std::log(0.4)) / 3);
  EXPECT_NEAR(perplexity(st), expected, 1e-12);
}

TEST(NGramScorer, DistributionSumsToOne) {
  Rng rng(5);
  const std::string train = "the cat sat on the mat. a dog ran!";
  for (std::size_t order : {1u, 2u, 3u}) {
    NGramScorer scorer({train}, {.order = order});
    std::u32string alphabet;
    for (char c : std::string("the cat sonmdgr.!a")) {
      if (alphabet.find(char32_t(c)) == std::u32string::npos) alphabet += char32_t(c);
    }
    for (int trial = 0; trial < 20; ++trial) {
      std::u32string history;
      for (std::size_t i = 0; i < testing::uniform(rng, 0, 4); ++i) {
        history += alphabet[testing::uniform(rng, 0, alphabet.size() - 1)];
      }
      double total = 0;
      for (char32_t c : alphabet) total += scorer.probability(history, c);
      EXPECT_EQ(alphabet.size(), scorer.alphabet_size());
      EXPECT_NEAR(total, 1.0, 1e-12) << "order " << order;
    }
  }
}

TEST(NGramScorer, ContextTokensAreExcluded) {
  NGramScorer scorer({"abcabc"}, {.order = 2, .cache_weight = 3});
  const ScoredText plain = scorer.score("abc");
  const ScoredText cond = scorer.score("abc", std::string_view("cab"));
  EXPECT_EQ(plain.tokens, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(cond.tokens, plain.tokens);
  EXPECT_EQ(cond.context_len, 3u);
  EXPECT_EQ(plain.context_len, 0u);
  EXPECT_FALSE(cond.truncated);
}

TEST(NGramScorer, DeterministicAndTruncatesLeft) {
  NGramScorer scorer({"abcabc"}, {.order = 2, .cache_weight = 0, .max_chars = 5});
  const ScoredText a = scorer.score("abc", std::string_view("cabcab"));
  const ScoredText b = scorer.score("abc", std::string_view("cabcab"));
  EXPECT_EQ(a.logprobs, b.logprobs);
  EXPECT_TRUE(a.truncated);
  EXPECT_EQ(a.context_len, 2u);
}

TEST(Scorers, EmptyTextIsPrecondition) {
  UniformScorer uniform(4);
  NGramScorer ngram({"ab"});
  EXPECT_EQ(error_code_of([&] { uniform.score(""); }), ErrorCode::precondition);
  EXPECT_EQ(error_code_of([&] { ngram.score(""); }), ErrorCode::precondition);
}

TEST(Perplexity, ClosedForms) {
  ScoredText uniform4{{"a", "b", "c"}, std::vector<double>(3, -std::log(4.0))};
  EXPECT_NEAR(perplexity(uniform4), 4.0, 1e-12);
  ScoredText geo{{"a", "b"}, {-std::log(2.0), -std::log(8.0)}};
  EXPECT_NEAR(perplexity(geo), 4.0, 1e-12);
}

TEST(Perplexity, InvariantUnderPermutation) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    ScoredText st;
    const std::size_t n = testing::uniform(rng, 1, 30);
    for (std::size_t i = 0; i < n; ++i) {
      st.tokens.push_back("t");
      st.logprobs.push_back(-std::uniform_real_distribution<double>(0, 6)(rng));
    }
    const double ppl = perplexity(st);
    std::shuffle(st.logprobs.begin(), st.logprobs.end(), rng);
    EXPECT_NEAR(perplexity(st), ppl, 1e-9 * ppl);
    EXPECT_GE(ppl, 1.0);
  }
}

TEST(Perplexity, RejectsBrokenScores) {
  ScoredText mismatch{{"a", "b"}, {-1.0}};
  EXPECT_EQ(error_code_of([&] { perplexity(mismatch); }), ErrorCode::protocol);
  ScoredText positive{{"a"}, {0.5}};
  EXPECT_EQ(error_code_of([&] { perplexity(positive); }), ErrorCode::protocol);
}

TEST(FixtureGenerator, ReturnsStoredResponseOrFails) {
  FixtureGenerator gen;
  gen.add("say hi", "hi");
  EXPECT_EQ(gen.generate("say hi").text, "hi");
  EXPECT_EQ(error_code_of([&] { gen.generate("say bye"); }), ErrorCode::no_fixture);
  gen.generate("say hi", GenerationParams{.temperature = 0.7});
  ASSERT_TRUE(gen.last_params());
  EXPECT_DOUBLE_EQ(gen.last_params()->temperature, 0.7);
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cosine(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 1.0, 1e-15);
  EXPECT_NEAR(cosine(std::vector<double>{1, 0}, std::vector<double>{-3, 0}), -1.0, 1e-15);
  EXPECT_EQ(error_code_of([] {
              cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0});
            }),
            ErrorCode::undefined_value);
}

TEST(Cosine, FixtureEmbedderMatchesHandComputedTable) {
  FixtureEmbedder emb;
  emb.add("x", {3, 4});
  emb.add("y", {4, 3});
  emb.add("z", {0, 2});
  const auto v = emb.embed({"x", "y", "z"});
  EXPECT_NEAR(cosine(v[0], v[1]), 24.0 / 25, 1e-15);
  EXPECT_NEAR(cosine(v[0], v[2]), 8.0 / 10, 1e-15);
  EXPECT_NEAR(cosine(v[1], v[2]), 6.0 / 10, 1e-15);
  EXPECT_EQ(error_code_of([&] { emb.embed_one("w"); }), ErrorCode::no_fixture);
}

TEST(BoundaryClarity, Examples) {
  EXPECT_DOUBLE_EQ(boundary_clarity(20, 20), 1.0);
  EXPECT_DOUBLE_EQ(boundary_clarity(20, 5), 0.25);
}

TEST(EdgeWeight, ExamplesAndClamp) {
  EXPECT_DOUBLE_EQ(edge_weight(10, 10), 0.0);
  EXPECT_DOUBLE_EQ(edge_weight(10, 2.5), 0.75);
  EXPECT_DOUBLE_EQ(edge_weight(10, 12), 0.0);
  Rng rng(2);
  std::uniform_real_distribution<double> ppl(1, 100);
  for (int i = 0; i < 1000; ++i) {
    const double a = ppl(rng), b = ppl(rng);
    const double e = edge_weight(a, b);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    EXPECT_NEAR(e, std::max(0.0, 1 - boundary_clarity(a, b)), 1e-15);
  }
}

TEST(BoundaryClarity, RepetitionExplainsBetterThanForeignText) {
  const std::string q = "abcab cabba bacca";
  const std::string foreign = "xyzzy yxzyx zzyxy";
  NGramScorer scorer({q + " " + foreign}, {.order = 2, .cache_weight = 5});
  auto [doc, set] = doc_of({q, q, foreign});
  const double repeated = boundary_clarity(set.chunks[0], set.chunks[1], scorer);
  const double unrelated = boundary_clarity(set.chunks[0], set.chunks[2], scorer);
  EXPECT_LT(repeated, unrelated);
  EXPECT_LT(repeated, 1.0);
}

// Table scorer that gives every chunk plain perplexity 10 and a conditional
// perplexity of 1 (edge 0.9) when `strong(q, d)` holds, 10 (edge 0) otherwise.
template <typename Strong>
TableScorer edge_table(const ChunkSet& set, Strong strong) {
  TableScorer t;
  for (const auto& q : set.chunks) {
    t.add_perplexity(q.text, std::nullopt, 10);
    for (const auto& d : set.chunks) {
      if (q.index == d.index) continue;
      t.add_perplexity(q.text, d.text, strong(q.index, d.index) ? 1.0 : 10.0);
    }
  }
  return t;
}

TEST(BuildGraph, TriangleAndEmpty) {
  auto [doc, set] = doc_of({"c0", "c1", "c2"});
  TableScorer table;
  for (const auto& q : set.chunks) {
    table.add_perplexity(q.text, std::nullopt, 10);
    for (const auto& d : set.chunks) {
      if (q.index != d.index) table.add_perplexity(q.text, d.text, 1.0);
    }
  }
  const SemanticGraph tri = build_graph(set, 0.8, table);
  EXPECT_EQ(tri.edges.size(), 3u);
  EXPECT_EQ(tri.degrees(), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_TRUE(build_graph(set, 0.95, table).edges.empty());
  EXPECT_DOUBLE_EQ(chunk_stickiness(build_graph(set, 0.95, table)), 0.0);
}

TEST(BuildGraph, SequenceConstrainedPath) {
  auto [doc, set] = doc_of({"c0", "c1", "c2", "c3"});
  const TableScorer table =
      edge_table(set, [](std::size_t q, std::size_t d) { return q == d + 1; });
  const SemanticGraph path =
      build_graph(set, 0.8, table, {GraphVariant::sequence, 0});
  ASSERT_EQ(path.edges.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(path.edges[e].i, e);
    EXPECT_EQ(path.edges[e].j, e + 1);
  }
  // Degrees 1,2,2,1 over 2m = 6.
  EXPECT_NEAR(chunk_stickiness(path),
              2 * (1.0 / 6) * std::log2(6.0) + 2 * (2.0 / 6) * std::log2(3.0), 1e-12);
  // With delta 1 adjacent pairs are no longer eligible.
  EXPECT_TRUE(build_graph(set, 0.8, table, {GraphVariant::sequence, 1}).edges.empty());
}

TEST(BuildGraph, CompleteTakesTheStrongerDirection) {
  auto [doc, set] = doc_of({"c0", "c1"});
  const TableScorer table =
      edge_table(set, [](std::size_t q, std::size_t) { return q == 0; });
  const auto weights = compute_edge_weights(set, table, {});
  ASSERT_EQ(weights.candidates.size(), 1u);
  EXPECT_NEAR(weights.candidates[0].weight, 0.9, 1e-12);
}

TEST(BuildGraph, DegenerateAndBadK) {
  auto [doc, set] = doc_of({"only"});
  UniformScorer scorer(4);
  EXPECT_EQ(error_code_of([&] { build_graph(set, 0.8, scorer); }),
            ErrorCode::degenerate_graph);
  auto [doc2, two] = doc_of({"ab", "cd"});
  EXPECT_EQ(error_code_of([&] { build_graph(two, 1.0, scorer); }),
            ErrorCode::precondition);
  EXPECT_EQ(error_code_of([&] { build_graph(two, 0.0, scorer); }),
            ErrorCode::precondition);
}

TEST(ChunkStickiness, ClosedForms) {
  for (std::size_t n = 2; n <= 12; ++n) {
    std::vector<std::size_t> deg(n, n - 1);
    EXPECT_NEAR(chunk_stickiness(deg), std::log2(double(n)), 1e-12);
  }
  EXPECT_DOUBLE_EQ(chunk_stickiness(std::vector<std::size_t>{1, 2, 1}), 1.5);
  EXPECT_DOUBLE_EQ(chunk_stickiness(std::vector<std::size_t>{0, 0, 0}), 0.0);
}

// Term-by-term sum over the degree multiset.
double stickiness_oracle(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> h(n, 0);
  for (auto [i, j] : edges) {
    h[i] += 1;
    h[j] += 1;
  }
  const double two_m = 2.0 * double(edges.size());
  double sum = 0;
  for (double hi : h) {
    if (hi == 0) continue;
    const double p = hi / two_m;
    sum -= p * std::log2(p);
  }
  return sum;
}

TEST(ChunkStickiness, MatchesBruteForceOnRandomGraphs) {
  Rng rng(21);
  for (int g = 0; g < 20; ++g) {
    const std::size_t n = testing::uniform(rng, 2, 15);
    SemanticGraph graph;
    graph.n = n;
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (testing::uniform(rng, 0, 2) == 0) {
          graph.edges.push_back({i, j, 1.0});
          edges.emplace_back(int(i), int(j));
        }
      }
    }
    const double got = chunk_stickiness(graph);
    EXPECT_NEAR(got, stickiness_oracle(n, edges), 1e-12);

    // Relabeling the nodes leaves the score unchanged.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    SemanticGraph relabeled;
    relabeled.n = n;
    for (const auto& e : graph.edges) {
      relabeled.edges.push_back({std::min(perm[e.i], perm[e.j]),
                                 std::max(perm[e.i], perm[e.j]), 1.0});
    }
    EXPECT_NEAR(chunk_stickiness(relabeled), got, 1e-12);
  }
}

TEST(ChunkStickiness, EdgeRemovalCanRaiseEntropy) {
  // K4 plus a disjoint edge, then the same graph with one K4 edge removed.
  const double before = chunk_stickiness(std::vector<std::size_t>{3, 3, 3, 3, 1, 1});
  const double after = chunk_stickiness(std::vector<std::size_t>{2, 2, 3, 3, 1, 1});
  EXPECT_NEAR(before, 4 * (3.0 / 14) * std::log2(14.0 / 3) + 2 * (1.0 / 14) * std::log2(14.0),
              1e-12);
  EXPECT_NEAR(after, 2 * (2.0 / 12) * std::log2(6.0) + 2 * (3.0 / 12) * 2 +
                         2 * (1.0 / 12) * std::log2(12.0),
              1e-12);
  EXPECT_GT(after, before);
}

TEST(Dissimilarity, Examples) {
  const std::vector<Embedding> same = {{1, 2}, {1, 2}, {1, 2}};
  EXPECT_NEAR(dissimilarity(same), 0.0, 1e-15);
  const std::vector<Embedding> orth = {{1, 0}, {0, 1}, {1, 0}};
  EXPECT_DOUBLE_EQ(dissimilarity(orth), 1.0);
  const std::vector<Embedding> opposite = {{1, 0}, {-1, 0}};
  EXPECT_DOUBLE_EQ(dissimilarity(opposite), 1.0);
}

TEST(Dissimilarity, FixtureSimilarities) {
  // cos(e0,e1) = 0.8 and cos(e1,e2) = 0.6.
  auto [doc, set] = doc_of({"one", "two", "three"});
  FixtureEmbedder emb;
  emb.add("one", {1, 0});
  emb.add("two", {0.8, 0.6});
  emb.add("three", {0, 1});
  EXPECT_NEAR(dissimilarity(set, emb), 0.3, 1e-12);
}

TEST(ConditionalSupport, Examples) {
  auto [doc, set] = doc_of({"first chunk", "second chunk"});
  TableScorer certain;
  certain.add("answer", std::string("first chunk\nsecond chunk"), {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(conditional_support("answer", set.chunks, certain), 0.0);

  UniformScorer uniform(26);
  EXPECT_NEAR(conditional_support("answer", set.chunks, uniform), std::log(26.0), 1e-12);
}

TEST(ConditionalSupport, CopiedAnswerIsBetterSupported) {
  const std::string answer = "glorp the zindle";
  auto [doc, set] = doc_of({"we saw glorp the zindle today", "nothing else here"});
  auto [doc2, other] = doc_of({"we saw a plain cat today", "nothing else here"});
  NGramScorer scorer({doc.text + doc2.text}, {.order = 3, .cache_weight = 5});
  const std::vector<Chunk> with{set.chunks[0]};
  const std::vector<Chunk> without{other.chunks[0]};
  EXPECT_LT(conditional_support(answer, with, scorer),
            conditional_support(answer, without, scorer));
}

TEST(Pearson, Examples) {
  const std::vector<double> rouge = {0.4213, 0.4326, 0.4131, 0.4351};
  EXPECT_NEAR(pearson(std::vector<double>{0.8049, 0.8455, 0.8140, 0.8641}, rouge),
              0.8776, 5e-4);
  EXPECT_NEAR(pearson(rouge, rouge), 1.0, 1e-12);
  EXPECT_EQ(error_code_of([&] {
              pearson(std::vector<double>{1, 1, 1, 1}, rouge);
            }),
            ErrorCode::undefined_value);
  EXPECT_EQ(error_code_of([&] { pearson(std::vector<double>{1, 2}, rouge); }),
            ErrorCode::precondition);
}

TEST(Pearson, AffineInvarianceAndSymmetry) {
  Rng rng(13);
  std::normal_distribution<double> z;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(8), y(8);
    for (auto& v : x) v = z(rng);
    for (auto& v : y) v = z(rng);
    const double r = pearson(x, y);
    EXPECT_LE(std::abs(r), 1.0);
    EXPECT_NEAR(pearson(y, x), r, 1e-12);
    std::vector<double> ax(x);
    for (auto& v : ax) v = 3.5 * v - 2;
    EXPECT_NEAR(pearson(ax, y), r, 1e-12);
    for (auto& v : ax) v = -v;
    EXPECT_NEAR(pearson(ax, y), -r, 1e-12);
  }
}

}  // namespace
}  // namespace moc
