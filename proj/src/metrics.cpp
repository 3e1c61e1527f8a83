#include "moc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "moc/error.hpp"
#include "moc/parallel.hpp"

namespace moc {
namespace {

void require_ppl(double ppl, double conditional_ppl) {
  require(std::isfinite(ppl) && ppl > 0.0, "perplexity must be positive");
  require(std::isfinite(conditional_ppl) && conditional_ppl > 0.0,
          "conditional perplexity must be positive");
}

void require_text(const Chunk& c) {
  require(!c.text.empty(), "chunk " + std::to_string(c.index) + " is empty");
}

}  // namespace

double boundary_clarity(double ppl, double conditional_ppl) {
  require_ppl(ppl, conditional_ppl);
  return conditional_ppl / ppl;
}

double boundary_clarity(const ScoredText& plain,
                        const ScoredText& conditioned) {
  return boundary_clarity(perplexity(plain), perplexity(conditioned));
}

double boundary_clarity(const Chunk& q, const Chunk& d, const Scorer& scorer) {
  require_text(q);
  require_text(d);
  return boundary_clarity(scorer.score(q.text), scorer.score(q.text, d.text));
}

double edge_weight(double ppl, double conditional_ppl) {
  require_ppl(ppl, conditional_ppl);
  return std::max(0.0, (ppl - conditional_ppl) / ppl);
}

double edge_weight(const ScoredText& plain, const ScoredText& conditioned) {
  return edge_weight(perplexity(plain), perplexity(conditioned));
}

double edge_weight(const Chunk& q, const Chunk& d, const Scorer& scorer) {
  require_text(q);
  require_text(d);
  return edge_weight(scorer.score(q.text), scorer.score(q.text, d.text));
}

double document_boundary_clarity(const ChunkSet& chunks, const Scorer& scorer,
                                 std::size_t concurrency) {
  const auto& c = chunks.chunks;
  require(c.size() >= 2, "boundary clarity needs at least two chunks");
  std::vector<double> values(c.size() - 1);
  parallel_for(values.size(), concurrency, [&](std::size_t i) {
    values[i] = boundary_clarity(c[i + 1], c[i], scorer);
  });
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / double(values.size());
}

std::vector<std::size_t> SemanticGraph::degrees() const {
  std::vector<std::size_t> deg(n, 0);
  for (const auto& e : edges) {
    ++deg[e.i];
    ++deg[e.j];
  }
  return deg;
}

SemanticGraph EdgeWeights::threshold(double k) const {
  require(k > 0.0 && k < 1.0, "K must lie in (0, 1)");
  SemanticGraph g{n, {}, spec};
  for (const auto& e : candidates) {
    if (e.weight > k) g.edges.push_back(e);
  }
  return g;
}

EdgeWeights compute_edge_weights(const ChunkSet& chunks, const Scorer& scorer,
                                 GraphSpec spec, std::size_t concurrency) {
  const auto& c = chunks.chunks;
  if (c.size() < 2) {
    throw Error(ErrorCode::degenerate_graph,
                "semantic graph needs at least two chunks, got " +
                    std::to_string(c.size()));
  }
  for (const auto& chunk : c) require_text(chunk);

  const std::size_t n = c.size();
  std::vector<double> plain(n);
  parallel_for(n, concurrency,
               [&](std::size_t i) { plain[i] = perplexity(scorer.score(c[i].text)); });

  EdgeWeights out{n, spec, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (spec.variant == GraphVariant::sequence && j - i <= spec.delta) {
        continue;
      }
      out.candidates.push_back({i, j, 0.0});
    }
  }
  parallel_for(out.candidates.size(), concurrency, [&](std::size_t k) {
    auto& e = out.candidates[k];
    // Later chunk q = d_j conditioned on the earlier d = d_i.
    const double forward =
        edge_weight(plain[e.j], perplexity(scorer.score(c[e.j].text, c[e.i].text)));
    if (spec.variant == GraphVariant::sequence) {
      e.weight = forward;
      return;
    }
    const double backward =
        edge_weight(plain[e.i], perplexity(scorer.score(c[e.i].text, c[e.j].text)));
    e.weight = std::max(forward, backward);
  });
  return out;
}

SemanticGraph build_graph(const ChunkSet& chunks, double k,
                          const Scorer& scorer, GraphSpec spec,
                          std::size_t concurrency) {
  require(k > 0.0 && k < 1.0, "K must lie in (0, 1)");
  return compute_edge_weights(chunks, scorer, spec, concurrency).threshold(k);
}

double chunk_stickiness(std::span<const std::size_t> degrees) {
  std::size_t twice_m = 0;
  for (auto h : degrees) twice_m += h;
  if (twice_m == 0) return 0.0;
  double entropy = 0.0;
  for (auto h : degrees) {
    if (h == 0) continue;
    const double p = double(h) / double(twice_m);
    entropy -= p * std::log2(p);
  }
  return entropy;
}

double chunk_stickiness(const SemanticGraph& graph) {
  const auto deg = graph.degrees();
  return chunk_stickiness(std::span<const std::size_t>(deg));
}

double dissimilarity(std::span<const Embedding> embeddings) {
  require(embeddings.size() >= 2, "dissimilarity needs at least two chunks");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < embeddings.size(); ++i) {
    const double sim = std::max(0.0, cosine(embeddings[i], embeddings[i + 1]));
    sum += 1.0 - sim;
  }
  return sum / double(embeddings.size() - 1);
}

double dissimilarity(const ChunkSet& chunks, const Embedder& embedder) {
  require(chunks.size() >= 2, "dissimilarity needs at least two chunks");
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks.chunks) texts.push_back(c.text);
  const auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::protocol, "embedder returned the wrong count");
  }
  return dissimilarity(std::span<const Embedding>(vectors));
}

double conditional_support(std::string_view answer,
                           std::span<const Chunk> retrieved,
                           const Scorer& scorer) {
  require(!answer.empty(), "answer is empty");
  std::string context;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    if (i) context += '\n';
    context += retrieved[i].text;
  }
  const ScoredText st = context.empty()
                            ? scorer.score(answer)
                            : scorer.score(answer, std::string_view(context));
  validate(st);
  double sum = 0.0;
  for (double lp : st.logprobs) sum += lp;
  return -sum / double(st.logprobs.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "pearson: sequences differ in length");
  require(x.size() >= 2, "pearson: need at least two observations");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::undefined_value,
                "pearson: zero variance, correlation undefined");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace moc
