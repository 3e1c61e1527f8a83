#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "moc/scoring.hpp"
#include "moc/text.hpp"

namespace moc {

// Boundary clarity ppl(q|d) / ppl(q): near 1 when q is independent of d,
// towards 0 when d explains q.
double boundary_clarity(double ppl, double conditional_ppl);
double boundary_clarity(const ScoredText& plain, const ScoredText& conditioned);
double boundary_clarity(const Chunk& q, const Chunk& d, const Scorer& scorer);

// Relative perplexity reduction (ppl(q) - ppl(q|d)) / ppl(q), clamped at 0 so
// that it stays in [0, 1] when context hurts.
double edge_weight(double ppl, double conditional_ppl);
double edge_weight(const ScoredText& plain, const ScoredText& conditioned);
double edge_weight(const Chunk& q, const Chunk& d, const Scorer& scorer);

// Mean boundary clarity over adjacent pairs, scoring the later chunk given
// the earlier one. Needs at least two chunks.
double document_boundary_clarity(const ChunkSet& chunks, const Scorer& scorer,
                                 std::size_t concurrency = 1);

enum class GraphVariant { complete, sequence };

struct GraphSpec {
  GraphVariant variant = GraphVariant::complete;
  // Sequence variant only: pairs (i, j) are eligible when j - i > delta.
  std::size_t delta = 0;
};

struct WeightedEdge {
  std::size_t i = 0;
  std::size_t j = 0;  // i < j
  double weight = 0.0;
};

struct SemanticGraph {
  std::size_t n = 0;
  std::vector<WeightedEdge> edges;
  GraphSpec spec;

  std::vector<std::size_t> degrees() const;
};

// Every eligible pair with its weight, before thresholding. For the complete
// variant the weight is the larger of the two conditional directions; for
// the sequence variant it is Edge(d_j | d_i), reading order.
struct EdgeWeights {
  std::size_t n = 0;
  GraphSpec spec;
  std::vector<WeightedEdge> candidates;

  // Keeps edges with weight > k. Larger k yields a subgraph.
  SemanticGraph threshold(double k) const;
};

EdgeWeights compute_edge_weights(const ChunkSet& chunks, const Scorer& scorer,
                                 GraphSpec spec, std::size_t concurrency = 1);

SemanticGraph build_graph(const ChunkSet& chunks, double k,
                          const Scorer& scorer, GraphSpec spec = {},
                          std::size_t concurrency = 1);

// Degree-distribution entropy in bits: -sum (h_i/2m) log2(h_i/2m). Isolated
// nodes contribute nothing and an edgeless graph scores 0.
double chunk_stickiness(const SemanticGraph& graph);
double chunk_stickiness(std::span<const std::size_t> degrees);

// Mean of 1 - cosine over adjacent chunk embeddings. Negative similarities
// count as 0 so the result stays in [0, 1].
double dissimilarity(std::span<const Embedding> embeddings);
double dissimilarity(const ChunkSet& chunks, const Embedder& embedder);

// -(1/M) sum log P(a_i | retrieved chunks), retrieved texts joined by "\n".
double conditional_support(std::string_view answer,
                           std::span<const Chunk> retrieved,
                           const Scorer& scorer);

// Sample Pearson correlation.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace moc
