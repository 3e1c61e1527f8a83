#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "moc/scoring.hpp"
#include "moc/text.hpp"

namespace moc {

enum class ChunkMethod { fixed, boundary, semantic, moc };

const char* to_string(ChunkMethod m) noexcept;
ChunkMethod parse_chunk_method(const std::string& name);

struct ChunkerConfig {
  ChunkMethod method = ChunkMethod::fixed;
  // Size knob for fixed (characters) and boundary (measure units).
  double target_len = 178;
  // Boundary-aware only.
  double overlap = 0;
  // Semantic only: split where adjacent-sentence cosine falls below this.
  double similarity_threshold = 0.5;
  LengthMeasure measure;
  SentencePolicy policy = SentencePolicy::defaults();
};

// Throws ErrorCode::precondition for target_len <= 0, overlap < 0,
// overlap >= target_len or a threshold outside [-1, 1].
void validate(const ChunkerConfig& config);

// Consecutive runs of exactly `length` code points; the last may be shorter.
ChunkSet chunk_fixed(const Document& doc, std::size_t length);

struct BoundaryChunking {
  ChunkSet set;
  // Indices of chunks holding a single sentence longer than the target.
  std::vector<std::size_t> oversize;
};

// Greedy sentence packing: whole sentences are added while the chunk stays
// within `target`; a sentence that alone exceeds it is emitted by itself.
// With overlap > 0 each new chunk re-includes trailing sentences of the
// previous one (up to `overlap` units), so chunks may overlap.
BoundaryChunking chunk_boundary_aware(
    const Document& doc, double target, double overlap = 0,
    const LengthMeasure& measure = {},
    const SentencePolicy& policy = SentencePolicy::defaults());

ChunkSet chunk_semantic(const Document& doc, const Embedder& embedder,
                        double threshold,
                        const SentencePolicy& policy = SentencePolicy::defaults());

// Dispatch for the three baseline methods. Needs `embedder` for semantic.
ChunkSet run_chunker(const ChunkerConfig& config, const Document& doc,
                     const Embedder* embedder = nullptr);

struct CalibrationReport {
  ChunkerConfig config;
  double achieved_mean = 0;
  bool converged = false;  // achieved_mean within tolerance of the target
  int iterations = 0;
};

// Searches the method's size knob until the corpus-wide mean chunk length
// (in code points) is within `tolerance` of `target_avg`. When that is not
// reachable the closest configuration is returned with converged == false.
CalibrationReport calibrate_avg_len(const ChunkerConfig& base,
                                    const std::vector<Document>& corpus,
                                    const Embedder* embedder = nullptr,
                                    double target_avg = 178,
                                    double tolerance = 5);

}  // namespace moc
