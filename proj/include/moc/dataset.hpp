#pragma once

// Training-data distillation: window a corpus, have a strong generator chunk
// it, flag hallucinated chunks, turn chunks into anchor rules, label
// granularity and write per-label training sets.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "moc/moc.hpp"
#include "moc/windows.hpp"

namespace moc {

struct CleaningVerdict {
  std::size_t chunk_index = 0;
  std::size_t min_edit_distance = 0;
  double threshold = 0;  // ceil(10% of the chunk length in code points)
  bool flagged = false;  // min_edit_distance > threshold
  std::size_t start = 0;  // closest source span
  std::size_t end = 0;
};

inline constexpr double kHallucinationRatio = 0.10;

CleaningVerdict detect_hallucination(std::string_view generated_chunk,
                                     const Document& doc,
                                     std::size_t chunk_index = 0);

// First / last `anchor_len` code points of each chunk around `placeholder`;
// chunks of at most 2 * anchor_len code points become literal rules.
RuleList make_rules(const ChunkSet& chunks, std::size_t anchor_len = 10,
                    std::string_view placeholder = kDefaultPlaceholder);

GranularityLabel label_granularity(const ChunkSet& chunks);

struct RouterSample {
  std::string text;
  GranularityLabel label{0};
  std::vector<std::string> doc_ids;
};

struct ChunkerSample {
  std::string doc_id;
  GranularityLabel label{0};
  std::string prompt;
  RuleList target;
};

struct RouterShaping {
  std::vector<RouterSample> samples;
  std::vector<std::string> notices;
  std::map<int, std::size_t> label_counts;
};

// Builds ~target_chars router texts from whole chunks: long documents are
// cut to the chunk count whose length is closest to the target, short
// documents with the same label are concatenated. Documents whose smallest
// chunk exceeds twice the target are skipped with a notice.
RouterShaping shape_router_texts(const std::vector<Document>& docs,
                                 const std::vector<ChunkSet>& chunksets,
                                 std::size_t target_chars = 1024);

// One expert sample per window of the document: the chunking prompt over the
// window text and the rules of the chunks inside it.
std::vector<ChunkerSample> make_chunker_samples(
    const Document& doc, const ChunkSet& chunks,
    const WindowOptions& windows = {}, std::size_t anchor_len = 10,
    std::string_view placeholder = kDefaultPlaceholder);

struct EmitOptions {
  // Warn when the largest bucket exceeds this multiple of the smallest.
  double imbalance_ratio = 1.5;
  nlohmann::json parameters = nlohmann::json::object();
};

// Writes expert_<label>.jsonl for each label, router.jsonl and
// manifest.json under out_dir; returns the manifest. Throws
// ErrorCode::invariant when one document feeds two label buckets.
nlohmann::json emit_training_sets(const std::vector<ChunkerSample>& chunker,
                                  const std::vector<RouterSample>& router,
                                  const std::filesystem::path& out_dir,
                                  const EmitOptions& options = {});

// ---- distillation ----

std::string render_distill_prompt(std::string_view text);

// Text between <chunk> and </chunk> tags, whitespace-trimmed.
std::vector<std::string> parse_tagged_chunks(std::string_view generation);

struct DistillResult {
  ChunkSet chunks;
  std::vector<CleaningVerdict> verdicts;
  std::vector<std::string> raw;  // one generation per window
  std::vector<std::string> notices;
};

DistillResult distill_document(const Document& doc, const Generator& generator,
                               const WindowOptions& windows = {},
                               const GenerationParams& params = {});

}  // namespace moc
