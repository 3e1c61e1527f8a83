#pragma once

// Mixture-of-chunkers inference: a granularity router picks one of four
// chunking experts; the expert emits anchor rules ("start <placeholder> end")
// which are resolved against the source text, with edit-distance recovery
// for anchors the model did not copy exactly.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moc/scoring.hpp"
#include "moc/text.hpp"

namespace moc {

// Average chunk length class: 0 -> (0,120], 1 -> (120,150], 2 -> (150,180],
// 3 -> (180, inf), in characters.
class GranularityLabel {
 public:
  explicit GranularityLabel(int value);

  static GranularityLabel from_mean_length(double mean_chars);

  int value() const noexcept { return value_; }
  // Lower (exclusive) and upper (inclusive) bound; upper is +inf for 3.
  std::pair<double, double> interval() const noexcept;

  friend bool operator==(GranularityLabel, GranularityLabel) = default;

 private:
  int value_;
};

inline constexpr std::array<std::string_view, 8> kPlaceholders = {
    "<omitted>", "<ellipsis>", "[MASK]", "[ELLIPSIS]",
    ".*?",       "<...>",      "<.*>",   "<pad>"};
inline constexpr std::string_view kDefaultPlaceholder = "[MASK]";

bool is_placeholder(std::string_view s) noexcept;

// One "S r E" element. Literal rules carry the whole chunk text in `prefix`
// and have no placeholder or suffix.
struct ChunkRule {
  std::string prefix;
  std::string placeholder;
  std::string suffix;
  bool literal = false;

  static ChunkRule anchored(std::string prefix, std::string placeholder,
                            std::string suffix);
  static ChunkRule literal_text(std::string text);

  std::string render() const;
  friend bool operator==(const ChunkRule&, const ChunkRule&) = default;
};

struct RuleList {
  std::vector<ChunkRule> rules;
  std::string model;
  std::string raw;  // the generation the rules were parsed from
  std::optional<GranularityLabel> label;
};

// Splits one list element at its first placeholder (any of the eight).
// Elements without a placeholder become literal rules.
ChunkRule parse_rule(std::string_view element);

// Parses a bracketed list of quoted rule strings. Accepts strict JSON and
// falls back to a lenient scan of quoted strings (trailing commas, raw
// newlines). Throws ParseError with the raw text attached.
RuleList parse_rule_list(std::string_view generation);

// The expert's chunking instruction with the document appended.
std::string render_chunking_prompt(std::string_view text,
                                   std::string_view placeholder =
                                       kDefaultPlaceholder);

struct RuleGenerationOptions {
  std::string placeholder = std::string(kDefaultPlaceholder);
  GenerationParams params;  // chunking defaults: temperature 0.1, top_p 0.1
};

RuleList generate_rules(std::string_view text, GranularityLabel label,
                        const Generator& generator,
                        const RuleGenerationOptions& options = {});

// ---- routing ----

extern const char* const kDefaultRoutingPrompt;

struct RouterConfig {
  // "{text}" is replaced by the input text.
  std::string prompt_template = kDefaultRoutingPrompt;
};

std::string render_routing_prompt(std::string_view text,
                                  const RouterConfig& config = {});

// Argmax over the four label probabilities; ties go to the smaller label.
// Missing entries are ignored; all missing throws ErrorCode::routing.
GranularityLabel argmax_label(
    const std::array<std::optional<double>, 4>& probabilities);

// Probability of each label token "0".."3" as the continuation of the
// routing prompt, read from the scorer.
std::array<std::optional<double>, 4> label_probabilities(
    std::string_view text, const Scorer& scorer,
    const RouterConfig& config = {});

GranularityLabel route(std::string_view text, const Scorer& scorer,
                       const RouterConfig& config = {});

// ---- extraction ----

enum class MatchMode { exact, recovered, failed };
const char* to_string(MatchMode mode) noexcept;

struct AnchorResolution {
  MatchMode mode = MatchMode::failed;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t distance = 0;
};

struct RuleOutcome {
  std::size_t rule_index = 0;
  MatchMode mode = MatchMode::failed;  // worst of the two anchors
  AnchorResolution prefix;
  std::optional<AnchorResolution> suffix;  // absent for literal rules
  std::size_t distance = 0;                // sum over anchors
  std::optional<std::pair<std::size_t, std::size_t>> span;
};

struct ExtractionReport {
  std::vector<RuleOutcome> rules;

  std::size_t count(MatchMode mode) const;
};

struct Extraction {
  ChunkSet chunks;
  ExtractionReport report;
};

struct ExtractOptions {
  double max_ratio = 0.5;
  std::string method = "moc";
};

// Resolves rules in order against doc.text[region_start, region_end) with a
// forward-only cursor: the prefix is searched from the cursor, the suffix
// after the prefix's end; exact search first, then recover_anchor. Rules that
// cannot be located are skipped and reported; more than half failing throws
// ErrorCode::extraction.
Extraction extract_chunks(const Document& doc, const RuleList& rules,
                          std::size_t region_start, std::size_t region_end,
                          const ExtractOptions& options = {});
Extraction extract_chunks(const Document& doc, const RuleList& rules,
                          const ExtractOptions& options = {});

}  // namespace moc
