#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace moc {

struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Document&, const Document&) = default;
};

// Throws ErrorCode::precondition unless the id is non-empty, the text is
// valid UTF-8 and non-blank.
void validate(const Document& doc);

struct Chunk {
  std::string doc_id;
  std::size_t index = 0;
  std::size_t start = 0;  // byte offset into Document::text
  std::size_t end = 0;    // exclusive
  std::string text;

  std::size_t size() const noexcept { return end - start; }
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkSet {
  std::string doc_id;
  std::vector<Chunk> chunks;
  std::string method;

  std::size_t size() const noexcept { return chunks.size(); }
  bool empty() const noexcept { return chunks.empty(); }
  friend bool operator==(const ChunkSet&, const ChunkSet&) = default;
};

// Builds a chunk over doc.text[start, end), checking the span.
Chunk make_chunk(const Document& doc, std::size_t index, std::size_t start,
                 std::size_t end);

// Builds a ChunkSet from ordered (start, end) spans; indices are assigned in
// order.
ChunkSet make_chunk_set(
    const Document& doc,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    std::string method);

// Re-slices chunk texts from the document (used after loading offsets only).
void attach_text(ChunkSet& set, const Document& doc);

struct ChunkSetRules {
  // When false, chunks may overlap as long as starts strictly increase.
  bool disjoint = true;
};

// Throws ErrorCode::invariant on the first violation.
void validate(const ChunkSet& set, const Document& doc,
              ChunkSetRules rules = {});

// Mean chunk length in code points; 0 for an empty set.
double mean_chunk_length(const ChunkSet& set);

struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<char32_t> terminal;

  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

// Which characters end a sentence. ASCII terminals only split when followed by
// whitespace or end of text so "3.14" stays intact; CJK terminals always split.
struct SentencePolicy {
  std::set<char32_t> terminals;
  std::set<char32_t> closers;
  bool split_on_newlines = true;
  bool ascii_needs_space = true;

  static SentencePolicy defaults();
};

std::vector<SentenceSpan> split_sentences(std::string_view text,
                                          const SentencePolicy& policy =
                                              SentencePolicy::defaults());
std::vector<SentenceSpan> split_sentences(const Document& doc,
                                          const SentencePolicy& policy =
                                              SentencePolicy::defaults());

// Length of text in the configured unit. Token counts use a characters-per-
// token proxy since the backend tokenizer is remote.
struct LengthMeasure {
  enum class Unit { characters, tokens };
  Unit unit = Unit::characters;
  double chars_per_token = 1.0;

  double operator()(std::string_view text) const;
};

}  // namespace moc
