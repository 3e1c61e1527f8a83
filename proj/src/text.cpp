#include "moc/text.hpp"

#include <algorithm>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {
namespace {

bool is_blank(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!utf8::is_space(utf8::next(s, i))) return false;
  }
  return true;
}

bool is_newline(char32_t cp) { return cp == U'\n' || cp == U'\r'; }

}  // namespace

void validate(const Document& doc) {
  require(!doc.id.empty(), "document id is empty");
  require(utf8::is_valid(doc.text),
          "document '" + doc.id + "' is not valid UTF-8");
  require(!is_blank(doc.text), "document '" + doc.id + "' has no text");
}

Chunk make_chunk(const Document& doc, std::size_t index, std::size_t start,
                 std::size_t end) {
  if (!(start < end && end <= doc.text.size()) ||
      !utf8::is_boundary(doc.text, start) || !utf8::is_boundary(doc.text, end)) {
    throw Error(ErrorCode::invariant,
                "invalid chunk span [" + std::to_string(start) + ", " +
                    std::to_string(end) + ") in document '" + doc.id + "'");
  }
  return Chunk{doc.id, index, start, end, doc.text.substr(start, end - start)};
}

ChunkSet make_chunk_set(
    const Document& doc,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    std::string method) {
  ChunkSet set{doc.id, {}, std::move(method)};
  set.chunks.reserve(spans.size());
  for (const auto& [start, end] : spans) {
    set.chunks.push_back(make_chunk(doc, set.chunks.size(), start, end));
  }
  return set;
}

void attach_text(ChunkSet& set, const Document& doc) {
  for (auto& c : set.chunks) c = make_chunk(doc, c.index, c.start, c.end);
}

void validate(const ChunkSet& set, const Document& doc, ChunkSetRules rules) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::invariant,
                "chunk set for '" + set.doc_id + "': " + what);
  };
  if (set.doc_id != doc.id) fail("document id mismatch ('" + doc.id + "')");
  std::size_t prev_start = 0;
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < set.chunks.size(); ++i) {
    const Chunk& c = set.chunks[i];
    const std::string where = "chunk " + std::to_string(i);
    if (c.doc_id != doc.id) fail(where + " belongs to '" + c.doc_id + "'");
    if (c.index != i) fail(where + " has index " + std::to_string(c.index));
    if (!(c.start < c.end && c.end <= doc.text.size())) fail(where + " span");
    if (!utf8::is_boundary(doc.text, c.start) ||
        !utf8::is_boundary(doc.text, c.end)) {
      fail(where + " splits a UTF-8 sequence");
    }
    if (doc.text.compare(c.start, c.end - c.start, c.text) != 0) {
      fail(where + " text differs from the source slice");
    }
    if (i > 0) {
      if (rules.disjoint ? c.start < prev_end : c.start <= prev_start) {
        fail(where + " overlaps or is out of order");
      }
    }
    prev_start = c.start;
    prev_end = c.end;
  }
}

double mean_chunk_length(const ChunkSet& set) {
  if (set.chunks.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : set.chunks) total += double(utf8::length(c.text));
  return total / double(set.chunks.size());
}

SentencePolicy SentencePolicy::defaults() {
  SentencePolicy p;
  p.terminals = {U'.', U'!', U'?', U';', U'。', U'！', U'？', U'；'};
  p.closers = {U'"', U'\'', U')', U']', U'}', U'”', U'’',
               U'」', U'』', U'）', U'】', U'》'};
  return p;
}

std::vector<SentenceSpan> split_sentences(std::string_view text,
                                          const SentencePolicy& policy) {
  std::vector<SentenceSpan> spans;
  std::size_t start = 0;
  std::size_t i = 0;
  auto peek = [&](std::size_t at) {
    std::size_t probe = at;
    return utf8::next(text, probe);
  };
  auto emit = [&](std::size_t end, std::optional<char32_t> terminal) {
    if (end > start) spans.push_back({start, end, terminal});
    start = end;
  };
  while (i < text.size()) {
    const char32_t cp = utf8::next(text, i);

    if (policy.terminals.count(cp)) {
      // Runs like "?!" or "..." close one sentence.
      std::size_t j = i;
      char32_t last = cp;
      while (j < text.size() && policy.terminals.count(peek(j))) {
        last = peek(j);
        utf8::next(text, j);
      }
      while (j < text.size() && policy.closers.count(peek(j))) {
        utf8::next(text, j);
      }
      const bool ascii = last < 0x80;
      const bool at_end = j >= text.size();
      if (ascii && policy.ascii_needs_space && !at_end &&
          !utf8::is_space(peek(j))) {
        i = j;
        continue;
      }
      // A newline run directly after the terminal stays with this sentence.
      if (policy.split_on_newlines) {
        while (j < text.size() && is_newline(peek(j))) utf8::next(text, j);
      }
      emit(j, last);
      i = j;
      continue;
    }

    if (policy.split_on_newlines && is_newline(cp)) {
      std::size_t j = i;
      while (j < text.size() && is_newline(peek(j))) utf8::next(text, j);
      emit(j, std::nullopt);
      i = j;
      continue;
    }
  }
  emit(text.size(), std::nullopt);
  return spans;
}

std::vector<SentenceSpan> split_sentences(const Document& doc,
                                          const SentencePolicy& policy) {
  return split_sentences(doc.text, policy);
}

double LengthMeasure::operator()(std::string_view text) const {
  const double chars = double(utf8::length(text));
  if (unit == Unit::characters) return chars;
  require(chars_per_token > 0.0, "chars_per_token must be positive");
  return chars / chars_per_token;
}

}  // namespace moc
