#include "moc/windows.hpp"

#include <algorithm>
#include <cmath>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {

std::size_t WindowOptions::budget_chars() const {
  require(max_tokens >= 1, "max_tokens must be >= 1");
  require(chars_per_token > 0, "chars_per_token must be positive");
  const auto chars = static_cast<std::size_t>(
      std::floor(double(max_tokens) * chars_per_token + 1e-9));
  return std::max<std::size_t>(1, chars);
}

std::vector<Window> sliding_windows(const Document& doc,
                                    const WindowOptions& options) {
  require(!doc.text.empty(), "cannot window an empty document");
  const std::size_t budget = options.budget_chars();
  const std::string_view text = doc.text;
  const std::vector<std::size_t> offsets = utf8::char_offsets(text);
  const std::size_t n_chars = offsets.size() - 1;

  // Candidate cut points as byte offsets, ascending.
  std::vector<std::size_t> paragraph_ends;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\n' && text[i] != '\r') continue;
    std::size_t j = i;
    while (j < text.size() && (text[j] == '\n' || text[j] == '\r')) ++j;
    paragraph_ends.push_back(j);
    i = j - 1;
  }
  std::vector<std::size_t> sentence_ends;
  for (const auto& s : split_sentences(text, options.policy)) {
    if (s.terminal) sentence_ends.push_back(s.end);
  }
  // Last candidate in (lo, hi], or 0 when none.
  auto last_in = [](const std::vector<std::size_t>& v, std::size_t lo,
                    std::size_t hi) -> std::size_t {
    auto it = std::upper_bound(v.begin(), v.end(), hi);
    if (it == v.begin()) return 0;
    --it;
    return *it > lo ? *it : 0;
  };

  std::vector<Window> windows;
  std::size_t char_pos = 0;
  while (char_pos < n_chars) {
    const std::size_t start = offsets[char_pos];
    std::size_t end;
    if (n_chars - char_pos <= budget) {
      end = text.size();
    } else {
      const std::size_t limit = offsets[char_pos + budget];
      end = last_in(paragraph_ends, start, limit);
      if (!end) end = last_in(sentence_ends, start, limit);
      if (!end) end = limit;
    }
    windows.push_back(Window{doc.id, start, end, start, {}});
    char_pos = std::size_t(std::lower_bound(offsets.begin(), offsets.end(), end) -
                           offsets.begin());
  }
  return windows;
}

ChunkBuffer apply_chunk_buffer(ChunkSet prev, Window next,
                               const Document& doc) {
  require(!prev.empty(), "chunk buffer needs at least one chunk");
  ChunkBuffer out;
  if (prev.size() == 1) {
    out.notice = "window ending at " + std::to_string(next.start) +
                 " produced a single chunk; chunk buffer skipped";
    out.kept = std::move(prev);
    out.next = std::move(next);
    return out;
  }
  const Chunk last = prev.chunks.back();
  require(last.start < next.start, "carried chunk must precede the window");
  prev.chunks.pop_back();
  next.carried_start = last.start;
  next.carried_prefix = doc.text.substr(last.start, next.start - last.start);
  out.kept = std::move(prev);
  out.next = std::move(next);
  out.applied = true;
  return out;
}

}  // namespace moc
