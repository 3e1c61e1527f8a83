#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "moc/text.hpp"

namespace moc {

struct WindowOptions {
  std::size_t max_tokens = 1024;
  // Token proxy: tokens = characters / chars_per_token.
  double chars_per_token = 1.0;
  SentencePolicy policy = SentencePolicy::defaults();

  // Largest window in code points.
  std::size_t budget_chars() const;
};

// A subsequence of a document handed to a chunker. When a chunk buffer is in
// effect the model sees doc.text[carried_start, end): the re-offered text
// followed by the window proper.
struct Window {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t carried_start = 0;  // == start when nothing is carried
  std::string carried_prefix;

  std::size_t text_start() const noexcept { return carried_start; }
};

// Tiles the document with windows of at most max_tokens (proxy) each. A cut
// goes after the last paragraph break within budget, else after the last
// sentence end, else exactly at the budget.
std::vector<Window> sliding_windows(const Document& doc,
                                    const WindowOptions& options = {});

struct ChunkBuffer {
  ChunkSet kept;
  Window next;
  bool applied = false;
  std::string notice;
};

// Drops the last chunk of `prev` and re-offers its text (plus any skipped
// separator before the window) as the prefix of `next`. A single-chunk set
// is left alone with a notice.
ChunkBuffer apply_chunk_buffer(ChunkSet prev, Window next, const Document& doc);

}  // namespace moc
