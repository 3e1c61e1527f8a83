#include "moc/edit_distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {
namespace {

// One column step of the approximate-substring DP (free start in the text):
// column[i] = min edits turning pattern[0..i) into a suffix of text[0..j).
void sellers_step(std::u32string_view pattern, char32_t c,
                  std::vector<std::size_t>& column) {
  std::size_t diagonal = column[0];
  column[0] = 0;
  for (std::size_t i = 1; i <= pattern.size(); ++i) {
    const std::size_t up = column[i];
    if (pattern[i - 1] == c) {
      column[i] = diagonal;
    } else {
      column[i] = 1 + std::min({diagonal, up, column[i - 1]});
    }
    diagonal = up;
  }
}

}  // namespace

EditDistanceTable::EditDistanceTable(std::u32string_view a,
                                     std::u32string_view b)
    : rows_(a.size() + 1), cols_(b.size() + 1), cells_(rows_ * cols_) {
  auto cell = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return cells_[i * cols_ + j];
  };
  for (std::size_t j = 0; j < cols_; ++j) cell(0, j) = j;
  for (std::size_t i = 0; i < rows_; ++i) cell(i, 0) = i;
  for (std::size_t i = 1; i < rows_; ++i) {
    for (std::size_t j = 1; j < cols_; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cell(i, j) = cell(i - 1, j - 1);
      } else {
        cell(i, j) =
            1 + std::min({cell(i - 1, j), cell(i, j - 1), cell(i - 1, j - 1)});
      }
    }
  }
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      if (a[i - 1] == b[j - 1]) {
        row[j] = diagonal;
      } else {
        row[j] = 1 + std::min({diagonal, up, row[j - 1]});
      }
      diagonal = up;
    }
  }
  return row[b.size()];
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  return edit_distance(utf8::decode(a), utf8::decode(b));
}

AnchorMatch best_substring_match(std::string_view needle,
                                 std::string_view haystack,
                                 std::size_t search_from) {
  require(!needle.empty(), "anchor is empty");
  require(search_from < haystack.size(), "search start is past the haystack");
  require(utf8::is_boundary(haystack, search_from),
          "search start splits a UTF-8 sequence");

  const std::u32string pattern = utf8::decode(needle);
  const std::string_view tail = haystack.substr(search_from);
  const std::u32string text = utf8::decode(tail);
  const std::vector<std::size_t> offsets = utf8::char_offsets(tail);
  const std::size_t m = pattern.size();
  const std::size_t n = text.size();

  // Forward pass: the best distance to any substring.
  std::vector<std::size_t> column(m + 1);
  for (std::size_t i = 0; i <= m; ++i) column[i] = i;
  std::size_t best = m;
  for (std::size_t j = 0; j < n; ++j) {
    sellers_step(pattern, text[j], column);
    best = std::min(best, column[m]);
  }

  // Reverse pass over reversed strings: from_start[s] is the best distance
  // of any substring beginning at s.
  const std::u32string rpattern(pattern.rbegin(), pattern.rend());
  std::vector<std::size_t> from_start(n + 1, m);
  for (std::size_t i = 0; i <= m; ++i) column[i] = i;
  for (std::size_t j = 0; j < n; ++j) {
    sellers_step(rpattern, text[n - 1 - j], column);
    from_start[n - 1 - j] = column[m];
  }

  // Earliest start reaching `best` with a non-empty span; among its lengths
  // prefer the one closest to the needle's length, then the shorter.
  std::vector<std::size_t> row(m + 1);
  for (std::size_t s = 0; s < n; ++s) {
    if (from_start[s] != best) continue;
    const std::size_t max_len = std::min(n - s, m + best);
    for (std::size_t i = 0; i <= m; ++i) row[i] = i;
    std::size_t chosen = 0;
    std::size_t chosen_gap = std::numeric_limits<std::size_t>::max();
    for (std::size_t len = 1; len <= max_len; ++len) {
      // row[i] = ed(pattern[0..i), text[s..s+len)).
      std::size_t diagonal = row[0];
      row[0] = len;
      for (std::size_t i = 1; i <= m; ++i) {
        const std::size_t up = row[i];
        row[i] = pattern[i - 1] == text[s + len - 1]
                     ? diagonal
                     : 1 + std::min({diagonal, up, row[i - 1]});
        diagonal = up;
      }
      if (row[m] == best) {
        const std::size_t gap = len > m ? len - m : m - len;
        if (gap < chosen_gap) {
          chosen_gap = gap;
          chosen = len;
        }
      }
    }
    if (chosen > 0) {
      return AnchorMatch{search_from + offsets[s],
                         search_from + offsets[s + chosen], best};
    }
  }
  // Only reachable when the needle is no closer to any non-empty span than
  // to the empty one; fall back to a single-character substitution span.
  return AnchorMatch{search_from, search_from + offsets[1], m};
}

AnchorMatch recover_anchor(std::string_view anchor, std::string_view haystack,
                           std::size_t search_from, double max_ratio) {
  require(max_ratio >= 0, "max_ratio must be non-negative");
  const std::size_t len = utf8::length(anchor);
  const auto budget =
      static_cast<std::size_t>(std::ceil(max_ratio * double(len) - 1e-9));
  const AnchorMatch match = best_substring_match(anchor, haystack, search_from);
  if (match.distance > budget) {
    throw Error(ErrorCode::no_match,
                "no span within distance " + std::to_string(budget) +
                    " of anchor '" + std::string(anchor) + "' (best " +
                    std::to_string(match.distance) + ")");
  }
  return match;
}

}  // namespace moc
