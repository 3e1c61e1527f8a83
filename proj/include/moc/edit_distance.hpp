#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace moc {

// Full (|A|+1) x (|B|+1) Levenshtein table over code points:
// ab[i][j] = edits turning A[0..i) into B[0..j).
class EditDistanceTable {
 public:
  EditDistanceTable(std::u32string_view a, std::u32string_view b);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t at(std::size_t i, std::size_t j) const {
    return cells_[i * cols_ + j];
  }
  std::size_t distance() const { return at(rows_ - 1, cols_ - 1); }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::size_t> cells_;
};

// Two-row Levenshtein distance (unit insert/delete/substitute).
std::size_t edit_distance(std::u32string_view a, std::u32string_view b);
// Same, over the code points of two UTF-8 strings.
std::size_t edit_distance(std::string_view a, std::string_view b);

// A located span of the haystack, in byte offsets of the full haystack.
struct AnchorMatch {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t distance = 0;

  friend bool operator==(const AnchorMatch&, const AnchorMatch&) = default;
};

// Non-empty substring of haystack[search_from..] closest to `needle` in edit
// distance. Ties go to the earliest start, then to the length closest to the
// needle's length, then to the shorter span. O(|needle| * |haystack|).
AnchorMatch best_substring_match(std::string_view needle,
                                 std::string_view haystack,
                                 std::size_t search_from = 0);

// best_substring_match with a distance budget of ceil(max_ratio * |anchor|).
// Throws ErrorCode::no_match when the best span is over budget.
AnchorMatch recover_anchor(std::string_view anchor, std::string_view haystack,
                           std::size_t search_from = 0,
                           double max_ratio = 0.5);

}  // namespace moc
