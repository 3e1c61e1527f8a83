#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "moc/moc.hpp"
#include "moc/windows.hpp"

namespace moc {

// One generator per granularity label; entries may alias the same backend.
struct Experts {
  std::array<const Generator*, 4> by_label{};

  const Generator& at(GranularityLabel label) const;
  bool complete() const noexcept;
};

struct MocOptions {
  WindowOptions windows;
  RouterConfig router;
  RuleGenerationOptions generation;
  ExtractOptions extract;
  // Used when the router yields no label probabilities.
  std::optional<GranularityLabel> fallback_label;
};

struct WindowReport {
  std::size_t index = 0;
  std::size_t region_start = 0;  // includes any carried prefix
  std::size_t region_end = 0;
  std::optional<GranularityLabel> label;
  RuleList rules;
  ExtractionReport extraction;
  bool buffered = false;  // last chunk re-offered to the next window
  std::string error;
};

struct MocResult {
  ChunkSet chunks;
  std::vector<WindowReport> windows;
  std::vector<std::string> notices;
};

// Windows the document, routes each window, asks the chosen expert for
// rules, extracts them and stitches the windows with the chunk buffer. A
// failing window is reported and skipped; the document fails (ErrorCode::
// extraction) only when every window fails.
MocResult moc_chunk(const Document& doc, const Scorer& router,
                    const Experts& experts, const MocOptions& options = {});

}  // namespace moc
