#include "moc/pipeline.hpp"

#include "moc/error.hpp"

namespace moc {

const Generator& Experts::at(GranularityLabel label) const {
  const Generator* g = by_label[std::size_t(label.value())];
  if (!g) {
    throw Error(ErrorCode::config, "no expert configured for label " +
                                       std::to_string(label.value()));
  }
  return *g;
}

bool Experts::complete() const noexcept {
  for (const auto* g : by_label) {
    if (!g) return false;
  }
  return true;
}

MocResult moc_chunk(const Document& doc, const Scorer& router,
                    const Experts& experts, const MocOptions& options) {
  if (!experts.complete()) {
    throw Error(ErrorCode::config, "all four chunking experts must be set");
  }
  validate(doc);
  const std::vector<Window> windows = sliding_windows(doc, options.windows);

  MocResult result;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::optional<std::pair<std::size_t, std::size_t>> pending;
  std::size_t failures = 0;

  for (std::size_t w = 0; w < windows.size(); ++w) {
    Window window = windows[w];
    if (pending) {
      window.carried_start = pending->first;
      window.carried_prefix =
          doc.text.substr(pending->first, window.start - pending->first);
    }
    WindowReport report;
    report.index = w;
    report.region_start = window.text_start();
    report.region_end = window.end;
    const std::string_view region =
        std::string_view(doc.text).substr(report.region_start,
                                          report.region_end - report.region_start);
    std::vector<std::pair<std::size_t, std::size_t>> window_spans;
    try {
      try {
        report.label = route(region, router, options.router);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::routing || !options.fallback_label) throw;
        report.label = options.fallback_label;
        result.notices.push_back("window " + std::to_string(w) +
                                 ": routing failed, using fallback label");
      }
      report.rules = generate_rules(region, *report.label,
                                    experts.at(*report.label),
                                    options.generation);
      Extraction ex = extract_chunks(doc, report.rules, report.region_start,
                                     report.region_end, options.extract);
      report.extraction = std::move(ex.report);
      for (const auto& c : ex.chunks.chunks) {
        window_spans.emplace_back(c.start, c.end);
      }
    } catch (const Error& e) {
      ++failures;
      report.error = e.what();
      // The carried chunk was not re-chunked; keep its original span.
      if (pending) spans.push_back(*pending);
      pending.reset();
      result.windows.push_back(std::move(report));
      continue;
    }

    pending.reset();
    const bool last_window = w + 1 == windows.size();
    if (!last_window && window_spans.size() >= 2) {
      pending = window_spans.back();
      window_spans.pop_back();
      report.buffered = true;
    } else if (!last_window) {
      result.notices.push_back("window " + std::to_string(w) +
                               " produced a single chunk; chunk buffer skipped");
    }
    spans.insert(spans.end(), window_spans.begin(), window_spans.end());
    result.windows.push_back(std::move(report));
  }
  if (pending) spans.push_back(*pending);

  if (failures == windows.size()) {
    throw Error(ErrorCode::extraction,
                "document '" + doc.id + "': every window failed");
  }
  result.chunks = make_chunk_set(doc, spans, "moc");
  return result;
}

}  // namespace moc
