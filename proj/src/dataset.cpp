#include "moc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <memory>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>

#include "moc/edit_distance.hpp"
#include "moc/error.hpp"
#include "moc/io.hpp"
#include "moc/utf8.hpp"

namespace moc {

using nlohmann::json;

CleaningVerdict detect_hallucination(std::string_view generated_chunk,
                                     const Document& doc,
                                     std::size_t chunk_index) {
  require(!generated_chunk.empty(), "generated chunk is empty");
  const std::size_t len = utf8::length(generated_chunk);
  const AnchorMatch m = best_substring_match(generated_chunk, doc.text, 0);
  CleaningVerdict v;
  v.chunk_index = chunk_index;
  v.min_edit_distance = m.distance;
  // Threshold ceil(len / 10), computed in integers; "exceeds" is strict.
  const std::size_t threshold = (len + 9) / 10;
  v.threshold = double(threshold);
  v.flagged = m.distance > threshold;
  v.start = m.start;
  v.end = m.end;
  return v;
}

RuleList make_rules(const ChunkSet& chunks, std::size_t anchor_len,
                    std::string_view placeholder) {
  require(anchor_len >= 1, "anchor length must be >= 1");
  require(is_placeholder(placeholder),
          "unknown placeholder '" + std::string(placeholder) + "'");
  RuleList list;
  list.model = "reference";
  for (const auto& c : chunks.chunks) {
    require(!c.text.empty(), "chunk " + std::to_string(c.index) + " is empty");
    const std::u32string cps = utf8::decode(c.text);
    if (cps.size() <= 2 * anchor_len) {
      list.rules.push_back(ChunkRule::literal_text(c.text));
      continue;
    }
    list.rules.push_back(ChunkRule::anchored(
        utf8::encode(std::u32string_view(cps).substr(0, anchor_len)),
        std::string(placeholder),
        utf8::encode(std::u32string_view(cps).substr(cps.size() - anchor_len))));
  }
  return list;
}

GranularityLabel label_granularity(const ChunkSet& chunks) {
  require(!chunks.empty(), "cannot label an empty chunk set");
  return GranularityLabel::from_mean_length(mean_chunk_length(chunks));
}

RouterShaping shape_router_texts(const std::vector<Document>& docs,
                                 const std::vector<ChunkSet>& chunksets,
                                 std::size_t target_chars) {
  require(target_chars >= 1, "target length must be >= 1");
  std::map<std::string, const ChunkSet*> by_id;
  for (const auto& cs : chunksets) by_id[cs.doc_id] = &cs;

  RouterShaping out;
  struct Pending {
    std::string text;
    std::vector<std::string> doc_ids;
    std::size_t length = 0;
  };
  std::map<int, Pending> pending;
  const auto target = double(target_chars);
  auto gap = [&](std::size_t len) { return std::abs(double(len) - target); };
  auto flush = [&](int label) {
    Pending& p = pending[label];
    if (p.doc_ids.empty()) return;
    out.samples.push_back(
        {std::move(p.text), GranularityLabel(label), std::move(p.doc_ids)});
    ++out.label_counts[label];
    p = Pending{};
  };

  for (const auto& doc : docs) {
    auto it = by_id.find(doc.id);
    require(it != by_id.end(), "no chunk set for document '" + doc.id + "'");
    const ChunkSet& cs = *it->second;
    require(!cs.empty(), "empty chunk set for document '" + doc.id + "'");

    std::vector<std::size_t> lengths;
    for (const auto& c : cs.chunks) lengths.push_back(utf8::length(c.text));
    const std::size_t smallest = *std::min_element(lengths.begin(), lengths.end());
    if (smallest > 2 * target_chars) {
      out.notices.push_back("document '" + doc.id +
                            "' skipped: smallest chunk has " +
                            std::to_string(smallest) + " characters");
      continue;
    }
    const int label = label_granularity(cs).value();

    std::size_t total = 0;
    for (auto l : lengths) total += l;
    if (total >= target_chars) {
      // Truncate: the chunk count whose length is closest to the target.
      std::size_t best_k = 1, sum = 0;
      double best_gap = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k <= lengths.size(); ++k) {
        sum += lengths[k - 1];
        if (gap(sum) < best_gap) {
          best_gap = gap(sum);
          best_k = k;
        }
        if (double(sum) > target) break;
      }
      const auto& first = cs.chunks.front();
      const auto& last = cs.chunks[best_k - 1];
      out.samples.push_back(
          {doc.text.substr(first.start, last.end - first.start),
           GranularityLabel(label),
           {doc.id}});
      ++out.label_counts[label];
      continue;
    }

    // Concatenate short documents that share a label.
    const std::string text = doc.text.substr(
        cs.chunks.front().start, cs.chunks.back().end - cs.chunks.front().start);
    Pending& p = pending[label];
    if (!p.doc_ids.empty() && gap(p.length + total) > gap(p.length)) {
      flush(label);
    }
    Pending& q = pending[label];
    if (!q.text.empty()) q.text += '\n';
    q.text += text;
    q.doc_ids.push_back(doc.id);
    q.length += total;
    if (q.length >= target_chars) flush(label);
  }
  for (int label = 0; label < 4; ++label) flush(label);
  return out;
}

std::vector<ChunkerSample> make_chunker_samples(const Document& doc,
                                                const ChunkSet& chunks,
                                                const WindowOptions& windows,
                                                std::size_t anchor_len,
                                                std::string_view placeholder) {
  require(!chunks.empty(), "chunk set is empty");
  const GranularityLabel label = label_granularity(chunks);
  const std::size_t budget = windows.budget_chars();
  std::vector<ChunkerSample> samples;
  std::size_t first = 0;
  while (first < chunks.size()) {
    std::size_t last = first + 1;
    auto span_chars = [&](std::size_t a, std::size_t b) {
      const auto& s = chunks.chunks[a];
      const auto& e = chunks.chunks[b - 1];
      return utf8::length(
          std::string_view(doc.text).substr(s.start, e.end - s.start));
    };
    while (last < chunks.size() && span_chars(first, last + 1) <= budget) {
      ++last;
    }
    ChunkSet part{chunks.doc_id,
                  {chunks.chunks.begin() + std::ptrdiff_t(first),
                   chunks.chunks.begin() + std::ptrdiff_t(last)},
                  chunks.method};
    const auto& s = part.chunks.front();
    const auto& e = part.chunks.back();
    ChunkerSample sample{doc.id, label,
                         render_chunking_prompt(
                             std::string_view(doc.text).substr(
                                 s.start, e.end - s.start),
                             placeholder),
                         make_rules(part, anchor_len, placeholder)};
    sample.target.label = label;
    samples.push_back(std::move(sample));
    first = last;
  }
  return samples;
}

namespace {

json rules_to_json(const RuleList& list) {
  json rules = json::array();
  json rendered = json::array();
  for (const auto& r : list.rules) {
    rules.push_back({{"prefix", r.prefix},
                     {"placeholder", r.placeholder},
                     {"suffix", r.suffix}});
    rendered.push_back(r.render());
  }
  return {{"rules", rules}, {"target", rendered.dump(4)}};
}

}  // namespace

json emit_training_sets(const std::vector<ChunkerSample>& chunker,
                        const std::vector<RouterSample>& router,
                        const std::filesystem::path& out_dir,
                        const EmitOptions& options) {
  std::map<std::string, int> doc_label;
  auto claim = [&](const std::string& id, int label) {
    auto [it, inserted] = doc_label.emplace(id, label);
    if (!inserted && it->second != label) {
      throw Error(ErrorCode::invariant,
                  "document '" + id + "' appears under labels " +
                      std::to_string(it->second) + " and " +
                      std::to_string(label));
    }
  };
  for (const auto& s : chunker) claim(s.doc_id, s.label.value());
  for (const auto& s : router) {
    for (const auto& id : s.doc_ids) claim(id, s.label.value());
  }

  std::filesystem::create_directories(out_dir);
  std::array<std::size_t, 4> counts{};
  {
    std::array<std::unique_ptr<io::JsonlWriter>, 4> writers;
    for (int k = 0; k < 4; ++k) {
      writers[std::size_t(k)] = std::make_unique<io::JsonlWriter>(
          out_dir / ("expert_" + std::to_string(k) + ".jsonl"));
    }
    for (const auto& s : chunker) {
      json rec = rules_to_json(s.target);
      rec["doc_id"] = s.doc_id;
      rec["label"] = s.label.value();
      rec["prompt"] = s.prompt;
      writers[std::size_t(s.label.value())]->write(rec);
      ++counts[std::size_t(s.label.value())];
    }
  }
  std::array<std::size_t, 4> router_counts{};
  {
    io::JsonlWriter writer(out_dir / "router.jsonl");
    for (const auto& s : router) {
      writer.write({{"text", s.text},
                    {"label", s.label.value()},
                    {"completion", std::to_string(s.label.value())},
                    {"doc_ids", s.doc_ids}});
      ++router_counts[std::size_t(s.label.value())];
    }
  }

  json warnings = json::array();
  for (int k = 0; k < 4; ++k) {
    if (counts[std::size_t(k)] == 0) {
      warnings.push_back("expert bucket " + std::to_string(k) + " is empty");
    }
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo > 0 && double(*hi) > options.imbalance_ratio * double(*lo)) {
    warnings.push_back("expert buckets are unbalanced (" + std::to_string(*lo) +
                       " to " + std::to_string(*hi) + ")");
  }

  json manifest;
  manifest["counts"] = {{"expert_0", counts[0]}, {"expert_1", counts[1]},
                        {"expert_2", counts[2]}, {"expert_3", counts[3]},
                        {"router", router.size()}};
  manifest["router_label_counts"] = router_counts;
  manifest["input"] = {{"chunker_samples", chunker.size()},
                       {"router_samples", router.size()}};
  manifest["warnings"] = warnings;
  manifest["parameters"] = options.parameters;
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

std::string render_distill_prompt(std::string_view text) {
  std::string prompt =
      "This is a text chunking task, and you are an expert in text "
      "segmentation, responsible for dividing the given text into text "
      "chunks. You must adhere to the following four conditions:\n"
      "1. Segment the text based on its logical and semantic structure, "
      "ensuring each text chunk expresses a complete logical thought.\n"
      "2. Avoid making the text chunks too short, balancing the recognition "
      "of content transitions with appropriate chunk length.\n"
      "3. Do not alter the original vocabulary or content of the text.\n"
      "4. Do not add any new words or symbols.\n"
      "If you understand, please segment the following text into text "
      "chunks, with each chunk enclosed using <chunk> and </chunk>. Output "
      "the complete set of segmented chunks without omissions.\n\n"
      "Document content: ";
  prompt += text;
  prompt += "\n\nThe segmented text chunks are:\n";
  return prompt;
}

std::vector<std::string> parse_tagged_chunks(std::string_view generation) {
  static constexpr std::string_view kOpen = "<chunk>";
  static constexpr std::string_view kClose = "</chunk>";
  auto trim = [](std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  };
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = generation.find(kOpen, pos)) != std::string_view::npos) {
    pos += kOpen.size();
    std::size_t close = generation.find(kClose, pos);
    // A truncated generation may leave the last chunk open.
    const std::size_t stop =
        close == std::string_view::npos ? generation.size() : close;
    const auto piece = trim(generation.substr(pos, stop - pos));
    if (!piece.empty()) out.emplace_back(piece);
    if (close == std::string_view::npos) break;
    pos = close + kClose.size();
  }
  return out;
}

DistillResult distill_document(const Document& doc, const Generator& generator,
                               const WindowOptions& window_options,
                               const GenerationParams& params) {
  validate(doc);
  const auto windows = sliding_windows(doc, window_options);
  DistillResult out;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::optional<std::pair<std::size_t, std::size_t>> pending;
  std::size_t piece_index = 0;

  for (std::size_t w = 0; w < windows.size(); ++w) {
    const std::size_t region_start = pending ? pending->first : windows[w].start;
    const std::size_t region_end = windows[w].end;
    const std::string_view region = std::string_view(doc.text).substr(
        region_start, region_end - region_start);
    const Generation g = generator.generate(render_distill_prompt(region), params);
    out.raw.push_back(g.text);
    if (g.truncated()) {
      out.notices.push_back("window " + std::to_string(w) +
                            ": generation stopped at the length limit");
    }

    std::vector<std::pair<std::size_t, std::size_t>> window_spans;
    std::size_t cursor = region_start;
    for (const auto& piece : parse_tagged_chunks(g.text)) {
      out.verdicts.push_back(detect_hallucination(piece, doc, piece_index++));
      if (cursor >= region_end) {
        out.notices.push_back("window " + std::to_string(w) +
                              ": chunk past the window end dropped");
        continue;
      }
      const std::string_view hay =
          std::string_view(doc.text).substr(0, region_end);
      std::size_t start, end;
      if (auto pos = hay.find(piece, cursor); pos != std::string_view::npos) {
        start = pos;
        end = pos + piece.size();
      } else {
        const AnchorMatch m = best_substring_match(piece, hay, cursor);
        start = m.start;
        end = m.end;
      }
      window_spans.emplace_back(start, end);
      cursor = end;
    }
    if (window_spans.empty()) {
      out.notices.push_back("window " + std::to_string(w) +
                            ": generation held no chunks");
      if (pending) spans.push_back(*pending);
      pending.reset();
      continue;
    }
    pending.reset();
    if (w + 1 < windows.size() && window_spans.size() >= 2) {
      pending = window_spans.back();
      window_spans.pop_back();
    } else if (w + 1 < windows.size()) {
      out.notices.push_back("window " + std::to_string(w) +
                            " produced a single chunk; chunk buffer skipped");
    }
    spans.insert(spans.end(), window_spans.begin(), window_spans.end());
  }
  if (pending) spans.push_back(*pending);
  out.chunks = make_chunk_set(doc, spans, "distilled");
  return out;
}

}  // namespace moc
