#include "moc/chunkers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {
namespace {

using Spans = std::vector<std::pair<std::size_t, std::size_t>>;

double span_length(const Document& doc, const LengthMeasure& measure,
                   std::size_t start, std::size_t end) {
  return measure(std::string_view(doc.text).substr(start, end - start));
}

// Cosine similarity between each pair of consecutive sentences.
std::vector<double> adjacent_similarities(const Document& doc,
                                          const std::vector<SentenceSpan>& s,
                                          const Embedder& embedder) {
  if (s.size() < 2) return {};
  std::vector<std::string> texts;
  texts.reserve(s.size());
  for (const auto& span : s) {
    texts.push_back(doc.text.substr(span.start, span.end - span.start));
  }
  const auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::protocol, "embedder returned the wrong count");
  }
  std::vector<double> sims(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    sims[i] = cosine(vectors[i], vectors[i + 1]);
  }
  return sims;
}

ChunkSet semantic_from_similarities(const Document& doc,
                                    const std::vector<SentenceSpan>& s,
                                    const std::vector<double>& sims,
                                    double threshold) {
  Spans spans;
  std::size_t start = s.front().start;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    if (sims[i] < threshold) {
      spans.emplace_back(start, s[i].end);
      start = s[i + 1].start;
    }
  }
  spans.emplace_back(start, s.back().end);
  return make_chunk_set(doc, spans, "semantic");
}

double corpus_mean(const std::vector<ChunkSet>& sets) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& set : sets) {
    for (const auto& c : set.chunks) total += double(utf8::length(c.text));
    count += set.size();
  }
  return count ? total / double(count) : 0.0;
}

}  // namespace

const char* to_string(ChunkMethod m) noexcept {
  switch (m) {
    case ChunkMethod::fixed:
      return "fixed";
    case ChunkMethod::boundary:
      return "boundary";
    case ChunkMethod::semantic:
      return "semantic";
    case ChunkMethod::moc:
      return "moc";
  }
  return "?";
}

ChunkMethod parse_chunk_method(const std::string& name) {
  if (name == "fixed") return ChunkMethod::fixed;
  if (name == "boundary") return ChunkMethod::boundary;
  if (name == "semantic") return ChunkMethod::semantic;
  if (name == "moc") return ChunkMethod::moc;
  throw Error(ErrorCode::config, "unknown chunking method '" + name + "'");
}

void validate(const ChunkerConfig& config) {
  require(config.target_len > 0, "target_len must be positive");
  require(config.overlap >= 0, "overlap must be non-negative");
  require(config.overlap < config.target_len,
          "overlap must be smaller than target_len");
  require(config.similarity_threshold >= -1 && config.similarity_threshold <= 1,
          "similarity threshold must lie in [-1, 1]");
}

ChunkSet chunk_fixed(const Document& doc, std::size_t length) {
  require(length >= 1, "fixed chunk length must be >= 1");
  Spans spans;
  std::size_t start = 0;
  while (start < doc.text.size()) {
    const std::size_t end = utf8::advance(doc.text, start, length);
    spans.emplace_back(start, end);
    start = end;
  }
  return make_chunk_set(doc, spans, "fixed");
}

BoundaryChunking chunk_boundary_aware(const Document& doc, double target,
                                      double overlap,
                                      const LengthMeasure& measure,
                                      const SentencePolicy& policy) {
  require(target > 0, "target must be positive");
  require(overlap >= 0 && overlap < target,
          "overlap must lie in [0, target)");
  const auto sentences = split_sentences(doc, policy);
  std::vector<double> lengths;
  lengths.reserve(sentences.size());
  for (const auto& s : sentences) {
    lengths.push_back(span_length(doc, measure, s.start, s.end));
  }

  auto chunk_len = [&](std::size_t b, std::size_t e) {
    return span_length(doc, measure, sentences[b].start, sentences[e - 1].end);
  };
  BoundaryChunking out;
  Spans spans;
  std::size_t next = 0;   // first sentence not covered by any chunk yet
  std::size_t carry = 0;  // first sentence of the open chunk, <= next
  while (next < sentences.size()) {
    std::size_t first = carry;
    // Drop carried-over sentences until at least one new sentence fits.
    while (first < next && chunk_len(first, next + 1) > target) ++first;
    std::size_t last = next + 1;
    while (last < sentences.size() && chunk_len(first, last + 1) <= target) {
      ++last;
    }
    if (last - first == 1 && lengths[first] > target) {
      out.oversize.push_back(spans.size());
    }
    spans.emplace_back(sentences[first].start, sentences[last - 1].end);
    next = last;
    carry = next;
    if (overlap > 0) {
      // Never carry the whole chunk, so starts keep increasing.
      while (carry > first + 1 && chunk_len(carry - 1, next) <= overlap) {
        --carry;
      }
    }
  }
  out.set = make_chunk_set(doc, spans, "boundary");
  return out;
}

ChunkSet chunk_semantic(const Document& doc, const Embedder& embedder,
                        double threshold, const SentencePolicy& policy) {
  require(threshold >= -1 && threshold <= 1,
          "similarity threshold must lie in [-1, 1]");
  const auto sentences = split_sentences(doc, policy);
  require(!sentences.empty(), "document has no sentences");
  const auto sims = adjacent_similarities(doc, sentences, embedder);
  return semantic_from_similarities(doc, sentences, sims, threshold);
}

ChunkSet run_chunker(const ChunkerConfig& config, const Document& doc,
                     const Embedder* embedder) {
  validate(config);
  switch (config.method) {
    case ChunkMethod::fixed: {
      const double chars =
          config.measure.unit == LengthMeasure::Unit::tokens
              ? config.target_len * config.measure.chars_per_token
              : config.target_len;
      return chunk_fixed(doc, std::max<std::size_t>(1, std::lround(chars)));
    }
    case ChunkMethod::boundary:
      return chunk_boundary_aware(doc, config.target_len, config.overlap,
                                  config.measure, config.policy)
          .set;
    case ChunkMethod::semantic:
      if (!embedder) {
        throw Error(ErrorCode::config, "semantic chunking needs an embedder");
      }
      return chunk_semantic(doc, *embedder, config.similarity_threshold,
                            config.policy);
    case ChunkMethod::moc:
      break;
  }
  throw Error(ErrorCode::config,
              "run_chunker handles the baseline methods only");
}

CalibrationReport calibrate_avg_len(const ChunkerConfig& base,
                                    const std::vector<Document>& corpus,
                                    const Embedder* embedder,
                                    double target_avg, double tolerance) {
  require(!corpus.empty(), "calibration corpus is empty");
  require(target_avg > 0, "target average must be positive");

  CalibrationReport best;
  best.config = base;
  double best_gap = std::numeric_limits<double>::infinity();
  auto consider = [&](const ChunkerConfig& cfg, double mean) {
    ++best.iterations;
    const double gap = std::abs(mean - target_avg);
    if (gap < best_gap) {
      best_gap = gap;
      best.config = cfg;
      best.achieved_mean = mean;
    }
    return gap <= tolerance;
  };

  if (base.method == ChunkMethod::fixed) {
    ChunkerConfig cfg = base;
    cfg.measure = {};
    cfg.target_len = std::round(target_avg);
    std::vector<ChunkSet> sets;
    for (const auto& d : corpus) sets.push_back(run_chunker(cfg, d));
    best.converged = consider(cfg, corpus_mean(sets));
    return best;
  }

  if (base.method == ChunkMethod::boundary) {
    double lo = 1, hi = 1;
    for (const auto& d : corpus) {
      hi = std::max(hi, double(utf8::length(d.text)) * 2);
    }
    for (int iter = 0; iter < 60 && hi - lo > 0.5; ++iter) {
      ChunkerConfig cfg = base;
      cfg.target_len = std::round((lo + hi) / 2);
      cfg.overlap = std::min(cfg.overlap, cfg.target_len / 2);
      std::vector<ChunkSet> sets;
      for (const auto& d : corpus) sets.push_back(run_chunker(cfg, d));
      const double mean = corpus_mean(sets);
      if (consider(cfg, mean)) {
        best.converged = true;
        return best;
      }
      (mean < target_avg ? lo : hi) = cfg.target_len;
    }
    return best;
  }

  if (base.method == ChunkMethod::semantic) {
    if (!embedder) {
      throw Error(ErrorCode::config, "semantic calibration needs an embedder");
    }
    // Sentence similarities do not depend on the threshold; embed once.
    std::vector<std::vector<SentenceSpan>> sentences;
    std::vector<std::vector<double>> sims;
    for (const auto& d : corpus) {
      sentences.push_back(split_sentences(d, base.policy));
      sims.push_back(adjacent_similarities(d, sentences.back(), *embedder));
    }
    double lo = -1, hi = 1;  // higher threshold => more splits => shorter
    for (int iter = 0; iter < 60; ++iter) {
      ChunkerConfig cfg = base;
      cfg.similarity_threshold = (lo + hi) / 2;
      std::vector<ChunkSet> sets;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        sets.push_back(semantic_from_similarities(
            corpus[i], sentences[i], sims[i], cfg.similarity_threshold));
      }
      const double mean = corpus_mean(sets);
      if (consider(cfg, mean)) {
        best.converged = true;
        return best;
      }
      (mean > target_avg ? lo : hi) = cfg.similarity_threshold;
    }
    return best;
  }
  throw Error(ErrorCode::config, "calibration supports baseline methods only");
}

}  // namespace moc
