#include "moc/moc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "moc/edit_distance.hpp"
#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {

GranularityLabel::GranularityLabel(int value) : value_(value) {
  require(value >= 0 && value <= 3, "granularity label must be in 0..3");
}

GranularityLabel GranularityLabel::from_mean_length(double mean_chars) {
  require(mean_chars > 0, "mean chunk length must be positive");
  if (mean_chars <= 120) return GranularityLabel(0);
  if (mean_chars <= 150) return GranularityLabel(1);
  if (mean_chars <= 180) return GranularityLabel(2);
  return GranularityLabel(3);
}

std::pair<double, double> GranularityLabel::interval() const noexcept {
  static constexpr double kBounds[] = {0, 120, 150, 180,
                                       std::numeric_limits<double>::infinity()};
  return {kBounds[value_], kBounds[value_ + 1]};
}

bool is_placeholder(std::string_view s) noexcept {
  for (auto p : kPlaceholders) {
    if (p == s) return true;
  }
  return false;
}

ChunkRule ChunkRule::anchored(std::string prefix, std::string placeholder,
                              std::string suffix) {
  require(is_placeholder(placeholder),
          "unknown placeholder '" + placeholder + "'");
  require(!prefix.empty() && !suffix.empty(),
          "anchored rule needs a non-empty prefix and suffix");
  return ChunkRule{std::move(prefix), std::move(placeholder),
                   std::move(suffix), false};
}

ChunkRule ChunkRule::literal_text(std::string text) {
  require(!text.empty(), "literal rule is empty");
  return ChunkRule{std::move(text), {}, {}, true};
}

std::string ChunkRule::render() const {
  return literal ? prefix : prefix + placeholder + suffix;
}

ChunkRule parse_rule(std::string_view element) {
  std::size_t best_pos = std::string_view::npos;
  std::string_view best;
  for (auto p : kPlaceholders) {
    const std::size_t pos = element.find(p);
    if (pos == std::string_view::npos) continue;
    if (pos < best_pos || (pos == best_pos && p.size() > best.size())) {
      best_pos = pos;
      best = p;
    }
  }
  if (best_pos == std::string_view::npos) {
    if (element.empty()) throw ParseError("empty rule element", 0, "");
    return ChunkRule::literal_text(std::string(element));
  }
  std::string prefix(element.substr(0, best_pos));
  std::string suffix(element.substr(best_pos + best.size()));
  if (prefix.empty() || suffix.empty()) {
    throw ParseError("rule element lacks a start or end anchor", 0,
                     std::string(element));
  }
  return ChunkRule{std::move(prefix), std::string(best), std::move(suffix),
                   false};
}

namespace {

// Quoted strings between the outermost list brackets, decoding the usual
// JSON escapes. Tolerates raw newlines and trailing commas.
std::vector<std::string> scan_quoted(std::string_view body) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '"') {
      ++i;
      continue;
    }
    std::string value;
    ++i;
    bool closed = false;
    while (i < body.size()) {
      const char c = body[i++];
      if (c == '"') {
        closed = true;
        break;
      }
      if (c == '\\' && i < body.size()) {
        const char e = body[i++];
        switch (e) {
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case 'r': value += '\r'; break;
          case '"': value += '"'; break;
          case '\\': value += '\\'; break;
          case '/': value += '/'; break;
          default: value += '\\'; value += e;
        }
        continue;
      }
      value += c;
    }
    if (!closed) throw ParseError("unterminated string in rule list");
    out.push_back(std::move(value));
  }
  return out;
}

}  // namespace

RuleList parse_rule_list(std::string_view generation) {
  const std::string raw(generation);
  // The list opens at the first '[' followed (after whitespace) by a quote,
  // so a leading "[MASK]" in prose is not mistaken for it.
  std::size_t open = std::string_view::npos;
  for (std::size_t i = 0; i < generation.size(); ++i) {
    if (generation[i] != '[') continue;
    std::size_t j = i + 1;
    while (j < generation.size() &&
           (generation[j] == ' ' || generation[j] == '\n' ||
            generation[j] == '\r' || generation[j] == '\t')) {
      ++j;
    }
    if (j < generation.size() && (generation[j] == '"' || generation[j] == ']')) {
      open = i;
      break;
    }
  }
  const std::size_t close = generation.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    throw ParseError("generation contains no rule list", 0, raw);
  }
  const std::string_view body = generation.substr(open, close - open + 1);

  std::vector<std::string> elements;
  const auto parsed =
      nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_array() &&
      std::all_of(parsed.begin(), parsed.end(),
                  [](const auto& e) { return e.is_string(); })) {
    for (const auto& e : parsed) elements.push_back(e.get<std::string>());
  } else {
    try {
      elements = scan_quoted(body.substr(1, body.size() - 2));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), 0, raw);
    }
  }
  if (elements.empty()) throw ParseError("rule list is empty", 0, raw);

  RuleList list;
  list.raw = raw;
  for (const auto& e : elements) {
    try {
      list.rules.push_back(parse_rule(e));
    } catch (const ParseError& err) {
      throw ParseError(err.what(), 0, raw);
    }
  }
  return list;
}

std::string render_chunking_prompt(std::string_view text,
                                   std::string_view placeholder) {
  const std::string p(placeholder);
  std::string prompt =
      "This is a text chunking task. As an expert in text segmentation, you "
      "are responsible for segmenting the given text into text chunks. You "
      "must adhere to the following four conditions:\n"
      "1. Combine several consecutive sentences with related content into "
      "text chunks, ensuring that each text chunk has a complete logical "
      "expression.\n"
      "2. Avoid making the text chunks too short, and strike a good balance "
      "between recognizing content transitions and chunk length.\n"
      "3. The output of the chunking result should be in a list format, where "
      "each element represents a text chunk in the document.\n"
      "4. Each text chunk in the output should consist of the first few "
      "characters of the text chunk, followed by \"" +
      p +
      "\" to replace the intermediate content, and end with the last few "
      "characters of the text chunk. The output format is as follows:\n"
      "[\n"
      "    \"First few characters of text chunk " +
      p +
      " Last few characters of text chunk\",\n"
      "    ......\n"
      "]\n"
      "If you understand, please segment the following text into text chunks "
      "and output them in the required list format.\n"
      "\n"
      "Document content: ";
  prompt += text;
  return prompt;
}

RuleList generate_rules(std::string_view text, GranularityLabel label,
                        const Generator& generator,
                        const RuleGenerationOptions& options) {
  require(!text.empty(), "cannot generate rules for empty text");
  require(is_placeholder(options.placeholder),
          "unknown placeholder '" + options.placeholder + "'");
  const Generation g = generator.generate(
      render_chunking_prompt(text, options.placeholder), options.params);
  RuleList list = parse_rule_list(g.text);
  list.model = generator.model();
  list.label = label;
  return list;
}

const char* const kDefaultRoutingPrompt =
    "Classify how finely the following text should be chunked. Answer with a "
    "single digit: 0 if its chunks should average at most 120 characters, 1 "
    "for 121-150, 2 for 151-180, 3 for more than 180.\n\n"
    "Text: {text}\n\nGranularity label: ";

std::string render_routing_prompt(std::string_view text,
                                  const RouterConfig& config) {
  std::string prompt = config.prompt_template;
  const std::string key = "{text}";
  const std::size_t pos = prompt.find(key);
  if (pos == std::string::npos) {
    throw Error(ErrorCode::config, "routing prompt has no {text} slot");
  }
  prompt.replace(pos, key.size(), text);
  return prompt;
}

GranularityLabel argmax_label(
    const std::array<std::optional<double>, 4>& probabilities) {
  int best = -1;
  for (int k = 0; k < 4; ++k) {
    const auto& p = probabilities[std::size_t(k)];
    if (!p || !std::isfinite(*p)) continue;
    if (best < 0 || *p > *probabilities[std::size_t(best)]) best = k;
  }
  if (best < 0) {
    throw Error(ErrorCode::routing, "backend gave no probability for any label");
  }
  return GranularityLabel(best);
}

std::array<std::optional<double>, 4> label_probabilities(
    std::string_view text, const Scorer& scorer, const RouterConfig& config) {
  require(!text.empty(), "cannot route empty text");
  const std::string prompt = render_routing_prompt(text, config);
  std::array<std::optional<double>, 4> probs;
  for (int k = 0; k < 4; ++k) {
    const std::string token = std::to_string(k);
    try {
      const ScoredText st = scorer.score(token, std::string_view(prompt));
      validate(st);
      double sum = 0;
      for (double lp : st.logprobs) sum += lp;
      probs[std::size_t(k)] = std::exp(sum);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_fixture &&
          e.code() != ErrorCode::protocol) {
        throw;
      }
    }
  }
  return probs;
}

GranularityLabel route(std::string_view text, const Scorer& scorer,
                       const RouterConfig& config) {
  return argmax_label(label_probabilities(text, scorer, config));
}

const char* to_string(MatchMode mode) noexcept {
  switch (mode) {
    case MatchMode::exact:
      return "exact";
    case MatchMode::recovered:
      return "recovered";
    case MatchMode::failed:
      return "failed";
  }
  return "?";
}

std::size_t ExtractionReport::count(MatchMode mode) const {
  std::size_t n = 0;
  for (const auto& r : rules) n += r.mode == mode;
  return n;
}

namespace {

AnchorResolution locate(std::string_view anchor, std::string_view haystack,
                        std::size_t from, double max_ratio) {
  AnchorResolution res;
  if (from >= haystack.size()) return res;
  const std::size_t pos = haystack.find(anchor, from);
  if (pos != std::string_view::npos) {
    return {MatchMode::exact, pos, pos + anchor.size(), 0};
  }
  try {
    const AnchorMatch m = recover_anchor(anchor, haystack, from, max_ratio);
    return {MatchMode::recovered, m.start, m.end, m.distance};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_match) throw;
  }
  return res;
}

MatchMode worst(MatchMode a, MatchMode b) {
  return static_cast<int>(a) > static_cast<int>(b) ? a : b;
}

}  // namespace

Extraction extract_chunks(const Document& doc, const RuleList& rules,
                          std::size_t region_start, std::size_t region_end,
                          const ExtractOptions& options) {
  require(!rules.rules.empty(), "rule list is empty");
  require(region_start < region_end && region_end <= doc.text.size(),
          "invalid extraction region");
  const std::string_view haystack =
      std::string_view(doc.text).substr(region_start, region_end - region_start);

  Extraction out;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < rules.rules.size(); ++r) {
    const ChunkRule& rule = rules.rules[r];
    RuleOutcome outcome;
    outcome.rule_index = r;
    outcome.prefix = locate(rule.prefix, haystack, cursor, options.max_ratio);
    outcome.mode = outcome.prefix.mode;
    std::size_t chunk_end = outcome.prefix.end;
    outcome.distance = outcome.prefix.distance;
    if (outcome.prefix.mode != MatchMode::failed && !rule.literal) {
      outcome.suffix = locate(rule.suffix, haystack, outcome.prefix.end,
                              options.max_ratio);
      outcome.mode = worst(outcome.mode, outcome.suffix->mode);
      chunk_end = outcome.suffix->end;
      outcome.distance += outcome.suffix->distance;
    }
    if (outcome.mode != MatchMode::failed) {
      outcome.span = {region_start + outcome.prefix.start,
                      region_start + chunk_end};
      spans.push_back(*outcome.span);
      cursor = chunk_end;
    }
    out.report.rules.push_back(std::move(outcome));
  }

  const std::size_t failed = out.report.count(MatchMode::failed);
  if (2 * failed > rules.rules.size()) {
    throw Error(ErrorCode::extraction,
                "document '" + doc.id + "': " + std::to_string(failed) +
                    " of " + std::to_string(rules.rules.size()) +
                    " rules could not be located");
  }
  out.chunks = make_chunk_set(doc, spans, options.method);
  return out;
}

Extraction extract_chunks(const Document& doc, const RuleList& rules,
                          const ExtractOptions& options) {
  return extract_chunks(doc, rules, 0, doc.text.size(), options);
}

}  // namespace moc
