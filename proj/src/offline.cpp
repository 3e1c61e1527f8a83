#include "moc/offline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {
namespace {

constexpr char32_t kBegin = 0x110000;  // outside the Unicode range

std::vector<std::string> split_code_points(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t n = utf8::sequence_length(text, i);
    tokens.emplace_back(text.substr(i, n));
    i += n;
  }
  return tokens;
}

}  // namespace

UniformScorer::UniformScorer(std::size_t alphabet_size)
    : alphabet_size_(alphabet_size) {
  require(alphabet_size >= 1, "uniform scorer needs a non-empty alphabet");
}

ScoredText UniformScorer::score(std::string_view text,
                                std::optional<std::string_view> context) const {
  require(!text.empty(), "cannot score empty text");
  ScoredText st;
  st.tokens = split_code_points(text);
  st.logprobs.assign(st.tokens.size(), -std::log(double(alphabet_size_)));
  st.context_len = context ? utf8::length(*context) : 0;
  return st;
}

std::string UniformScorer::model() const {
  return "uniform-" + std::to_string(alphabet_size_);
}

void TableScorer::add(std::string text, std::optional<std::string> context,
                      std::vector<double> logprobs) {
  require(!logprobs.empty(), "fixture entry needs at least one logprob");
  table_[{std::move(context), std::move(text)}] = std::move(logprobs);
}

void TableScorer::add_perplexity(std::string text,
                                 std::optional<std::string> context,
                                 double ppl) {
  require(ppl >= 1.0, "fixture perplexity must be >= 1");
  add(std::move(text), std::move(context), {-std::log(ppl)});
}

ScoredText TableScorer::score(std::string_view text,
                              std::optional<std::string_view> context) const {
  require(!text.empty(), "cannot score empty text");
  Key key{context ? std::optional<std::string>(std::string(*context))
                  : std::nullopt,
          std::string(text)};
  auto it = table_.find(key);
  if (it == table_.end()) {
    throw Error(ErrorCode::no_fixture,
                "no fixture for text '" + std::string(text.substr(0, 40)) +
                    "'" + (context ? " with context" : ""));
  }
  ScoredText st;
  st.logprobs = it->second;
  if (st.logprobs.size() == 1) {
    st.tokens = {std::string(text)};
  } else {
    st.tokens.resize(st.logprobs.size());
    for (std::size_t i = 0; i < st.tokens.size(); ++i) {
      st.tokens[i] = "#" + std::to_string(i);
    }
  }
  st.context_len = context ? 1 : 0;
  return st;
}

NGramScorer::NGramScorer(const std::vector<std::string>& training_texts,
                         Options options)
    : options_(options) {
  require(options_.order >= 1, "n-gram order must be >= 1");
  require(options_.cache_weight >= 0.0, "cache weight must be >= 0");
  for (const auto& t : training_texts) {
    const std::u32string cps = utf8::decode(t);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      alphabet_[cps[i]] = true;
      Counts& c = counts_[history_key(cps, i)];
      c.total += 1.0;
      c.next[cps[i]] += 1.0;
    }
  }
  require(!alphabet_.empty(), "n-gram scorer needs non-empty training text");
}

std::u32string NGramScorer::history_key(std::u32string_view stream,
                                        std::size_t position) const {
  const std::size_t n = options_.order - 1;
  std::u32string key(n, kBegin);
  for (std::size_t k = 0; k < n; ++k) {
    // key[k] is the character n-k positions back.
    const std::size_t back = n - k;
    if (position >= back) key[k] = stream[position - back];
  }
  return key;
}

double NGramScorer::probability(const std::u32string& key, char32_t next,
                                const CountTable* cache) const {
  const double v = double(alphabet_.size());
  double num = 1.0;
  double den = v;
  if (auto it = counts_.find(key); it != counts_.end()) {
    den += it->second.total;
    if (auto jt = it->second.next.find(next); jt != it->second.next.end()) {
      num += jt->second;
    }
  }
  if (cache) {
    if (auto it = cache->find(key); it != cache->end()) {
      den += options_.cache_weight * it->second.total;
      if (auto jt = it->second.next.find(next); jt != it->second.next.end()) {
        num += options_.cache_weight * jt->second;
      }
    }
  }
  // Out-of-alphabet characters have no counts and keep the floor 1/den.
  return num / den;
}

double NGramScorer::probability(std::u32string_view history,
                                char32_t next) const {
  std::u32string stream(history);
  stream.push_back(next);
  return probability(history_key(stream, history.size()), next, nullptr);
}

ScoredText NGramScorer::score(std::string_view text,
                              std::optional<std::string_view> context) const {
  require(!text.empty(), "cannot score empty text");
  ScoredText st;
  std::string_view ctx;
  if (context) {
    auto [kept, truncated] = fit_context(*context, text, options_.max_chars);
    ctx = kept;
    st.truncated = truncated;
  }
  const std::u32string ctx_cps = utf8::decode(ctx);
  std::u32string stream = ctx_cps;
  stream += utf8::decode(text);
  st.context_len = ctx_cps.size();

  const bool adaptive = options_.cache_weight > 0.0;
  CountTable cache;
  st.tokens.reserve(stream.size() - ctx_cps.size());
  st.logprobs.reserve(stream.size() - ctx_cps.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const std::u32string key = history_key(stream, i);
    if (i >= ctx_cps.size()) {
      const double p = probability(key, stream[i], adaptive ? &cache : nullptr);
      std::string tok;
      utf8::append(tok, stream[i]);
      st.tokens.push_back(std::move(tok));
      st.logprobs.push_back(std::log(p));
    }
    if (adaptive && alphabet_.count(stream[i])) {
      Counts& c = cache[key];
      c.total += 1.0;
      c.next[stream[i]] += 1.0;
    }
  }
  return st;
}

std::string NGramScorer::model() const {
  std::string name = "ngram-" + std::to_string(options_.order);
  if (options_.cache_weight > 0.0) {
    std::ostringstream w;
    w << options_.cache_weight;
    name += "-cache" + w.str();
  }
  return name;
}

void FixtureGenerator::add(std::string prompt, Generation response) {
  table_[std::move(prompt)] = std::move(response);
}

Generation FixtureGenerator::generate(std::string_view prompt,
                                      const GenerationParams& params) const {
  require(!prompt.empty(), "generation prompt is empty");
  {
    std::lock_guard lock(mu_);
    last_params_ = params;
  }
  auto it = table_.find(prompt);
  if (it == table_.end()) {
    throw Error(ErrorCode::no_fixture, "no fixture response for prompt '" +
                                           std::string(prompt.substr(0, 60)) +
                                           "'");
  }
  return it->second;
}

void FixtureEmbedder::add(std::string text, Embedding vector) {
  table_[std::move(text)] = std::move(vector);
}

std::vector<Embedding> FixtureEmbedder::embed(
    const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    require(!t.empty(), "cannot embed empty text");
    auto it = table_.find(t);
    if (it == table_.end()) {
      throw Error(ErrorCode::no_fixture,
                  "no fixture embedding for '" + t.substr(0, 40) + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dimensions, std::size_t ngram)
    : dimensions_(dimensions), ngram_(ngram) {
  require(dimensions >= 1 && ngram >= 1, "invalid hashing embedder shape");
}

std::vector<Embedding> HashingEmbedder::embed(
    const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    require(!t.empty(), "cannot embed empty text");
    const std::u32string cps = utf8::decode(t);
    Embedding v(dimensions_, 0.0);
    const std::size_t n = std::min(ngram_, cps.size());
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      std::uint64_t h = 1469598103934665603ULL;
      for (std::size_t k = 0; k < n; ++k) {
        h ^= std::uint64_t(cps[i + k]);
        h *= 1099511628211ULL;
      }
      v[h % dimensions_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashingEmbedder::model() const {
  return "hashing-" + std::to_string(dimensions_) + "x" +
         std::to_string(ngram_);
}

}  // namespace moc
