#pragma once

// In-process backends: deterministic scorers, generators and embedders that
// need no network. Used by the test suites and for offline runs.

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "moc/scoring.hpp"

namespace moc {

// Every code point gets probability 1/V.
class UniformScorer final : public Scorer {
 public:
  explicit UniformScorer(std::size_t alphabet_size);

  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context = {}) const override;
  std::string model() const override;

 private:
  std::size_t alphabet_size_;
};

// Fixture scorer: exact (context, text) -> logprobs table. Lookups that miss
// the table fail with ErrorCode::no_fixture.
class TableScorer final : public Scorer {
 public:
  void add(std::string text, std::optional<std::string> context,
           std::vector<double> logprobs);
  // Single-token entry whose perplexity is exactly `ppl`.
  void add_perplexity(std::string text, std::optional<std::string> context,
                      double ppl);

  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context = {}) const override;
  std::string model() const override { return "table-fixture"; }

 private:
  using Key = std::pair<std::optional<std::string>, std::string>;
  std::map<Key, std::vector<double>> table_;
};

// Character-level n-gram model with add-one smoothing over the training
// alphabet. Histories shorter than order-1 are padded with a begin marker.
//
// With cache_weight > 0 the counts are adapted online: every in-alphabet
// character already seen in the scored stream (context, then the text so far)
// adds cache_weight to its count. Characters outside the training alphabet get
// the smoothed floor 1 / (N(h) + V) and are never cached, so the distribution
// over the alphabet always sums to one.
class NGramScorer final : public Scorer {
 public:
  struct Options {
    std::size_t order = 2;
    double cache_weight = 0.0;
    // Left-truncation budget for context + text in code points; 0 = none.
    std::size_t max_chars = 0;
  };

  NGramScorer(const std::vector<std::string>& training_texts, Options options);
  explicit NGramScorer(const std::vector<std::string>& training_texts)
      : NGramScorer(training_texts, Options{}) {}

  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context = {}) const override;
  std::string model() const override;

  std::size_t alphabet_size() const noexcept { return alphabet_.size(); }
  const Options& options() const noexcept { return options_; }

  // P(next | history), history given as the preceding code points (only the
  // last order-1 are used). Exposed for property tests.
  double probability(std::u32string_view history, char32_t next) const;

 private:
  struct Counts {
    double total = 0.0;
    std::unordered_map<char32_t, double> next;
  };
  using CountTable = std::unordered_map<std::u32string, Counts>;

  std::u32string history_key(std::u32string_view stream,
                             std::size_t position) const;
  double probability(const std::u32string& key, char32_t next,
                     const CountTable* cache) const;

  Options options_;
  std::unordered_map<char32_t, bool> alphabet_;
  CountTable counts_;
};

// Canned prompt -> response table. Unknown prompts fail with
// ErrorCode::no_fixture rather than returning an empty completion.
class FixtureGenerator final : public Generator {
 public:
  void add(std::string prompt, Generation response);
  void add(std::string prompt, std::string text) {
    add(std::move(prompt), Generation{std::move(text), "stop"});
  }

  Generation generate(std::string_view prompt,
                      const GenerationParams& params = {}) const override;
  std::string model() const override { return "generator-fixture"; }

  // Parameters of the most recent call, for asserting decoding defaults.
  std::optional<GenerationParams> last_params() const {
    std::lock_guard lock(mu_);
    return last_params_;
  }

 private:
  std::map<std::string, Generation, std::less<>> table_;
  mutable std::mutex mu_;
  mutable std::optional<GenerationParams> last_params_;
};

class CallbackGenerator final : public Generator {
 public:
  using Fn = std::function<Generation(std::string_view,
                                      const GenerationParams&)>;
  CallbackGenerator(std::string name, Fn fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}

  Generation generate(std::string_view prompt,
                      const GenerationParams& params = {}) const override {
    return fn_(prompt, params);
  }
  std::string model() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

class FixtureEmbedder final : public Embedder {
 public:
  void add(std::string text, Embedding vector);

  std::vector<Embedding> embed(
      const std::vector<std::string>& texts) const override;
  std::string model() const override { return "embedder-fixture"; }

 private:
  std::map<std::string, Embedding, std::less<>> table_;
};

// Bag of hashed character n-grams (FNV-1a into `dimensions` buckets). Texts
// sharing vocabulary get high cosine similarity; no model weights needed.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimensions = 256, std::size_t ngram = 3);

  std::vector<Embedding> embed(
      const std::vector<std::string>& texts) const override;
  std::string model() const override;

 private:
  std::size_t dimensions_;
  std::size_t ngram_;
};

}  // namespace moc
