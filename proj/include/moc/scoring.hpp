#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moc {

// Per-token natural-log probabilities of a text, optionally conditioned on a
// context whose tokens are excluded from `logprobs`.
struct ScoredText {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::size_t context_len = 0;
  // Set when the context was left-truncated to fit the backend budget.
  bool truncated = false;
};

// Throws ErrorCode::protocol when the token/logprob invariants are broken.
void validate(const ScoredText& st);

// exp(-mean(logprobs)).
double perplexity(const ScoredText& st);

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoredText score(std::string_view text,
                           std::optional<std::string_view> context = {})
      const = 0;
  virtual std::string model() const = 0;
};

struct GenerationParams {
  double temperature = 0.1;
  double top_p = 0.1;
  std::optional<int> top_k;
  int max_tokens = 4096;
};

struct Generation {
  std::string text;
  std::string finish_reason = "stop";

  bool truncated() const noexcept { return finish_reason == "length"; }
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual Generation generate(std::string_view prompt,
                              const GenerationParams& params = {}) const = 0;
  virtual std::string model() const = 0;
};

using Embedding = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Embedding> embed(
      const std::vector<std::string>& texts) const = 0;
  virtual std::string model() const = 0;

  Embedding embed_one(std::string_view text) const;
};

// Cosine similarity in [-1, 1]. Throws ErrorCode::undefined_value for a zero
// vector and ErrorCode::precondition for a length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

// Left-truncates `context` (on a character boundary) so that context + text
// fits in `max_chars` code points; 0 disables the limit. Returns the kept
// context and whether anything was dropped.
std::pair<std::string_view, bool> fit_context(std::string_view context,
                                              std::string_view text,
                                              std::size_t max_chars);

}  // namespace moc
