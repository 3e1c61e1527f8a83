#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "moc/scoring.hpp"

namespace moc {

// Where a backend lives and how hard to push it.
struct Endpoint {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::string model;
  std::chrono::milliseconds timeout{60000};
  int max_in_flight = 4;
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{200};
  std::string api_key;  // sent as a bearer token when non-empty
  // Context + text budget in code points for scoring; 0 = unlimited.
  std::size_t max_context_chars = 0;
};

// JSON-over-HTTP POST with bounded concurrency and retries. Transport errors
// and 5xx responses are retried; 4xx and malformed bodies are protocol errors.
class HttpChannel {
 public:
  explicit HttpChannel(Endpoint endpoint);
  ~HttpChannel();
  HttpChannel(const HttpChannel&) = delete;
  HttpChannel& operator=(const HttpChannel&) = delete;

  nlohmann::json post(const std::string& path,
                      const nlohmann::json& body) const;
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  struct Gate;
  Endpoint endpoint_;
  std::unique_ptr<Gate> gate_;
};

// POST /v1/score {model, context?, text} -> {tokens, logprobs}
class HttpScorer final : public Scorer {
 public:
  explicit HttpScorer(Endpoint endpoint) : channel_(std::move(endpoint)) {}

  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context = {}) const override;
  std::string model() const override { return channel_.endpoint().model; }

 private:
  HttpChannel channel_;
};

// POST /v1/generate {model, prompt, temperature, top_p, top_k?, max_tokens}
//   -> {text, finish_reason}
class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(Endpoint endpoint) : channel_(std::move(endpoint)) {}

  Generation generate(std::string_view prompt,
                      const GenerationParams& params = {}) const override;
  std::string model() const override { return channel_.endpoint().model; }

 private:
  HttpChannel channel_;
};

// POST /v1/embed {model, texts} -> {vectors}
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(Endpoint endpoint) : channel_(std::move(endpoint)) {}

  std::vector<Embedding> embed(
      const std::vector<std::string>& texts) const override;
  std::string model() const override { return channel_.endpoint().model; }

 private:
  HttpChannel channel_;
};

}  // namespace moc
