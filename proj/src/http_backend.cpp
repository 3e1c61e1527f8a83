#include "moc/http_backend.hpp"

#include <semaphore>
#include <thread>

#include <httplib.h>

#include "moc/error.hpp"

namespace moc {

using nlohmann::json;

struct HttpChannel::Gate {
  explicit Gate(int permits) : slots(permits) {}
  std::counting_semaphore<1024> slots;
};

HttpChannel::HttpChannel(Endpoint endpoint)
    : endpoint_(std::move(endpoint)) {
  if (endpoint_.max_in_flight < 1 || endpoint_.max_in_flight > 1024) {
    throw Error(ErrorCode::config, "max_in_flight must be in [1, 1024]");
  }
  if (endpoint_.base_url.empty()) {
    throw Error(ErrorCode::config, "backend endpoint has no base_url");
  }
  gate_ = std::make_unique<Gate>(endpoint_.max_in_flight);
}

HttpChannel::~HttpChannel() = default;

json HttpChannel::post(const std::string& path, const json& body) const {
  gate_->slots.acquire();
  struct Release {
    Gate* g;
    ~Release() { g->slots.release(); }
  } release{gate_.get()};

  const std::string payload = body.dump();
  const int attempts_allowed = 1 + std::max(0, endpoint_.max_retries);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
    httplib::Client client(endpoint_.base_url);
    const auto secs = endpoint_.timeout.count() / 1000;
    const auto usecs = (endpoint_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "POST " + path + ": " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "POST " + path + ": HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw Error(ErrorCode::protocol, "POST " + path + ": HTTP " +
                                           std::to_string(res->status) + ": " +
                                           res->body.substr(0, 200));
    } else {
      json j = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
      if (!j.is_object()) {
        throw Error(ErrorCode::protocol,
                    "POST " + path + ": response is not a JSON object");
      }
      return j;
    }
    if (attempt < attempts_allowed) {
      std::this_thread::sleep_for(endpoint_.retry_backoff * attempt);
    }
  }
  throw TransportError(last_error, attempts_allowed);
}

ScoredText HttpScorer::score(std::string_view text,
                             std::optional<std::string_view> context) const {
  require(!text.empty(), "cannot score empty text");
  json body{{"model", channel_.endpoint().model}, {"text", std::string(text)}};
  ScoredText st;
  if (context) {
    auto [kept, truncated] = fit_context(
        *context, text, channel_.endpoint().max_context_chars);
    body["context"] = std::string(kept);
    st.truncated = truncated;
  }
  const json res = channel_.post("/v1/score", body);
  try {
    st.tokens = res.at("tokens").get<std::vector<std::string>>();
    st.logprobs = res.at("logprobs").get<std::vector<double>>();
    st.context_len = res.value("context_len", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::protocol,
                std::string("score response: ") + e.what());
  }
  validate(st);
  return st;
}

Generation HttpGenerator::generate(std::string_view prompt,
                                   const GenerationParams& params) const {
  require(!prompt.empty(), "generation prompt is empty");
  json body{{"model", channel_.endpoint().model},
            {"prompt", std::string(prompt)},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_tokens}};
  if (params.top_k) body["top_k"] = *params.top_k;
  const json res = channel_.post("/v1/generate", body);
  try {
    Generation g;
    g.text = res.at("text").get<std::string>();
    g.finish_reason = res.value("finish_reason", std::string("stop"));
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::protocol,
                std::string("generate response: ") + e.what());
  }
}

std::vector<Embedding> HttpEmbedder::embed(
    const std::vector<std::string>& texts) const {
  for (const auto& t : texts) require(!t.empty(), "cannot embed empty text");
  json body{{"model", channel_.endpoint().model}, {"texts", texts}};
  const json res = channel_.post("/v1/embed", body);
  std::vector<Embedding> vectors;
  try {
    vectors = res.at("vectors").get<std::vector<Embedding>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::protocol,
                std::string("embed response: ") + e.what());
  }
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::protocol, "embed response has " +
                                         std::to_string(vectors.size()) +
                                         " vectors for " +
                                         std::to_string(texts.size()) +
                                         " texts");
  }
  for (const auto& v : vectors) {
    if (v.empty() || v.size() != vectors.front().size()) {
      throw Error(ErrorCode::protocol, "embed response has ragged vectors");
    }
  }
  return vectors;
}

}  // namespace moc
