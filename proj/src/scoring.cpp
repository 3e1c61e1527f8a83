#include "moc/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "moc/error.hpp"
#include "moc/utf8.hpp"

namespace moc {

void validate(const ScoredText& st) {
  if (st.tokens.size() != st.logprobs.size()) {
    throw Error(ErrorCode::protocol,
                "token/logprob length mismatch (" +
                    std::to_string(st.tokens.size()) + " vs " +
                    std::to_string(st.logprobs.size()) + ")");
  }
  if (st.logprobs.empty()) {
    throw Error(ErrorCode::protocol, "scored text has no tokens");
  }
  for (double lp : st.logprobs) {
    if (!(lp <= 0.0)) {
      throw Error(ErrorCode::protocol,
                  "log-probability out of range: " + std::to_string(lp));
    }
  }
}

double perplexity(const ScoredText& st) {
  validate(st);
  double sum = 0.0;
  for (double lp : st.logprobs) sum += lp;
  return std::exp(-sum / double(st.logprobs.size()));
}

Embedding Embedder::embed_one(std::string_view text) const {
  auto out = embed({std::string(text)});
  if (out.size() != 1) {
    throw Error(ErrorCode::protocol, "embedder returned " +
                                         std::to_string(out.size()) +
                                         " vectors for one text");
  }
  return std::move(out.front());
}

double cosine(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), "cosine of vectors with different lengths");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    throw Error(ErrorCode::undefined_value, "cosine of a zero vector");
  }
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

std::pair<std::string_view, bool> fit_context(std::string_view context,
                                              std::string_view text,
                                              std::size_t max_chars) {
  if (max_chars == 0) return {context, false};
  const std::size_t text_len = utf8::length(text);
  const std::size_t ctx_len = utf8::length(context);
  if (text_len + ctx_len <= max_chars) return {context, false};
  const std::size_t keep = text_len >= max_chars ? 0 : max_chars - text_len;
  const std::size_t drop_bytes =
      utf8::advance(context, 0, ctx_len - keep);
  return {context.substr(drop_bytes), true};
}

}  // namespace moc
