#include "moc/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "moc/error.hpp"
#include "moc/http_backend.hpp"
#include "moc/io.hpp"
#include "moc/offline.hpp"

namespace moc {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(ErrorCode::config, msg);
}

const std::set<std::string> kScorerRoles{"scorer", "router"};
const std::set<std::string> kGeneratorRoles{
    "expert", "expert_0", "expert_1", "expert_2", "expert_3", "distiller"};
const std::set<std::string> kEmbedderRoles{"embedder"};

// Reads typed fields from one JSON object and rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) config_error(name_ + ": expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      config_error(name_ + "." + key + ": wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) config_error(name_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_generation(Section& s, GenerationParams& g) {
  s.read("temperature", g.temperature);
  s.read("top_p", g.top_p);
  int top_k = 0;
  s.read("top_k", top_k);
  if (top_k > 0) g.top_k = top_k;
  s.read("max_new_tokens", g.max_tokens);
  if (g.max_tokens <= 0) config_error("max_new_tokens must be positive");
}

void read_windows(Section& s, WindowOptions& w) {
  s.read("max_tokens", w.max_tokens);
  s.read("chars_per_token", w.chars_per_token);
  if (w.max_tokens == 0 || !(w.chars_per_token > 0)) {
    config_error("window budget must be positive");
  }
}

void check_placeholder(const std::string& p) {
  if (!is_placeholder(p)) config_error("unknown placeholder '" + p + "'");
}

BackendSpec parse_backend(const std::string& role, const json& j) {
  if (!kScorerRoles.count(role) && !kGeneratorRoles.count(role) &&
      !kEmbedderRoles.count(role)) {
    config_error("backends: unknown role '" + role + "'");
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    config_error("backends." + role + ": needs a string 'kind'");
  }
  BackendSpec spec{j["kind"].get<std::string>(), j};
  spec.options.erase("kind");
  std::set<std::string> kinds;
  if (kScorerRoles.count(role)) kinds = {"http", "ngram", "uniform", "fixture"};
  if (kGeneratorRoles.count(role)) kinds = {"http", "fixture"};
  if (kEmbedderRoles.count(role)) kinds = {"http", "hashing", "fixture"};
  if (!kinds.count(spec.kind)) {
    config_error("backends." + role + ": kind '" + spec.kind +
                 "' cannot serve this role");
  }
  if (spec.kind == "http" &&
      (!spec.options.contains("base_url") || !spec.options.contains("model"))) {
    config_error("backends." + role + ": http needs base_url and model");
  }
  if (spec.kind == "fixture" && !spec.options.contains("path")) {
    config_error("backends." + role + ": fixture needs a path");
  }
  if (auto it = spec.options.find("api_key_env"); it != spec.options.end()) {
    if (!it->is_string() || !std::getenv(it->get<std::string>().c_str())) {
      config_error("backends." + role + ": api_key_env names an unset variable");
    }
  }
  return spec;
}

json get_option(const BackendSpec& spec, const std::string& key,
                const json& fallback) {
  auto it = spec.options.find(key);
  return it == spec.options.end() ? fallback : *it;
}

Endpoint make_endpoint(const std::string& role, const BackendSpec& spec) {
  Endpoint e;
  try {
    e.base_url = spec.options.at("base_url").get<std::string>();
    e.model = spec.options.at("model").get<std::string>();
    e.timeout = std::chrono::milliseconds(
        get_option(spec, "timeout_ms", 60000).get<long>());
    e.max_in_flight = get_option(spec, "max_in_flight", 4).get<int>();
    e.max_retries = get_option(spec, "max_retries", 2).get<int>();
    e.retry_backoff = std::chrono::milliseconds(
        get_option(spec, "retry_backoff_ms", 200).get<long>());
    e.max_context_chars =
        get_option(spec, "max_context_chars", 0).get<std::size_t>();
    // Secrets only come from the environment.
    const auto env = get_option(spec, "api_key_env", "").get<std::string>();
    if (!env.empty()) {
      const char* key = std::getenv(env.c_str());
      if (!key) config_error("backends." + role + ": $" + env + " is not set");
      e.api_key = key;
    }
  } catch (const json::exception& ex) {
    config_error("backends." + role + ": " + ex.what());
  }
  return e;
}

std::vector<std::string> training_texts(const BackendSpec& spec,
                                        const std::vector<Document>* corpus) {
  std::vector<std::string> texts;
  if (auto it = spec.options.find("training"); it != spec.options.end()) {
    for (const auto& d : io::load_corpus(it->get<std::string>())) {
      texts.push_back(d.text);
    }
  } else if (corpus) {
    for (const auto& d : *corpus) texts.push_back(d.text);
  }
  if (texts.empty()) config_error("n-gram scorer has no training text");
  return texts;
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig c;
  c.effective = j;
  Section top(j, "config");

  if (const json* b = top.child("backends")) {
    if (!b->is_object()) config_error("backends: expected an object");
    for (const auto& [role, spec] : b->items()) {
      c.backends[role] = parse_backend(role, spec);
    }
  }

  if (const json* m = top.child("metrics")) {
    Section s(*m, "metrics");
    if (const json* k = s.child("k")) {
      try {
        c.metrics.k = k->is_array() ? k->get<std::vector<double>>()
                                    : std::vector<double>{k->get<double>()};
      } catch (const json::exception&) {
        config_error("metrics.k: expected a number or a list of numbers");
      }
    }
    s.read("delta", c.metrics.delta);
    std::string graph = "complete";
    s.read("graph", graph);
    if (graph == "complete") {
      c.metrics.graph = GraphVariant::complete;
    } else if (graph == "sequence") {
      c.metrics.graph = GraphVariant::sequence;
    } else {
      config_error("metrics.graph: expected complete or sequence");
    }
    s.finish();
  }
  if (c.metrics.k.empty()) config_error("metrics.k: empty");
  for (double k : c.metrics.k) {
    if (!(k > 0 && k < 1)) {
      config_error("metrics.k: " + std::to_string(k) + " is outside (0, 1)");
    }
  }

  if (const json* ch = top.child("chunker")) {
    Section s(*ch, "chunker");
    std::string method = "fixed";
    s.read("method", method);
    try {
      c.chunker.method = parse_chunk_method(method);
    } catch (const Error& e) {
      config_error(std::string("chunker.method: ") + e.what());
    }
    s.read("target_len", c.chunker.target_len);
    s.read("overlap", c.chunker.overlap);
    s.read("similarity_threshold", c.chunker.similarity_threshold);
    std::string unit = "characters";
    s.read("unit", unit);
    if (unit == "characters") {
      c.chunker.measure.unit = LengthMeasure::Unit::characters;
    } else if (unit == "tokens") {
      c.chunker.measure.unit = LengthMeasure::Unit::tokens;
    } else {
      config_error("chunker.unit: expected characters or tokens");
    }
    s.read("chars_per_token", c.chunker.measure.chars_per_token);
    double avg = 0;
    s.read("calibrate_avg", avg);
    if (avg > 0) c.calibrate_avg = avg;
    s.finish();
    try {
      validate(c.chunker);
    } catch (const Error& e) {
      config_error(std::string("chunker: ") + e.what());
    }
  }

  if (const json* m = top.child("moc")) {
    Section s(*m, "moc");
    read_windows(s, c.moc.windows);
    s.read("placeholder", c.moc.placeholder);
    check_placeholder(c.moc.placeholder);
    read_generation(s, c.moc.generation);
    s.read("max_ratio", c.moc.max_ratio);
    if (!(c.moc.max_ratio >= 0 && c.moc.max_ratio <= 1)) {
      config_error("moc.max_ratio must be in [0, 1]");
    }
    int fallback = -1;
    s.read("fallback_label", fallback);
    if (fallback >= 0) {
      if (fallback > 3) config_error("moc.fallback_label must be in 0..3");
      c.moc.fallback_label = GranularityLabel(fallback);
    }
    s.read("routing_prompt", c.moc.routing_prompt);
    if (c.moc.routing_prompt.find("{text}") == std::string::npos) {
      config_error("moc.routing_prompt needs a {text} slot");
    }
    s.finish();
  }

  if (const json* d = top.child("dataset")) {
    Section s(*d, "dataset");
    read_windows(s, c.dataset.windows);
    s.read("anchor_len", c.dataset.anchor_len);
    if (c.dataset.anchor_len == 0) config_error("dataset.anchor_len must be >= 1");
    s.read("placeholder", c.dataset.placeholder);
    check_placeholder(c.dataset.placeholder);
    s.read("router_chars", c.dataset.router_chars);
    if (c.dataset.router_chars == 0) config_error("dataset.router_chars must be >= 1");
    s.read("imbalance_ratio", c.dataset.imbalance_ratio);
    read_generation(s, c.dataset.generation);
    s.finish();
  }

  top.read("concurrency", c.concurrency);
  if (c.concurrency == 0) config_error("concurrency must be >= 1");
  top.read("seed", c.seed);
  top.finish();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    config_error("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot - pos);
    if (part.empty()) config_error("override '" + key + "' has an empty key");
    if (!node->is_object()) {
      if (!node->is_null()) config_error("override '" + key + "' crosses a value");
      *node = json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  *node = std::move(value);
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides) {
  json j = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) config_error("cannot open config " + path->string());
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) config_error("config " + path->string() + " is not JSON");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // splitmix64 over the seed mixed with an FNV-1a hash of the stream name.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool has_expert(const RunConfig& config, int label) {
  return config.backends.count("expert_" + std::to_string(label)) ||
         config.backends.count("expert");
}

void require_roles(const RunConfig& config,
                   const std::vector<std::string>& roles) {
  for (const auto& role : roles) {
    if (role == "experts") {
      for (int k = 0; k < 4; ++k) {
        if (!has_expert(config, k)) {
          config_error("no backend for expert_" + std::to_string(k) +
                       " (set backends.expert or backends.expert_" +
                       std::to_string(k) + ")");
        }
      }
    } else if (!config.backends.count(role)) {
      config_error("no backend configured for role '" + role + "'");
    }
  }
}

Backends::Backends(const RunConfig& config, const std::vector<Document>* corpus)
    : config_(config), corpus_(corpus) {}

Backends::~Backends() = default;

const Scorer& Backends::scorer(const std::string& role) {
  if (auto it = scorers_.find(role); it != scorers_.end()) return *it->second;
  require_roles(config_, {role});
  const BackendSpec& spec = config_.backends.at(role);
  std::unique_ptr<Scorer> s;
  if (spec.kind == "http") {
    s = std::make_unique<HttpScorer>(make_endpoint(role, spec));
  } else if (spec.kind == "uniform") {
    s = std::make_unique<UniformScorer>(
        get_option(spec, "alphabet_size", 256).get<std::size_t>());
  } else if (spec.kind == "ngram") {
    NGramScorer::Options o;
    o.order = get_option(spec, "order", 2).get<std::size_t>();
    o.cache_weight = get_option(spec, "cache_weight", 0.0).get<double>();
    o.max_chars = get_option(spec, "max_chars", 0).get<std::size_t>();
    s = std::make_unique<NGramScorer>(training_texts(spec, corpus_), o);
  } else {
    auto t = std::make_unique<TableScorer>();
    io::for_each_record(spec.options.at("path").get<std::string>(),
                        [&](const json& r, std::size_t line) {
      if (!r.contains("text")) throw ParseError("fixture entry without text", line);
      std::optional<std::string> ctx;
      if (r.contains("context")) ctx = r["context"].get<std::string>();
      if (r.contains("ppl")) {
        t->add_perplexity(r["text"], ctx, r["ppl"].get<double>());
      } else {
        t->add(r["text"], ctx, r.at("logprobs").get<std::vector<double>>());
      }
    });
    s = std::move(t);
  }
  return *(scorers_[role] = std::move(s));
}

const Generator& Backends::generator(const std::string& role) {
  if (auto it = generators_.find(role); it != generators_.end()) return *it->second;
  require_roles(config_, {role});
  const BackendSpec& spec = config_.backends.at(role);
  std::unique_ptr<Generator> g;
  if (spec.kind == "http") {
    g = std::make_unique<HttpGenerator>(make_endpoint(role, spec));
  } else {
    auto f = std::make_unique<FixtureGenerator>();
    io::for_each_record(spec.options.at("path").get<std::string>(),
                        [&](const json& r, std::size_t line) {
      if (!r.contains("prompt") || !r.contains("text")) {
        throw ParseError("fixture entry needs prompt and text", line);
      }
      f->add(r["prompt"].get<std::string>(),
             Generation{r["text"].get<std::string>(),
                        r.value("finish_reason", std::string("stop"))});
    });
    g = std::move(f);
  }
  return *(generators_[role] = std::move(g));
}

const Embedder& Backends::embedder(const std::string& role) {
  if (auto it = embedders_.find(role); it != embedders_.end()) return *it->second;
  require_roles(config_, {role});
  const BackendSpec& spec = config_.backends.at(role);
  std::unique_ptr<Embedder> e;
  if (spec.kind == "http") {
    e = std::make_unique<HttpEmbedder>(make_endpoint(role, spec));
  } else if (spec.kind == "hashing") {
    e = std::make_unique<HashingEmbedder>(
        get_option(spec, "dimensions", 256).get<std::size_t>(),
        get_option(spec, "ngram", 3).get<std::size_t>());
  } else {
    auto f = std::make_unique<FixtureEmbedder>();
    io::for_each_record(spec.options.at("path").get<std::string>(),
                        [&](const json& r, std::size_t line) {
      if (!r.contains("text") || !r.contains("vector")) {
        throw ParseError("fixture entry needs text and vector", line);
      }
      f->add(r["text"].get<std::string>(), r["vector"].get<Embedding>());
    });
    e = std::move(f);
  }
  return *(embedders_[role] = std::move(e));
}

Experts Backends::experts() {
  require_roles(config_, {"experts"});
  Experts ex;
  for (int k = 0; k < 4; ++k) {
    const std::string role = "expert_" + std::to_string(k);
    ex.by_label[std::size_t(k)] =
        &generator(config_.backends.count(role) ? role : "expert");
  }
  return ex;
}

}  // namespace moc
