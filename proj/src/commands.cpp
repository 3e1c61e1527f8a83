#include "moc/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "moc/dataset.hpp"
#include "moc/error.hpp"
#include "moc/io.hpp"
#include "moc/parallel.hpp"
#include "moc/utf8.hpp"

namespace moc {

using nlohmann::json;

namespace {

std::string format_k(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", k);
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(ErrorCode::config, msg);
}

// Chunk sets must cover exactly the corpus ids.
void check_alignment(const std::vector<Document>& corpus,
                     const std::vector<ChunkSet>& sets, bool require_all) {
  std::set<std::string> doc_ids, set_ids;
  for (const auto& d : corpus) doc_ids.insert(d.id);
  std::vector<std::string> orphans;
  for (const auto& s : sets) {
    if (!set_ids.insert(s.doc_id).second) {
      throw Error(ErrorCode::precondition,
                  "duplicate chunk set for document '" + s.doc_id + "'");
    }
    if (!doc_ids.count(s.doc_id)) orphans.push_back("chunkset:" + s.doc_id);
  }
  if (require_all) {
    for (const auto& id : doc_ids) {
      if (!set_ids.count(id)) orphans.push_back("document:" + id);
    }
  }
  if (!orphans.empty()) {
    std::string msg = "chunk sets do not align with the corpus; orphans:";
    for (const auto& o : orphans) msg += " " + o;
    throw Error(ErrorCode::precondition, msg);
  }
}

std::vector<ChunkSet> load_aligned(const std::filesystem::path& path,
                                   const std::vector<Document>& corpus,
                                   bool require_all) {
  auto sets = io::load_chunksets(path);
  check_alignment(corpus, sets, require_all);
  const auto index = io::index_by_id(corpus);
  for (auto& s : sets) attach_text(s, *index.at(s.doc_id));
  return sets;
}

void write_manifest(const std::filesystem::path& dir, const json& manifest) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorCode::io, "cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace

int run_command(const std::function<int()>& command, std::ostream& log) {
  try {
    return command();
  } catch (const Error& e) {
    log << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::config:
      case ErrorCode::io:
      case ErrorCode::parse:
      case ErrorCode::precondition:
        return kExitConfig;
      default:
        return kExitPartial;
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitPartial;
  }
}

json report_header(const std::string& command) {
  return {{"header",
           {{"command", command},
            {"created_at", utc_now()},
            {"version", kToolVersion}}}};
}

// ---- chunk ----

int cmd_chunk(const RunConfig& config, const ChunkArgs& args, std::ostream& log) {
  ChunkerConfig chunker = config.chunker;
  if (args.method) {
    try {
      chunker.method = parse_chunk_method(*args.method);
    } catch (const Error& e) {
      config_error(e.what());
    }
  }
  // Fail before any work when a backend is missing.
  if (chunker.method == ChunkMethod::moc) {
    require_roles(config, {"router", "experts"});
  } else if (chunker.method == ChunkMethod::semantic) {
    require_roles(config, {"embedder"});
  }

  const auto corpus = io::load_corpus(args.corpus);
  Backends backends(config, &corpus);
  const Embedder* embedder = nullptr;
  const Scorer* router = nullptr;
  Experts experts;
  if (chunker.method == ChunkMethod::semantic) embedder = &backends.embedder();
  if (chunker.method == ChunkMethod::moc) {
    router = &backends.scorer("router");
    experts = backends.experts();
  }

  if (config.calibrate_avg && chunker.method != ChunkMethod::moc) {
    const auto cal =
        calibrate_avg_len(chunker, corpus, embedder, *config.calibrate_avg);
    chunker = cal.config;
    log << "calibrated " << to_string(chunker.method) << " to mean length "
        << fixed2(cal.achieved_mean) << " in " << cal.iterations
        << " iterations" << (cal.converged ? "" : " (not converged)") << '\n';
  }

  MocOptions moc_options;
  moc_options.windows = config.moc.windows;
  moc_options.router.prompt_template = config.moc.routing_prompt;
  moc_options.generation.placeholder = config.moc.placeholder;
  moc_options.generation.params = config.moc.generation;
  moc_options.extract.max_ratio = config.moc.max_ratio;
  moc_options.fallback_label = config.moc.fallback_label;

  std::vector<std::optional<ChunkSet>> results(corpus.size());
  std::vector<std::string> errors(corpus.size());
  std::vector<json> details(corpus.size());
  parallel_for(corpus.size(), config.concurrency, [&](std::size_t i) {
    try {
      if (chunker.method == ChunkMethod::moc) {
        MocResult r = moc_chunk(corpus[i], *router, experts, moc_options);
        json windows = json::array();
        for (const auto& w : r.windows) {
          json jw = {{"index", w.index},
                     {"region", {w.region_start, w.region_end}},
                     {"rules", w.rules.rules.size()},
                     {"exact", w.extraction.count(MatchMode::exact)},
                     {"recovered", w.extraction.count(MatchMode::recovered)},
                     {"failed", w.extraction.count(MatchMode::failed)},
                     {"buffered", w.buffered}};
          json rules = json::array();
          for (const auto& r : w.rules.rules) {
            rules.push_back({{"prefix", r.prefix},
                             {"placeholder", r.placeholder},
                             {"suffix", r.suffix},
                             {"literal", r.literal}});
          }
          json outcomes = json::array();
          for (const auto& o : w.extraction.rules) {
            json jo = {{"rule", o.rule_index},
                       {"mode", to_string(o.mode)},
                       {"distance", o.distance}};
            if (o.span) jo["span"] = {o.span->first, o.span->second};
            outcomes.push_back(std::move(jo));
          }
          jw["rule_list"] = {{"model", w.rules.model},
                             {"rules", rules},
                             {"raw", w.rules.raw}};
          jw["extraction"] = outcomes;
          if (w.label) {
            jw["label"] = w.label->value();
            jw["rule_list"]["label"] = w.label->value();
          }
          if (!w.error.empty()) jw["error"] = w.error;
          windows.push_back(std::move(jw));
        }
        details[i] = {{"windows", windows}, {"notices", r.notices}};
        results[i] = std::move(r.chunks);
      } else {
        results[i] = run_chunker(chunker, corpus[i], embedder);
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::size_t ok = 0, total_chunks = 0;
  double total_len = 0;
  std::vector<ChunkSet> sets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!results[i]) {
      log << "document '" << corpus[i].id << "' failed: " << errors[i] << '\n';
      continue;
    }
    ++ok;
    total_chunks += results[i]->size();
    total_len += mean_chunk_length(*results[i]) * double(results[i]->size());
    sets.push_back(*results[i]);
  }
  io::save_chunksets(sets, args.out);
  const double mean = total_chunks ? total_len / double(total_chunks) : 0.0;

  if (args.report) {
    io::JsonlWriter report(*args.report);
    report.write(report_header("chunk"));
    report.write({{"type", "params"},
                  {"method", to_string(chunker.method)},
                  {"target_len", chunker.target_len},
                  {"overlap", chunker.overlap},
                  {"similarity_threshold", chunker.similarity_threshold},
                  {"config", config.effective}});
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      json rec = {{"type", "doc"}, {"doc_id", corpus[i].id}};
      if (results[i]) {
        rec["chunks"] = results[i]->size();
        rec["mean_length"] = mean_chunk_length(*results[i]);
      } else {
        rec["error"] = errors[i];
      }
      if (!details[i].is_null()) rec.update(details[i]);
      report.write(rec);
    }
    report.write({{"type", "summary"},
                  {"documents", corpus.size()},
                  {"chunked", ok},
                  {"chunks", total_chunks},
                  {"mean_length", mean}});
  }

  log << "chunked " << ok << "/" << corpus.size() << " documents ("
      << to_string(chunker.method) << "), " << total_chunks
      << " chunks, mean chunk length " << fixed2(mean) << '\n';
  return ok == corpus.size() ? kExitOk : kExitPartial;
}

// ---- eval ----

namespace {

const std::set<std::string> kMetrics{"bc", "cs", "cs_c", "cs_i", "ds", "cp"};

struct QaRecord {
  std::string id;
  std::string answer;
  std::vector<std::pair<std::string, std::size_t>> retrieved;
};

std::vector<QaRecord> load_qa(const std::filesystem::path& path) {
  std::vector<QaRecord> out;
  io::for_each_record(path, [&](const json& r, std::size_t line) {
    try {
      QaRecord q;
      q.id = r.value("id", std::to_string(line));
      q.answer = r.at("answer").get<std::string>();
      for (const auto& ref : r.at("retrieved")) {
        q.retrieved.emplace_back(ref.at("doc_id").get<std::string>(),
                                 ref.at("index").get<std::size_t>());
      }
      out.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad QA record: ") + e.what(), line);
    }
  });
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / double(v.size());
}

}  // namespace

int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log) {
  std::set<std::string> wanted;
  for (const auto& m : args.metrics) {
    if (!kMetrics.count(m)) config_error("unknown metric '" + m + "'");
    wanted.insert(m);
  }
  if (wanted.empty()) config_error("no metrics requested");
  const bool needs_scorer = wanted.count("bc") || wanted.count("cs") ||
                            wanted.count("cs_c") || wanted.count("cs_i") ||
                            wanted.count("cp");
  if (needs_scorer) require_roles(config, {"scorer"});
  if (wanted.count("ds")) require_roles(config, {"embedder"});
  if (wanted.count("cp") && !args.qa) config_error("metric cp needs --qa");

  const auto corpus = io::load_corpus(args.corpus);
  const auto sets = load_aligned(args.chunks, corpus, true);
  const std::vector<QaRecord> qa =
      wanted.count("cp") ? load_qa(*args.qa) : std::vector<QaRecord>{};

  Backends backends(config, &corpus);
  const Scorer* scorer = needs_scorer ? &backends.scorer("scorer") : nullptr;
  const Embedder* embedder = wanted.count("ds") ? &backends.embedder() : nullptr;

  // Graph metrics: name -> spec.
  std::vector<std::pair<std::string, GraphSpec>> graphs;
  if (wanted.count("cs_c")) graphs.push_back({"cs_c", {GraphVariant::complete, 0}});
  if (wanted.count("cs_i")) {
    graphs.push_back({"cs_i", {GraphVariant::sequence, config.metrics.delta}});
  }
  if (wanted.count("cs")) {
    graphs.push_back({"cs", {config.metrics.graph, config.metrics.delta}});
  }

  std::vector<json> records(sets.size());
  std::vector<bool> failed(sets.size(), false);
  parallel_for(sets.size(), config.concurrency, [&](std::size_t i) {
    const ChunkSet& cs = sets[i];
    json rec = {{"type", "doc"}, {"doc_id", cs.doc_id}, {"chunks", cs.size()}};
    json errs = json::object();
    auto attempt = [&](const std::string& name, auto&& fn) {
      try {
        fn();
      } catch (const std::exception& e) {
        errs[name] = e.what();
      }
    };
    if (wanted.count("bc")) {
      attempt("bc", [&] { rec["bc"] = document_boundary_clarity(cs, *scorer); });
    }
    std::map<std::pair<int, std::size_t>, EdgeWeights> cache;
    for (const auto& [name, spec] : graphs) {
      attempt(name, [&] {
        const auto key = std::make_pair(int(spec.variant), spec.delta);
        auto it = cache.find(key);
        if (it == cache.end()) {
          it = cache.emplace(key, compute_edge_weights(cs, *scorer, spec)).first;
        }
        json by_k = json::object();
        for (double k : config.metrics.k) {
          by_k[format_k(k)] = chunk_stickiness(it->second.threshold(k));
        }
        rec[name] = by_k;
      });
    }
    if (wanted.count("ds")) {
      attempt("ds", [&] { rec["ds"] = dissimilarity(cs, *embedder); });
    }
    if (!errs.empty()) {
      rec["errors"] = errs;
      failed[i] = true;
    }
    records[i] = std::move(rec);
  });

  // Conditional support over QA records.
  std::map<std::string, const ChunkSet*> by_id;
  for (const auto& s : sets) by_id[s.doc_id] = &s;
  std::vector<json> cp_records(qa.size());
  std::vector<bool> cp_failed(qa.size(), false);
  parallel_for(qa.size(), config.concurrency, [&](std::size_t i) {
    json rec = {{"type", "cp"}, {"id", qa[i].id}};
    try {
      std::vector<Chunk> retrieved;
      for (const auto& [doc_id, index] : qa[i].retrieved) {
        auto it = by_id.find(doc_id);
        if (it == by_id.end() || index >= it->second->size()) {
          throw Error(ErrorCode::precondition,
                      "unknown chunk " + doc_id + "#" + std::to_string(index));
        }
        retrieved.push_back(it->second->chunks[index]);
      }
      rec["cp"] = conditional_support(qa[i].answer, retrieved, *scorer);
    } catch (const std::exception& e) {
      rec["error"] = e.what();
      cp_failed[i] = true;
    }
    cp_records[i] = std::move(rec);
  });

  // Aggregates over documents where the metric is defined.
  json aggregate = {{"type", "aggregate"}, {"documents", sets.size()}};
  std::size_t n_failed = 0;
  for (bool f : failed) n_failed += f;
  aggregate["failed_documents"] = n_failed;
  auto collect = [&](const std::string& name) {
    std::vector<double> v;
    for (const auto& r : records) {
      if (r.contains(name)) v.push_back(r[name].get<double>());
    }
    return v;
  };
  if (wanted.count("bc")) aggregate["bc"] = mean_of(collect("bc"));
  if (wanted.count("ds")) aggregate["ds"] = mean_of(collect("ds"));
  for (const auto& [name, spec] : graphs) {
    json by_k = json::object();
    for (double k : config.metrics.k) {
      std::vector<double> v;
      for (const auto& r : records) {
        if (r.contains(name)) v.push_back(r[name][format_k(k)].get<double>());
      }
      by_k[format_k(k)] = mean_of(v);
    }
    aggregate[name] = by_k;
  }
  if (wanted.count("cp")) {
    std::vector<double> v;
    for (const auto& r : cp_records) {
      if (r.contains("cp")) v.push_back(r["cp"].get<double>());
    }
    aggregate["cp"] = mean_of(v);
    aggregate["qa_records"] = qa.size();
  }

  json params = {{"type", "params"},
                 {"metrics", std::vector<std::string>(wanted.begin(), wanted.end())},
                 {"k", config.metrics.k},
                 {"delta", config.metrics.delta},
                 {"graph", config.metrics.graph == GraphVariant::complete
                               ? "complete"
                               : "sequence"},
                 {"config", config.effective}};
  if (scorer) params["scorer"] = scorer->model();
  if (embedder) params["embedder"] = embedder->model();

  io::JsonlWriter out(args.out);
  out.write(report_header("eval"));
  out.write(params);
  for (const auto& r : records) out.write(r);
  for (const auto& r : cp_records) out.write(r);
  out.write(aggregate);

  std::size_t cp_bad = 0;
  for (bool f : cp_failed) cp_bad += f;
  log << "evaluated " << sets.size() - n_failed << "/" << sets.size()
      << " documents";
  if (aggregate.contains("bc")) log << ", BC " << aggregate["bc"].dump();
  for (const auto& [name, spec] : graphs) log << ", " << name << " " << aggregate[name].dump();
  if (aggregate.contains("ds")) log << ", DS " << aggregate["ds"].dump();
  if (aggregate.contains("cp")) log << ", CP " << aggregate["cp"].dump();
  log << '\n';
  return n_failed == 0 && cp_bad == 0 ? kExitOk : kExitPartial;
}

// ---- pearson ----

std::vector<double> CsvTable::numeric(const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) {
    throw Error(ErrorCode::precondition, "no column '" + column + "'");
  }
  const auto c = std::size_t(it - columns.begin());
  std::vector<double> out;
  for (const auto& row : rows) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(row[c], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != row[c].size()) {
      throw ParseError("column '" + column + "': '" + row[c] + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    auto cells = split(line);
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw ParseError("expected " + std::to_string(t.columns.size()) +
                           " cells, found " + std::to_string(cells.size()),
                       line_no, line);
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.columns.empty()) throw ParseError("empty table " + path.string());
  return t;
}

std::vector<std::pair<std::string, double>> correlate_columns(
    const CsvTable& table, const std::string& target) {
  const auto y = table.numeric(target);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& col : table.columns) {
    if (col == target) continue;
    std::vector<double> x;
    try {
      x = table.numeric(col);
    } catch (const ParseError&) {
      continue;  // label column
    }
    out.emplace_back(col, pearson(x, y));
  }
  return out;
}

int cmd_pearson(const PearsonArgs& args, std::ostream& log) {
  const CsvTable table = read_csv(args.table);
  const std::string target = args.target.value_or(table.columns.back());
  const auto results = correlate_columns(table, target);
  json body = json::object();
  for (const auto& [col, r] : results) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", r);
    log << col << " vs " << target << ": " << buf << '\n';
    body[col] = r;
  }
  if (args.out) {
    io::JsonlWriter out(*args.out);
    out.write(report_header("pearson"));
    out.write({{"type", "pearson"},
               {"target", target},
               {"rows", table.rows.size()},
               {"correlations", body}});
  }
  return kExitOk;
}

// ---- dataset ----

namespace {

json verdict_json(const std::string& doc_id, const CleaningVerdict& v) {
  return {{"doc_id", doc_id},
          {"chunk_index", v.chunk_index},
          {"min_edit_distance", v.min_edit_distance},
          {"threshold", v.threshold},
          {"flagged", v.flagged},
          {"source_start", v.start},
          {"source_end", v.end}};
}

json generation_json(const GenerationParams& g) {
  json j = {{"temperature", g.temperature},
            {"top_p", g.top_p},
            {"max_new_tokens", g.max_tokens}};
  if (g.top_k) j["top_k"] = *g.top_k;
  return j;
}

struct CleanTotals {
  std::size_t chunks = 0;
  std::size_t flagged = 0;
  double rate() const { return chunks ? double(flagged) / double(chunks) : 0.0; }
};

}  // namespace

int cmd_dataset(const RunConfig& config, const DatasetArgs& args,
                std::ostream& log) {
  static const std::set<std::string> kSubs{"windows", "distill", "clean",
                                           "rules",   "label",   "emit"};
  if (!kSubs.count(args.subcommand)) {
    config_error("unknown dataset subcommand '" + args.subcommand + "'");
  }
  const auto& sub = args.subcommand;
  if (sub == "distill") require_roles(config, {"distiller"});
  if ((sub == "rules" || sub == "label" || sub == "emit") && !args.chunks) {
    config_error("dataset " + sub + " needs --chunks");
  }
  if (sub == "clean" && !args.generated) {
    config_error("dataset clean needs --generated");
  }

  const DatasetParams& p = config.dataset;
  json manifest = {{"subcommand", sub},
                   {"parameters",
                    {{"max_tokens", p.windows.max_tokens},
                     {"chars_per_token", p.windows.chars_per_token},
                     {"anchor_len", p.anchor_len},
                     {"placeholder", p.placeholder},
                     {"router_chars", p.router_chars},
                     {"imbalance_ratio", p.imbalance_ratio},
                     {"hallucination_ratio", kHallucinationRatio},
                     {"generation", generation_json(p.generation)},
                     {"seed", config.seed}}}};
  json failures = json::array();
  std::filesystem::create_directories(args.out_dir);
  int code = kExitOk;

  // The manifest is written on every path out of here.
  try {
    const auto corpus = io::load_corpus(args.corpus);
    manifest["documents"] = corpus.size();
    const auto index = io::index_by_id(corpus);

    if (sub == "windows") {
      io::JsonlWriter out(args.out_dir / "windows.jsonl");
      std::size_t n = 0;
      for (const auto& doc : corpus) {
        const auto ws = sliding_windows(doc, p.windows);
        for (std::size_t i = 0; i < ws.size(); ++i) {
          out.write({{"doc_id", doc.id},
                     {"index", i},
                     {"start", ws[i].start},
                     {"end", ws[i].end}});
        }
        n += ws.size();
      }
      manifest["counts"] = {{"windows", n}};
      log << "windowed " << corpus.size() << " documents into " << n
          << " windows\n";

    } else if (sub == "distill") {
      Backends backends(config, &corpus);
      const Generator& gen = backends.generator("distiller");
      manifest["parameters"]["distiller"] = gen.model();
      std::vector<std::optional<DistillResult>> results(corpus.size());
      std::vector<std::string> errors(corpus.size());
      parallel_for(corpus.size(), config.concurrency, [&](std::size_t i) {
        try {
          results[i] = distill_document(corpus[i], gen, p.windows, p.generation);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
      io::JsonlWriter raw(args.out_dir / "raw.jsonl");
      io::JsonlWriter generated(args.out_dir / "generated.jsonl");
      io::JsonlWriter verdicts(args.out_dir / "verdicts.jsonl");
      io::JsonlWriter flagged(args.out_dir / "flagged.jsonl");
      std::vector<ChunkSet> sets;
      CleanTotals totals;
      std::size_t windows = 0;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& id = corpus[i].id;
        if (!results[i]) {
          failures.push_back({{"doc_id", id}, {"error", errors[i]}});
          log << "document '" << id << "' failed: " << errors[i] << '\n';
          continue;
        }
        const DistillResult& r = *results[i];
        std::vector<std::string> pieces;
        for (std::size_t w = 0; w < r.raw.size(); ++w) {
          raw.write({{"doc_id", id}, {"window", w}, {"text", r.raw[w]}});
          for (auto& piece : parse_tagged_chunks(r.raw[w])) {
            pieces.push_back(std::move(piece));
          }
        }
        windows += r.raw.size();
        generated.write({{"doc_id", id}, {"chunks", pieces}});
        for (const auto& v : r.verdicts) {
          verdicts.write(verdict_json(id, v));
          ++totals.chunks;
          if (v.flagged) {
            ++totals.flagged;
            json f = verdict_json(id, v);
            if (v.chunk_index < pieces.size()) f["text"] = pieces[v.chunk_index];
            flagged.write(f);
          }
        }
        for (const auto& n : r.notices) log << id << ": " << n << '\n';
        sets.push_back(r.chunks);
      }
      io::save_chunksets(sets, args.out_dir / "chunks.jsonl");
      manifest["counts"] = {{"distilled", sets.size()},
                            {"windows", windows},
                            {"generated_chunks", totals.chunks},
                            {"flagged", totals.flagged}};
      manifest["flag_rate"] = totals.rate();
      log << "distilled " << sets.size() << "/" << corpus.size()
          << " documents, " << totals.flagged << "/" << totals.chunks
          << " chunks flagged\n";
      if (sets.size() != corpus.size()) code = kExitPartial;

    } else if (sub == "clean") {
      io::JsonlWriter verdicts(args.out_dir / "verdicts.jsonl");
      io::JsonlWriter flagged(args.out_dir / "flagged.jsonl");
      CleanTotals totals;
      io::for_each_record(*args.generated, [&](const json& r, std::size_t line) {
        std::string id;
        std::vector<std::string> pieces;
        try {
          id = r.at("doc_id").get<std::string>();
          pieces = r.at("chunks").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
          throw ParseError(std::string("bad generated record: ") + e.what(), line);
        }
        auto it = index.find(id);
        if (it == index.end()) {
          failures.push_back({{"doc_id", id}, {"error", "unknown document"}});
          return;
        }
        for (std::size_t c = 0; c < pieces.size(); ++c) {
          try {
            const auto v = detect_hallucination(pieces[c], *it->second, c);
            verdicts.write(verdict_json(id, v));
            ++totals.chunks;
            if (v.flagged) {
              ++totals.flagged;
              json f = verdict_json(id, v);
              f["text"] = pieces[c];
              flagged.write(f);
            }
          } catch (const std::exception& e) {
            failures.push_back(
                {{"doc_id", id}, {"chunk_index", c}, {"error", e.what()}});
          }
        }
      });
      manifest["counts"] = {{"chunks", totals.chunks}, {"flagged", totals.flagged}};
      manifest["flag_rate"] = totals.rate();
      log << "checked " << totals.chunks << " chunks, " << totals.flagged
          << " flagged\n";

    } else {
      const auto sets = load_aligned(*args.chunks, corpus, false);
      std::set<std::string> excluded;
      if (args.verdicts) {
        io::for_each_record(*args.verdicts, [&](const json& r, std::size_t) {
          if (r.value("flagged", false)) excluded.insert(r.at("doc_id").get<std::string>());
        });
      }

      if (sub == "rules") {
        io::JsonlWriter out(args.out_dir / "rules.jsonl");
        std::size_t n = 0;
        for (const auto& cs : sets) {
          try {
            const auto rules = make_rules(cs, p.anchor_len, p.placeholder);
            json list = json::array();
            for (const auto& r : rules.rules) {
              list.push_back({{"prefix", r.prefix},
                              {"placeholder", r.placeholder},
                              {"suffix", r.suffix},
                              {"literal", r.literal}});
            }
            out.write({{"doc_id", cs.doc_id},
                       {"label", label_granularity(cs).value()},
                       {"rules", list}});
            n += rules.rules.size();
          } catch (const std::exception& e) {
            failures.push_back({{"doc_id", cs.doc_id}, {"error", e.what()}});
          }
        }
        manifest["counts"] = {{"chunk_sets", sets.size()}, {"rules", n}};
        log << "wrote " << n << " rules for " << sets.size() << " documents\n";

      } else if (sub == "label") {
        io::JsonlWriter out(args.out_dir / "labels.jsonl");
        std::array<std::size_t, 4> counts{};
        for (const auto& cs : sets) {
          try {
            const auto label = label_granularity(cs);
            out.write({{"doc_id", cs.doc_id},
                       {"label", label.value()},
                       {"mean_length", mean_chunk_length(cs)}});
            ++counts[std::size_t(label.value())];
          } catch (const std::exception& e) {
            failures.push_back({{"doc_id", cs.doc_id}, {"error", e.what()}});
          }
        }
        manifest["counts"] = {{"label_0", counts[0]}, {"label_1", counts[1]},
                              {"label_2", counts[2]}, {"label_3", counts[3]}};
        log << "labelled " << sets.size() << " documents\n";

      } else {  // emit
        std::vector<Document> docs;
        std::vector<ChunkSet> kept;
        std::vector<ChunkerSample> chunker;
        std::vector<std::string> notices;
        for (const auto& cs : sets) {
          if (excluded.count(cs.doc_id)) {
            notices.push_back("document '" + cs.doc_id + "' excluded: flagged chunks");
            continue;
          }
          if (cs.empty()) {
            failures.push_back({{"doc_id", cs.doc_id}, {"error", "empty chunk set"}});
            continue;
          }
          const Document& doc = *index.at(cs.doc_id);
          try {
            auto samples = make_chunker_samples(doc, cs, p.windows, p.anchor_len,
                                                p.placeholder);
            chunker.insert(chunker.end(), samples.begin(), samples.end());
            docs.push_back(doc);
            kept.push_back(cs);
          } catch (const std::exception& e) {
            failures.push_back({{"doc_id", cs.doc_id}, {"error", e.what()}});
          }
        }
        const auto shaping = shape_router_texts(docs, kept, p.router_chars);
        notices.insert(notices.end(), shaping.notices.begin(),
                       shaping.notices.end());
        EmitOptions eo;
        eo.imbalance_ratio = p.imbalance_ratio;
        eo.parameters = manifest["parameters"];
        json emitted = emit_training_sets(chunker, shaping.samples,
                                          args.out_dir, eo);
        manifest.update(emitted);
        manifest["notices"] = notices;
        for (const auto& n : notices) log << n << '\n';
        for (const auto& w : emitted["warnings"]) {
          log << "warning: " << w.get<std::string>() << '\n';
        }
        log << "emitted " << chunker.size() << " expert samples and "
            << shaping.samples.size() << " router samples\n";
      }
    }
  } catch (const Error& e) {
    manifest["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    manifest["failures"] = failures;
    write_manifest(args.out_dir, manifest);
    throw;
  }
  manifest["failures"] = failures;
  if (!failures.empty()) {
    code = kExitPartial;
    log << failures.size() << " failures; see manifest.json\n";
  }
  write_manifest(args.out_dir, manifest);
  return code;
}

}  // namespace moc
