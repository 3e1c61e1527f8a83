#include "moc/io.hpp"

#include "moc/error.hpp"

namespace moc::io {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return in;
}

bool is_blank_line(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

json parse_line(const std::string& line, std::size_t line_no) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw ParseError("record is not an object", line_no);
    return j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line_no,
                     line);
  }
}

}  // namespace

CorpusReader::CorpusReader(const std::filesystem::path& path)
    : path_(path), in_(open_input(path)) {}

bool CorpusReader::next(Document& doc) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (is_blank_line(line)) continue;
    doc = document_from_json(parse_line(line, line_), line_);
    if (!seen_.insert(doc.id).second) {
      throw ParseError("duplicate document id '" + doc.id + "'", line_);
    }
    return true;
  }
  return false;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for_each_document(path, [&](Document&& d) { docs.push_back(std::move(d)); });
  return docs;
}

void for_each_document(const std::filesystem::path& path,
                       const std::function<void(Document&&)>& fn) {
  CorpusReader reader(path);
  Document doc;
  while (reader.next(doc)) fn(std::move(doc));
}

void save_corpus(const std::vector<Document>& docs,
                 const std::filesystem::path& path) {
  JsonlWriter out(path);
  for (const auto& d : docs) out.write(to_json(d));
}

json to_json(const Document& doc) {
  json j{{"id", doc.id}, {"text", doc.text}};
  if (!doc.meta.empty()) j["meta"] = doc.meta;
  return j;
}

Document document_from_json(const json& j, std::size_t line) {
  Document doc;
  try {
    if (!j.contains("id") || !j["id"].is_string()) {
      throw ParseError("missing string field \"id\"", line);
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      throw ParseError("missing string field \"text\"", line);
    }
    doc.id = j["id"].get<std::string>();
    doc.text = j["text"].get<std::string>();
    if (j.contains("meta")) {
      for (const auto& [k, v] : j["meta"].items()) {
        doc.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(e.what(), line);
  }
  try {
    validate(doc);
  } catch (const Error& e) {
    throw ParseError(e.what(), line);
  }
  return doc;
}

json to_json(const ChunkSet& set) {
  json chunks = json::array();
  for (const auto& c : set.chunks) {
    chunks.push_back({{"index", c.index}, {"start", c.start}, {"end", c.end}});
  }
  return {{"doc_id", set.doc_id}, {"method", set.method}, {"chunks", chunks}};
}

ChunkSet chunkset_from_json(const json& j, std::size_t line) {
  ChunkSet set;
  try {
    set.doc_id = j.at("doc_id").get<std::string>();
    set.method = j.value("method", std::string{});
    for (const auto& c : j.at("chunks")) {
      Chunk chunk;
      chunk.doc_id = set.doc_id;
      chunk.index = c.at("index").get<std::size_t>();
      chunk.start = c.at("start").get<std::size_t>();
      chunk.end = c.at("end").get<std::size_t>();
      set.chunks.push_back(std::move(chunk));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed chunk set: ") + e.what(), line);
  }
  return set;
}

void save_chunkset(const ChunkSet& set, const std::filesystem::path& path) {
  save_chunksets({set}, path);
}

void save_chunksets(const std::vector<ChunkSet>& sets,
                    const std::filesystem::path& path) {
  JsonlWriter out(path);
  for (const auto& s : sets) out.write(to_json(s));
}

std::vector<ChunkSet> load_chunksets(const std::filesystem::path& path) {
  std::vector<ChunkSet> sets;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& j, std::size_t line) {
    sets.push_back(chunkset_from_json(j, line));
    if (!seen.insert(sets.back().doc_id).second) {
      throw ParseError("duplicate doc_id '" + sets.back().doc_id + "'", line);
    }
  });
  return sets;
}

std::vector<ChunkSet> load_chunksets(const std::filesystem::path& path,
                                     const std::vector<Document>& corpus) {
  auto sets = load_chunksets(path);
  const auto index = index_by_id(corpus);
  for (auto& s : sets) {
    auto it = index.find(s.doc_id);
    if (it == index.end()) {
      throw Error(ErrorCode::invariant,
                  "chunk set references unknown document '" + s.doc_id + "'");
    }
    attach_text(s, *it->second);
  }
  return sets;
}

ChunkSet load_chunkset(const std::filesystem::path& path) {
  auto sets = load_chunksets(path);
  if (sets.size() != 1) {
    throw ParseError("expected exactly one chunk set in " + path.string());
  }
  return std::move(sets.front());
}

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_line(line)) continue;
    fn(parse_line(line, line_no), line_no);
  }
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error(ErrorCode::io, "cannot write " + path.string());
}

void JsonlWriter::write(const json& record) {
  out_ << record.dump() << '\n';
  if (!out_) throw Error(ErrorCode::io, "write failed: " + path_.string());
}

std::map<std::string, const Document*> index_by_id(
    const std::vector<Document>& corpus) {
  std::map<std::string, const Document*> index;
  for (const auto& d : corpus) index.emplace(d.id, &d);
  return index;
}

}  // namespace moc::io
