#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moc/text.hpp"

// Line-oriented record files. Every file is JSON Lines: one object per line.
namespace moc::io {

using nlohmann::json;

// Streams a corpus file ({id, text, meta?} per line) one document at a time.
// Only the ids seen so far are retained, for duplicate detection.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);

  // Returns false at end of file. Throws ParseError naming the line.
  bool next(Document& doc);

  std::size_t line() const noexcept { return line_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
  std::set<std::string> seen_;
};

std::vector<Document> load_corpus(const std::filesystem::path& path);
void for_each_document(const std::filesystem::path& path,
                       const std::function<void(Document&&)>& fn);
void save_corpus(const std::vector<Document>& docs,
                 const std::filesystem::path& path);

json to_json(const Document& doc);
Document document_from_json(const json& j, std::size_t line = 0);

// ChunkSet records hold offsets only; chunk text is re-sliced from the
// corpus with attach_text() or load_chunksets(path, corpus).
json to_json(const ChunkSet& set);
ChunkSet chunkset_from_json(const json& j, std::size_t line = 0);

void save_chunkset(const ChunkSet& set, const std::filesystem::path& path);
void save_chunksets(const std::vector<ChunkSet>& sets,
                    const std::filesystem::path& path);
std::vector<ChunkSet> load_chunksets(const std::filesystem::path& path);
std::vector<ChunkSet> load_chunksets(const std::filesystem::path& path,
                                     const std::vector<Document>& corpus);
ChunkSet load_chunkset(const std::filesystem::path& path);

// Reads every line of a JSONL file, skipping blank lines.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn);

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const json& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::map<std::string, const Document*> index_by_id(
    const std::vector<Document>& corpus);

}  // namespace moc::io
