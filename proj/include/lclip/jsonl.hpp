#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lclip/ioutil.hpp"
#include "lclip/tensor.hpp"

namespace lclip {

struct JsonlLine {
  long line_number = 0;  // 1-based
  Json value;
};

inline std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<JsonlLine> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError(path.string() + ":" + std::to_string(n) + ": invalid JSON");
    out.push_back({n, std::move(j)});
  }
  if (in.bad()) throw IoError("read failed on " + path.string());
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::ostringstream os;
  for (const auto& row : rows) os << row.dump() << "\n";
  atomic_write_file(path, os.str());
}

namespace detail {

inline std::string line_context(const std::filesystem::path& path, long line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace detail

// --- File schemas -----------------------------------------------------------

// Sidecar image features: {"key": str, "patches": [[f32,...],...]}
struct FeatureTable {
  std::unordered_map<std::string, Tensor> patches;

  const Tensor& get(const std::string& key) const {
    auto it = patches.find(key);
    if (it == patches.end()) throw DataError("unknown image feature key \"" + key + "\"");
    return it->second;
  }
};

inline FeatureTable read_features(const std::filesystem::path& path) {
  FeatureTable table;
  for (const auto& [line, j] : read_jsonl(path)) {
    const std::string where = detail::line_context(path, line);
    reject_unknown_keys(j, {"key", "patches"}, where);
    const std::string key = require_string(j, "key", where);
    const Json& rows = require_field(j, "patches", where);
    if (!rows.is_array() || rows.empty() || !rows[0].is_array())
      throw DataError(where + ": \"patches\" must be a non-empty array of arrays");
    const std::size_t cols = rows[0].size();
    Tensor t(Shape{rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].is_array() || rows[i].size() != cols)
        throw DataError(where + ": ragged patch rows");
      for (std::size_t c = 0; c < cols; ++c) t(i, c) = rows[i][c].get<double>();
    }
    table.patches[key] = std::move(t);
  }
  return table;
}

inline Json features_row(const std::string& key, const Tensor& patches) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < patches.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < patches.cols(); ++j)
      row.push_back(static_cast<float>(patches(i, j)));
    rows.push_back(std::move(row));
  }
  return Json{{"key", key}, {"patches", rows}};
}

// Scoring input: {"id": str, "image": str, "candidate": str, "refs": [str,...]?}
struct ScoreInputRecord {
  long line = 0;
  std::string id, image, candidate;
  std::vector<std::string> refs;
};

inline std::vector<ScoreInputRecord> read_score_input(const std::filesystem::path& path) {
  std::vector<ScoreInputRecord> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    const std::string where = detail::line_context(path, line);
    reject_unknown_keys(j, {"id", "image", "candidate", "refs"}, where);
    ScoreInputRecord rec;
    rec.line = line;
    rec.id = require_string(j, "id", where);
    rec.image = require_string(j, "image", where);
    rec.candidate = require_string(j, "candidate", where);
    if (j.contains("refs")) rec.refs = j.at("refs").get<std::vector<std::string>>();
    out.push_back(std::move(rec));
  }
  return out;
}

// Ratings: {"id": str, "rating": float, "score": float}
struct RatingRow {
  std::string id;
  double rating = 0, score = 0;
};

inline std::vector<RatingRow> read_ratings(const std::filesystem::path& path) {
  std::vector<RatingRow> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    const std::string where = detail::line_context(path, line);
    reject_unknown_keys(j, {"id", "rating", "score"}, where);
    out.push_back({require_string(j, "id", where), require_number(j, "rating", where),
                   require_number(j, "score", where)});
  }
  return out;
}

// Pascal pairs: {"image", "a", "b", "category", "choice", "refs": [...]}
struct PairRow {
  std::string image, a, b, category;
  std::string choice;
  std::vector<std::string> refs;
};

inline std::vector<PairRow> read_pairs(const std::filesystem::path& path) {
  std::vector<PairRow> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    const std::string where = detail::line_context(path, line);
    reject_unknown_keys(j, {"image", "a", "b", "category", "choice", "refs"}, where);
    PairRow row;
    row.image = require_string(j, "image", where);
    row.a = require_string(j, "a", where);
    row.b = require_string(j, "b", where);
    row.category = require_string(j, "category", where);
    row.choice = require_string(j, "choice", where);
    if (row.choice != "A" && row.choice != "B")
      throw DataError(where + ": \"choice\" must be \"A\" or \"B\"");
    row.refs = require_field(j, "refs", where).get<std::vector<std::string>>();
    out.push_back(std::move(row));
  }
  return out;
}

// FOIL: {"image", "true", "foil", "refs": [...]}
struct FoilRow {
  std::string image, true_caption, foil_caption;
  std::vector<std::string> refs;
};

inline std::vector<FoilRow> read_foil(const std::filesystem::path& path) {
  std::vector<FoilRow> out;
  for (const auto& [line, j] : read_jsonl(path)) {
    const std::string where = detail::line_context(path, line);
    reject_unknown_keys(j, {"image", "true", "foil", "refs"}, where);
    FoilRow row;
    row.image = require_string(j, "image", where);
    row.true_caption = require_string(j, "true", where);
    row.foil_caption = require_string(j, "foil", where);
    if (row.true_caption == row.foil_caption)
      throw DataError(where + ": true and foil captions are identical");
    row.refs = require_field(j, "refs", where).get<std::vector<std::string>>();
    out.push_back(std::move(row));
  }
  return out;
}

// --- CSV --------------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct CsvWriter {
  std::string header;
  std::vector<std::string> rows;

  std::string dump() const {
    std::string out = header + "\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
  }

  void write(const std::filesystem::path& path) const { atomic_write_file(path, dump()); }
};

}  // namespace lclip
