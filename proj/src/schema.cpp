// Copyright 2026 The CaD-VAE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cadvae/schema.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cadvae/causal.hpp"
#include "cadvae/util.hpp"

namespace fs = std::filesystem;

namespace cadvae {
namespace {

constexpr const char* kConceptNames[4] = {"year", "director", "genre", "actor"};
constexpr const char* kUnknown = "UNKNOWN";

// Raw metadata: per original item id, one label string for year/director and
// label lists for genre/actor; empty means unknown.
struct RawItemMeta {
  std::string year, director;
  std::vector<std::string> genres, actors;
};

const char* kMl100kGenres[19] = {
    "unknown",     "Action",    "Adventure", "Animation", "Children's", "Comedy",  "Crime",
    "Documentary", "Drama",     "Fantasy",   "Film-Noir", "Horror",     "Musical", "Mystery",
    "Romance",     "Sci-Fi",    "Thriller",  "War",       "Western"};

bool looks_like_ml100k_item(const std::string& first_line) {
  return std::count(first_line.begin(), first_line.end(), '|') >= 20;
}

std::string year_from_release_date(const std::string& date) {
  // e.g. "01-Jan-1995" -> "1995"
  auto parts = split(date, '-');
  if (parts.size() == 3 && trim(parts[2]).size() == 4) return trim(parts[2]);
  return "";
}

std::map<int64_t, RawItemMeta> parse_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metadata file: " + path);
  std::string line;
  std::map<int64_t, RawItemMeta> meta;
  bool ml100k = false;
  bool format_detected = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!format_detected) {
      ml100k = looks_like_ml100k_item(line);
      format_detected = true;
    }

    RawItemMeta m;
    int64_t id;
    if (ml100k) {
      auto f = split(line, '|');
      if (f.size() < 24) {
        throw ParseError("metadata line " + std::to_string(line_no) +
                         ": expected 24 '|'-separated fields");
      }
      try {
        id = std::stoll(trim(f[0]));
      } catch (const std::exception&) {
        throw ParseError("metadata line " + std::to_string(line_no) + ": bad item id");
      }
      m.year = year_from_release_date(trim(f[2]));
      for (int g = 0; g < 19; ++g) {
        if (trim(f[5 + static_cast<size_t>(g)]) == "1" && g != 0) m.genres.push_back(kMl100kGenres[g]);
      }
    } else {
      auto f = split(line, '\t');
      if (f.size() < 2) {
        throw ParseError("metadata line " + std::to_string(line_no) +
                         ": expected tab-separated item-id, year, director, genres, actors");
      }
      try {
        id = std::stoll(trim(f[0]));
      } catch (const std::exception&) {
        throw ParseError("metadata line " + std::to_string(line_no) + ": bad item id");
      }
      m.year = f.size() > 1 ? trim(f[1]) : "";
      m.director = f.size() > 2 ? trim(f[2]) : "";
      auto parse_list = [](const std::string& field) {
        std::vector<std::string> out;
        for (const auto& part : split(field, ';')) {
          auto t = trim(part);
          if (!t.empty()) out.push_back(t);
        }
        return out;
      };
      if (f.size() > 3) m.genres = parse_list(f[3]);
      if (f.size() > 4) m.actors = parse_list(f[4]);
    }
    meta[id] = std::move(m);
  }
  if (meta.empty()) throw ParseError("metadata file is empty: " + path);
  return meta;
}

Eigen::MatrixXi dag_from_edges(const std::vector<std::string>& names,
                               const std::vector<std::pair<std::string, std::string>>& edges) {
  int k = static_cast<int>(names.size());
  Eigen::MatrixXi dag = Eigen::MatrixXi::Zero(k, k);
  auto index_of = [&](const std::string& n) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ValidationError("unknown concept in DAG edge: " + n);
    return static_cast<int>(it - names.begin());
  };
  for (const auto& [parent, child] : edges) {
    dag(index_of(parent), index_of(child)) = 1;
  }
  check_acyclic(dag);  // throws on cycles from overrides
  return dag;
}

}  // namespace

void ConceptSchema::validate() const {
  if (k <= 0) throw ValidationError("schema must have at least one concept");
  if (static_cast<int>(concept_names.size()) != k ||
      static_cast<int>(category_counts.size()) != k ||
      static_cast<int>(item_labels.size()) != k || prior_dag.rows() != k ||
      prior_dag.cols() != k) {
    throw ShapeError("schema field sizes disagree with k");
  }
  check_acyclic(prior_dag);
  for (int i = 0; i < k; ++i) {
    if (category_counts[i] < 1) throw ValidationError("concept has empty vocabulary");
    for (const auto& labels : item_labels[i]) {
      if (labels.empty()) throw ValidationError("item with no label (UNKNOWN expected)");
      for (int cat : labels) {
        if (cat < 0 || cat >= category_counts[i]) {
          throw ValidationError("label id out of range in concept " + concept_names[i]);
        }
      }
    }
  }
}

ConceptSchema load_concept_schema(const std::string& path, const std::vector<int64_t>& item_ids,
                                  const std::optional<DagOverride>& dag_override) {
  auto meta = parse_metadata(path);

  ConceptSchema schema;
  schema.k = 4;
  schema.concept_names.assign(std::begin(kConceptNames), std::end(kConceptNames));

  // Per-concept label strings for each dataset item (empty -> UNKNOWN).
  std::vector<std::vector<std::vector<std::string>>> raw_labels(4);
  for (int c = 0; c < 4; ++c) raw_labels[c].resize(item_ids.size());
  for (size_t idx = 0; idx < item_ids.size(); ++idx) {
    auto it = meta.find(item_ids[idx]);
    if (it == meta.end()) continue;
    const RawItemMeta& m = it->second;
    if (!m.year.empty()) raw_labels[0][idx] = {m.year};
    if (!m.director.empty()) raw_labels[1][idx] = {m.director};
    raw_labels[2][idx] = m.genres;
    raw_labels[3][idx] = m.actors;
  }

  // Deterministic vocabularies: UNKNOWN first, then lexicographic order.
  for (int c = 0; c < 4; ++c) {
    std::set<std::string> vocab;
    for (const auto& labels : raw_labels[c]) {
      for (const auto& l : labels) vocab.insert(l);
    }
    std::vector<std::string> names = {kUnknown};
    names.insert(names.end(), vocab.begin(), vocab.end());
    std::map<std::string, int> ids;
    for (size_t i = 0; i < names.size(); ++i) ids[names[i]] = static_cast<int>(i);

    schema.category_names.push_back(names);
    schema.category_counts.push_back(static_cast<int>(names.size()));
    std::vector<std::vector<int>> labels(item_ids.size());
    for (size_t idx = 0; idx < item_ids.size(); ++idx) {
      if (raw_labels[c][idx].empty()) {
        labels[idx] = {0};
      } else {
        for (const auto& l : raw_labels[c][idx]) labels[idx].push_back(ids[l]);
        std::sort(labels[idx].begin(), labels[idx].end());
      }
    }
    schema.item_labels.push_back(std::move(labels));
  }

  DagOverride edges = dag_override.value_or(
      DagOverride{{"director", "genre"}, {"genre", "actor"}});
  schema.prior_dag = dag_from_edges(schema.concept_names, edges);
  schema.validate();
  return schema;
}

void write_schema(const std::string& dir, const ConceptSchema& schema) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["k"] = schema.k;
  j["concept_names"] = schema.concept_names;
  j["category_counts"] = schema.category_counts;
  j["category_names"] = schema.category_names;
  j["item_labels"] = schema.item_labels;
  std::vector<std::vector<int>> dag(schema.k, std::vector<int>(schema.k));
  for (int i = 0; i < schema.k; ++i) {
    for (int c = 0; c < schema.k; ++c) dag[i][c] = schema.prior_dag(i, c);
  }
  j["prior_dag"] = dag;
  write_text_file((fs::path(dir) / "schema.json").string(), j.dump() + "\n");
}

ConceptSchema read_schema(const std::string& dir) {
  fs::path path = fs::path(dir) / "schema.json";
  if (!fs::exists(path)) throw IoError("missing schema manifest: " + path.string());
  nlohmann::json j = nlohmann::json::parse(read_text_file(path.string()));
  ConceptSchema schema;
  schema.k = j.at("k").get<int>();
  schema.concept_names = j.at("concept_names").get<std::vector<std::string>>();
  schema.category_counts = j.at("category_counts").get<std::vector<int>>();
  schema.category_names = j.at("category_names").get<std::vector<std::vector<std::string>>>();
  schema.item_labels = j.at("item_labels").get<std::vector<std::vector<std::vector<int>>>>();
  auto dag = j.at("prior_dag").get<std::vector<std::vector<int>>>();
  schema.prior_dag = Eigen::MatrixXi::Zero(schema.k, schema.k);
  for (int i = 0; i < schema.k; ++i) {
    for (int c = 0; c < schema.k; ++c) schema.prior_dag(i, c) = dag[i][c];
  }
  schema.validate();
  return schema;
}

UserConceptFeature build_user_concept_features(std::span<const int> items,
                                               const ConceptSchema& schema) {
  if (items.empty()) throw ValidationError("user has no interactions");
  UserConceptFeature feat;
  feat.histograms.reserve(schema.k);
  feat.c = Eigen::VectorXd::Zero(schema.k);
  for (int c = 0; c < schema.k; ++c) {
    int m = schema.category_counts[c];
    Eigen::VectorXd h = Eigen::VectorXd::Zero(m);
    for (int item : items) {
      const auto& labels = schema.item_labels[c][item];
      double mass = 1.0 / static_cast<double>(labels.size());
      for (int cat : labels) h(cat) += mass;
    }
    double total = h.sum();
    if (total > 0) h /= total;
    if (m >= 2 && total > 0) {
      double herfindahl = h.squaredNorm();
      double floor = 1.0 / static_cast<double>(m);
      feat.c(c) = std::clamp((herfindahl - floor) / (1.0 - floor), 0.0, 1.0);
    }
    feat.histograms.push_back(std::move(h));
  }
  return feat;
}

}  // namespace cadvae
