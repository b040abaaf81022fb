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

#include "cadvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cadvae/rng.hpp"
#include "cadvae/util.hpp"

namespace fs = std::filesystem;

namespace cadvae {
namespace {

std::string detect_delimiter(const std::string& line) {
  if (line.find("::") != std::string::npos) return "::";
  if (line.find('\t') != std::string::npos) return "\t";
  if (line.find(',') != std::string::npos) return ",";
  throw ParseError("cannot detect delimiter (expected tab, comma or '::')");
}

int64_t parse_int(const std::string& field, int line_no, const char* what) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(trim(field), &pos);
    if (pos != trim(field).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse " + what + " from '" +
                     field + "'");
  }
}

double parse_double(const std::string& field, int line_no, const char* what) {
  try {
    size_t pos = 0;
    double v = std::stod(trim(field), &pos);
    if (pos != trim(field).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse " + what + " from '" +
                     field + "'");
  }
}

}  // namespace

RatingTable load_ratings(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ratings file: " + path);

  struct RawRecord {
    int64_t user, item;
    double rating;
    int64_t timestamp;
  };
  std::vector<RawRecord> raw;
  std::string line;
  std::string delim;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && skip_header) continue;
    if (trim(line).empty()) continue;
    if (delim.empty()) delim = detect_delimiter(line);
    std::vector<std::string> fields =
        delim.size() == 1 ? split(line, delim[0]) : split_str(line, delim);
    if (fields.size() < 3) {
      throw ParseError("line " + std::to_string(line_no) + ": expected at least 3 fields");
    }
    RawRecord r;
    r.user = parse_int(fields[0], line_no, "user id");
    r.item = parse_int(fields[1], line_no, "item id");
    r.rating = parse_double(fields[2], line_no, "rating");
    r.timestamp = fields.size() > 3 && !trim(fields[3]).empty()
                      ? parse_int(fields[3], line_no, "timestamp")
                      : 0;
    raw.push_back(r);
  }
  if (raw.empty()) throw ParseError("ratings file is empty: " + path);

  // Deduplicate (user, item), keeping the highest rating.
  std::map<std::pair<int64_t, int64_t>, RawRecord> dedup;
  for (const auto& r : raw) {
    auto key = std::make_pair(r.user, r.item);
    auto it = dedup.find(key);
    if (it == dedup.end() || r.rating > it->second.rating) dedup[key] = r;
  }

  std::set<int64_t> users, items;
  for (const auto& [key, r] : dedup) {
    users.insert(r.user);
    items.insert(r.item);
  }
  RatingTable table;
  table.user_ids.assign(users.begin(), users.end());
  table.item_ids.assign(items.begin(), items.end());
  std::map<int64_t, int> umap, imap;
  for (int i = 0; i < table.n_users(); ++i) umap[table.user_ids[i]] = i;
  for (int i = 0; i < table.n_items(); ++i) imap[table.item_ids[i]] = i;

  table.records.reserve(dedup.size());
  for (const auto& [key, r] : dedup) {
    table.records.push_back(
        RatingRecord{umap[r.user], imap[r.item], r.rating, r.timestamp});
  }
  return table;
}

InteractionDataset binarize_and_filter(const RatingTable& table, double threshold,
                                       int min_interactions) {
  if (table.records.empty()) throw ValidationError("empty rating table");

  std::vector<std::vector<int>> rows(table.n_users());
  for (const auto& r : table.records) {
    if (r.rating >= threshold) rows[r.user].push_back(r.item);
  }
  for (auto& row : rows) std::sort(row.begin(), row.end());

  // Users are filtered to a fixed point. Removing a user does not change any
  // other user's count, so one sweep suffices, but the loop keeps the filter
  // honest if the rule ever becomes interaction-dependent.
  std::vector<bool> keep_user(rows.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t u = 0; u < rows.size(); ++u) {
      if (keep_user[u] && static_cast<int>(rows[u].size()) < min_interactions) {
        keep_user[u] = false;
        changed = true;
      }
    }
  }

  std::vector<int> item_count(table.n_items(), 0);
  int surviving_users = 0;
  for (size_t u = 0; u < rows.size(); ++u) {
    if (!keep_user[u]) continue;
    ++surviving_users;
    for (int it : rows[u]) ++item_count[it];
  }
  if (surviving_users == 0) throw ValidationError("empty dataset after binarization/filtering");

  std::vector<int> item_remap(table.n_items(), -1);
  InteractionDataset ds;
  for (int i = 0; i < table.n_items(); ++i) {
    if (item_count[i] > 0) {
      item_remap[i] = ds.n_items++;
      ds.item_ids.push_back(table.item_ids[i]);
    }
  }
  for (size_t u = 0; u < rows.size(); ++u) {
    if (!keep_user[u]) continue;
    std::vector<int> remapped;
    remapped.reserve(rows[u].size());
    for (int it : rows[u]) remapped.push_back(item_remap[it]);
    std::sort(remapped.begin(), remapped.end());
    ds.rows.push_back(std::move(remapped));
    ds.user_ids.push_back(table.user_ids[u]);
  }
  ds.n_users = static_cast<int>(ds.rows.size());
  return ds;
}

void split_users(InteractionDataset& ds, std::array<double, 3> ratios, double foldin_fraction,
                 uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  if (!(foldin_fraction > 0.0 && foldin_fraction < 1.0)) {
    throw ValidationError("foldin_fraction must lie in (0, 1)");
  }

  Rng rng(seed);
  std::vector<int> perm(ds.n_users);
  for (int i = 0; i < ds.n_users; ++i) perm[i] = i;
  rng.shuffle(perm);

  int n_val = static_cast<int>(std::floor(ratios[1] * ds.n_users));
  int n_test = static_cast<int>(std::floor(ratios[2] * ds.n_users));
  int n_train = ds.n_users - n_val - n_test;

  ds.train_users.assign(perm.begin(), perm.begin() + n_train);
  std::sort(ds.train_users.begin(), ds.train_users.end());

  auto make_heldout = [&](int user) {
    const auto& items = ds.rows[user];
    if (items.size() < 2) {
      throw ValidationError("held-out user " + std::to_string(user) +
                            " has fewer than 2 items and cannot be folded");
    }
    std::vector<int> shuffled = items;
    Rng urng = rng.fork(static_cast<uint64_t>(user));
    urng.shuffle(shuffled);
    int n_in = static_cast<int>(std::lround(foldin_fraction * static_cast<double>(items.size())));
    n_in = std::clamp(n_in, 1, static_cast<int>(items.size()) - 1);
    HeldoutUser h;
    h.user = user;
    h.input.assign(shuffled.begin(), shuffled.begin() + n_in);
    h.target.assign(shuffled.begin() + n_in, shuffled.end());
    std::sort(h.input.begin(), h.input.end());
    std::sort(h.target.begin(), h.target.end());
    return h;
  };

  ds.val_users.clear();
  ds.test_users.clear();
  std::vector<int> val_ids(perm.begin() + n_train, perm.begin() + n_train + n_val);
  std::vector<int> test_ids(perm.begin() + n_train + n_val, perm.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  for (int u : val_ids) ds.val_users.push_back(make_heldout(u));
  for (int u : test_ids) ds.test_users.push_back(make_heldout(u));

  ds.ratios = ratios;
  ds.foldin_fraction = foldin_fraction;
  ds.split_seed = seed;
}

void write_dataset(const std::string& dir, const InteractionDataset& ds) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "interactions.tsv");
    if (!out) throw IoError("cannot write interactions.tsv in " + dir);
    for (int u = 0; u < ds.n_users; ++u) {
      for (int it : ds.rows[u]) out << u << '\t' << it << '\t' << 1 << '\n';
    }
  }
  nlohmann::json j;
  j["n_users"] = ds.n_users;
  j["n_items"] = ds.n_items;
  j["user_ids"] = ds.user_ids;
  j["item_ids"] = ds.item_ids;
  j["ratios"] = ds.ratios;
  j["foldin_fraction"] = ds.foldin_fraction;
  j["seed"] = ds.split_seed;
  j["train"] = ds.train_users;
  auto heldout_json = [](const std::vector<HeldoutUser>& users) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& h : users) {
      arr.push_back({{"user", h.user}, {"input", h.input}, {"target", h.target}});
    }
    return arr;
  };
  j["val"] = heldout_json(ds.val_users);
  j["test"] = heldout_json(ds.test_users);
  write_text_file((fs::path(dir) / "split.json").string(), j.dump(2) + "\n");
}

InteractionDataset read_dataset(const std::string& dir) {
  fs::path split_path = fs::path(dir) / "split.json";
  if (!fs::exists(split_path)) throw IoError("missing split manifest: " + split_path.string());
  nlohmann::json j = nlohmann::json::parse(read_text_file(split_path.string()));

  InteractionDataset ds;
  ds.n_users = j.at("n_users").get<int>();
  ds.n_items = j.at("n_items").get<int>();
  ds.user_ids = j.at("user_ids").get<std::vector<int64_t>>();
  ds.item_ids = j.at("item_ids").get<std::vector<int64_t>>();
  ds.ratios = j.at("ratios").get<std::array<double, 3>>();
  ds.foldin_fraction = j.at("foldin_fraction").get<double>();
  ds.split_seed = j.at("seed").get<uint64_t>();
  ds.train_users = j.at("train").get<std::vector<int>>();
  auto parse_heldout = [](const nlohmann::json& arr) {
    std::vector<HeldoutUser> users;
    for (const auto& e : arr) {
      HeldoutUser h;
      h.user = e.at("user").get<int>();
      h.input = e.at("input").get<std::vector<int>>();
      h.target = e.at("target").get<std::vector<int>>();
      users.push_back(std::move(h));
    }
    return users;
  };
  ds.val_users = parse_heldout(j.at("val"));
  ds.test_users = parse_heldout(j.at("test"));

  ds.rows.assign(ds.n_users, {});
  std::ifstream in(fs::path(dir) / "interactions.tsv");
  if (!in) throw IoError("missing interactions.tsv in " + dir);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 2) throw ParseError("interactions.tsv line " + std::to_string(line_no));
    int u = static_cast<int>(parse_int(fields[0], line_no, "user"));
    int it = static_cast<int>(parse_int(fields[1], line_no, "item"));
    if (u < 0 || u >= ds.n_users || it < 0 || it >= ds.n_items) {
      throw ValidationError("interaction index out of range at line " + std::to_string(line_no));
    }
    ds.rows[u].push_back(it);
  }
  for (auto& row : ds.rows) std::sort(row.begin(), row.end());
  return ds;
}

}  // namespace cadvae
