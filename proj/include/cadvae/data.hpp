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

#ifndef CADVAE_DATA_HPP_
#define CADVAE_DATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cadvae {

struct RatingRecord {
  int user = 0;  // dense index
  int item = 0;  // dense index
  double rating = 0;
  int64_t timestamp = 0;
};

// Parsed rating log with user/item ids remapped to dense indices, sorted by
// original id so the mapping is deterministic and diff-friendly.
struct RatingTable {
  std::vector<RatingRecord> records;
  std::vector<int64_t> user_ids;  // dense -> original
  std::vector<int64_t> item_ids;

  int n_users() const { return static_cast<int>(user_ids.size()); }
  int n_items() const { return static_cast<int>(item_ids.size()); }
};

// Delimiter auto-detected among tab, comma and "::". Duplicate (user, item)
// pairs keep the highest rating. skip_header skips the first line.
RatingTable load_ratings(const std::string& path, bool skip_header = false);

struct HeldoutUser {
  int user = 0;
  std::vector<int> input;   // fold-in items shown to the encoder
  std::vector<int> target;  // ranking targets
};

struct InteractionDataset {
  int n_users = 0;
  int n_items = 0;
  std::vector<std::vector<int>> rows;  // per-user sorted item ids
  std::vector<int64_t> user_ids;       // dense -> original
  std::vector<int64_t> item_ids;

  // Split state; empty until split_users has run.
  std::vector<int> train_users;
  std::vector<HeldoutUser> val_users;
  std::vector<HeldoutUser> test_users;
  std::array<double, 3> ratios{0, 0, 0};
  double foldin_fraction = 0;
  uint64_t split_seed = 0;

  bool has_split() const { return !train_users.empty() || !val_users.empty() || !test_users.empty(); }
};

// Keeps ratings >= threshold as implicit positives, then repeatedly removes
// users with fewer than min_interactions until a fixed point; items left with
// no interactions are dropped and ids re-densified.
InteractionDataset binarize_and_filter(const RatingTable& table, double threshold = 4.0,
                                       int min_interactions = 5);

// Seed-deterministic user shuffle and partition; each held-out user's items
// are split into fold-in inputs and targets (at least one of each).
void split_users(InteractionDataset& ds, std::array<double, 3> ratios, double foldin_fraction,
                 uint64_t seed);

// Dataset directory: interactions.tsv (sparse triplets) + split.json.
void write_dataset(const std::string& dir, const InteractionDataset& ds);
InteractionDataset read_dataset(const std::string& dir);

}  // namespace cadvae

#endif  // CADVAE_DATA_HPP_
