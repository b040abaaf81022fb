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

#include "cadvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "cadvae/util.hpp"

namespace cadvae {
namespace {

// Top-k item indices by score, descending, ties broken by smaller index.
std::vector<int> top_k_items(const Eigen::VectorXd& scores, std::span<const int> foldin_items,
                             int k) {
  Eigen::VectorXd masked = scores;
  for (int it : foldin_items) masked(it) = -std::numeric_limits<double>::infinity();
  int n = static_cast<int>(masked.size());
  int kk = std::min(k, n);
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int a, int b) {
    if (masked(a) != masked(b)) return masked(a) > masked(b);
    return a < b;
  });
  idx.resize(static_cast<size_t>(kk));
  return idx;
}

double ideal_dcg(int n_targets, int k) {
  double idcg = 0;
  int limit = std::min(k, n_targets);
  for (int r = 1; r <= limit; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return idcg;
}

std::vector<double> rank_with_ties(std::span<const double> v) {
  size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double ma = a.mean(), mb = b.mean();
  Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0) return 0;
  return (da * db).sum() / denom;
}

}  // namespace

double ndcg_at_k(const Eigen::VectorXd& scores, std::span<const int> foldin_items,
                 std::span<const int> target_items, int k) {
  if (target_items.empty()) throw ValidationError("ndcg_at_k: empty target set");
  std::set<int> targets(target_items.begin(), target_items.end());
  auto top = top_k_items(scores, foldin_items, k);
  double dcg = 0;
  for (size_t r = 0; r < top.size(); ++r) {
    if (targets.count(top[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / ideal_dcg(static_cast<int>(targets.size()), k);
}

double recall_at_k(const Eigen::VectorXd& scores, std::span<const int> foldin_items,
                   std::span<const int> target_items, int k) {
  if (target_items.empty()) throw ValidationError("recall_at_k: empty target set");
  std::set<int> targets(target_items.begin(), target_items.end());
  auto top = top_k_items(scores, foldin_items, k);
  int hits = 0;
  for (int it : top) hits += targets.count(it) ? 1 : 0;
  return static_cast<double>(hits) /
         static_cast<double>(std::min<size_t>(static_cast<size_t>(k), targets.size()));
}

RankingResult evaluate_ranking(const std::function<Eigen::VectorXd(const HeldoutUser&)>& score_fn,
                               std::span<const HeldoutUser> users, std::span<const int> ndcg_ks,
                               std::span<const int> recall_ks) {
  RankingResult res;
  for (int k : ndcg_ks) res.per_user["ndcg@" + std::to_string(k)] = {};
  for (int k : recall_ks) res.per_user["recall@" + std::to_string(k)] = {};

  for (const auto& user : users) {
    if (user.target.empty()) {
      ++res.skipped_users;
      continue;
    }
    Eigen::VectorXd scores = score_fn(user);
    for (int k : ndcg_ks) {
      res.per_user["ndcg@" + std::to_string(k)].push_back(
          ndcg_at_k(scores, user.input, user.target, k));
    }
    for (int k : recall_ks) {
      res.per_user["recall@" + std::to_string(k)].push_back(
          recall_at_k(scores, user.input, user.target, k));
    }
    ++res.evaluated_users;
  }
  for (auto& [name, vals] : res.per_user) {
    res.macro[name] =
        vals.empty() ? 0.0 : std::accumulate(vals.begin(), vals.end(), 0.0) /
                                 static_cast<double>(vals.size());
  }
  return res;
}

double independence_score(const Eigen::MatrixXd& samples, std::vector<int>* excluded_dims) {
  if (samples.rows() < 2) throw ValidationError("independence_score needs >= 2 samples");
  if (samples.cols() < 2) throw ValidationError("independence_score needs >= 2 dimensions");

  std::vector<int> usable;
  for (int c = 0; c < samples.cols(); ++c) {
    double mean = samples.col(c).mean();
    double var = (samples.col(c).array() - mean).square().sum();
    if (var > 0) {
      usable.push_back(c);
    } else if (excluded_dims) {
      excluded_dims->push_back(c);
    }
  }
  int d = static_cast<int>(usable.size());
  if (d < 2) throw ValidationError("independence_score: fewer than 2 non-constant dimensions");

  double acc = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      acc += std::abs(pearson(samples.col(usable[static_cast<size_t>(i)]),
                              samples.col(usable[static_cast<size_t>(j)])));
    }
  }
  return 1.0 - 2.0 / (static_cast<double>(d) * (d - 1.0)) * acc;
}

double independence_per_concept(const Eigen::MatrixXd& samples, int k, int d,
                                std::vector<double>* per_block) {
  if (samples.cols() != static_cast<Eigen::Index>(k) * d) {
    throw ShapeError("independence_per_concept: column count must be k*d");
  }
  double total = 0;
  for (int i = 0; i < k; ++i) {
    double s = independence_score(samples.middleCols(i * d, d));
    if (per_block) per_block->push_back(s);
    total += s;
  }
  return total / static_cast<double>(k);
}

double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> labels) {
  int n = static_cast<int>(points.rows());
  if (static_cast<int>(labels.size()) != n) throw ShapeError("silhouette: label count mismatch");
  int n_labels = *std::max_element(labels.begin(), labels.end()) + 1;
  if (n_labels < 2) throw ValidationError("silhouette needs >= 2 clusters");

  std::vector<int> cluster_size(static_cast<size_t>(n_labels), 0);
  for (int l : labels) ++cluster_size[static_cast<size_t>(l)];

  double total = 0;
  int counted = 0;
  std::vector<double> sum_dist(static_cast<size_t>(n_labels));
  for (int i = 0; i < n; ++i) {
    std::fill(sum_dist.begin(), sum_dist.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      sum_dist[static_cast<size_t>(labels[static_cast<size_t>(j)])] +=
          (points.row(i) - points.row(j)).norm();
    }
    int li = labels[static_cast<size_t>(i)];
    if (cluster_size[static_cast<size_t>(li)] <= 1) continue;
    double a = sum_dist[static_cast<size_t>(li)] /
               static_cast<double>(cluster_size[static_cast<size_t>(li)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int l = 0; l < n_labels; ++l) {
      if (l == li || cluster_size[static_cast<size_t>(l)] == 0) continue;
      b = std::min(b, sum_dist[static_cast<size_t>(l)] /
                          static_cast<double>(cluster_size[static_cast<size_t>(l)]));
    }
    total += (b - a) / std::max(a, b);
    ++counted;
  }
  if (counted == 0) throw ValidationError("silhouette: no scorable points");
  return total / static_cast<double>(counted);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("spearman needs two equal-length series of >= 2 points");
  }
  auto ra = rank_with_ties(a);
  auto rb = rank_with_ties(b);
  Eigen::VectorXd va = Eigen::Map<Eigen::VectorXd>(ra.data(), static_cast<Eigen::Index>(ra.size()));
  Eigen::VectorXd vb = Eigen::Map<Eigen::VectorXd>(rb.data(), static_cast<Eigen::Index>(rb.size()));
  return pearson(va, vb);
}

}  // namespace cadvae
