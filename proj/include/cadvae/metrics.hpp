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

#ifndef CADVAE_METRICS_HPP_
#define CADVAE_METRICS_HPP_

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cadvae/data.hpp"

namespace cadvae {

// Truncated NDCG@k with binary relevance and 1/log2(rank+1) discount,
// normalized by the ideal DCG for min(k, |targets|) relevant items. Fold-in
// items are masked out of the candidate ranking.
double ndcg_at_k(const Eigen::VectorXd& scores, std::span<const int> foldin_items,
                 std::span<const int> target_items, int k);

// |top-k intersect targets| / min(k, |targets|).
double recall_at_k(const Eigen::VectorXd& scores, std::span<const int> foldin_items,
                   std::span<const int> target_items, int k);

struct RankingResult {
  std::map<std::string, double> macro;                        // e.g. "ndcg@100"
  std::map<std::string, std::vector<double>> per_user;
  int evaluated_users = 0;
  int skipped_users = 0;  // empty-target users, excluded from macro averages
};

// Scores every held-out user via score_fn(user index in `users`), masking the
// user's fold-in items, and macro-averages ndcg@k / recall@k over the
// requested cutoffs.
RankingResult evaluate_ranking(const std::function<Eigen::VectorXd(const HeldoutUser&)>& score_fn,
                               std::span<const HeldoutUser> users, std::span<const int> ndcg_ks,
                               std::span<const int> recall_ks);

// 1 - 2/(d(d-1)) * sum_{i<j} |corr_ij| over the columns of samples. Constant
// columns are excluded (reported via excluded_dims); fewer than two usable
// columns is an error.
double independence_score(const Eigen::MatrixXd& samples,
                          std::vector<int>* excluded_dims = nullptr);

// Mean independence over concept blocks: samples is n x (k*d), each block of
// d columns is scored separately. per_block receives the k block scores.
double independence_per_concept(const Eigen::MatrixXd& samples, int k, int d,
                                std::vector<double>* per_block = nullptr);

// Mean silhouette coefficient of the labelled points (euclidean).
double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> labels);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace cadvae

#endif  // CADVAE_METRICS_HPP_
