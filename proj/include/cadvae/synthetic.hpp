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
//
// Synthetic interaction data from a known ground-truth SCM. Exogenous noise
// is drawn per user, pushed through the causal layer, and clicks are sampled
// without replacement from a softmax over item embeddings tilted by
// per-concept category affinities. Labels come from 1-D quantile clusters of
// the leading embedding coordinate of each concept block, and the per-user
// category mixtures are chosen so the realized concentration vector c tracks
// the sigmoid fixed-point curve of the ground-truth adjacency; that is what
// makes the signed edge weights recoverable.

#ifndef CADVAE_SYNTHETIC_HPP_
#define CADVAE_SYNTHETIC_HPP_

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "cadvae/causal.hpp"
#include "cadvae/data.hpp"
#include "cadvae/schema.hpp"

namespace cadvae {

struct SyntheticSpec {
  int k = 3;
  int d = 4;
  Eigen::MatrixXd a_star;  // ground-truth weighted adjacency (defaults to the
                           // +0.8 / -0.8 chain when left empty)
  std::string g_mode = "linear_bypass";
  int n_users = 10000;
  int n_items = 3500;
  int budget = 250;  // clicks per user, >= 5
  std::vector<int> categories;  // real categories per concept (UNKNOWN is id 0)
  double softmax_temp = 1.0;
  double root_c_lo = 0.25, root_c_hi = 0.78;  // root-concept target range
  double c_jitter = 0.06;                     // spread around the sigmoid curve
  double alpha_cap = 0.80;  // dominant-category mass cap (avoids cell saturation)
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  double foldin_fraction = 0.8;
  uint64_t seed = 7;

  static SyntheticSpec chain_default();
  void validate() const;
};

struct SyntheticData {
  InteractionDataset dataset;  // already split
  ConceptSchema schema;
  CausalGraph graph_star;
  ElementwiseTransform g_star;
  Eigen::MatrixXd eps_star;   // n_users x (k*d)
  Eigen::MatrixXd z_star;     // n_users x (k*d)
  Eigen::MatrixXd c_targets;  // n_users x k, the supervision curve
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

// Dense LU solve of (I - A^T) m = eps; reference oracle for causal_transform.
Eigen::MatrixXd dense_linear_solve_oracle(const Eigen::MatrixXd& eps, const Eigen::MatrixXd& A);

// Minimizer of sum_u ||c_u - sigmoid(A^T c_u)||^2 over the masked entries
// (1-D Newton per edge since the loss separates by child). Test oracle for
// what adjacency the supervision term identifies from a dataset's c vectors.
Eigen::MatrixXd fit_adjacency_to_features(const Eigen::MatrixXd& c_rows,
                                          const Eigen::MatrixXi& mask);

}  // namespace cadvae

#endif  // CADVAE_SYNTHETIC_HPP_
