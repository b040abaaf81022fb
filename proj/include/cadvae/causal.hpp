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
// Structural-causal-model latent layer: a binary DAG mask over k concepts,
// learned edge weights A, and an invertible element-wise transform g. The
// forward map is z = g((I - A^T)^{-1} eps); because the mask is acyclic the
// linear system is solved exactly by substitution in topological order.

#ifndef CADVAE_CAUSAL_HPP_
#define CADVAE_CAUSAL_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace cadvae {

enum class LatentKind { exogenous, endogenous };

// Block-structured latent state: k concept blocks of d dimensions each,
// stored as a k x d matrix (row i = concept i's block).
struct LatentBlocks {
  Eigen::MatrixXd values;
  LatentKind kind = LatentKind::exogenous;

  int k() const { return static_cast<int>(values.rows()); }
  int d() const { return static_cast<int>(values.cols()); }
};

inline LatentBlocks exogenous(Eigen::MatrixXd v) {
  return LatentBlocks{std::move(v), LatentKind::exogenous};
}
inline LatentBlocks endogenous(Eigen::MatrixXd v) {
  return LatentBlocks{std::move(v), LatentKind::endogenous};
}

// Weighted adjacency over the k concepts. weights(i, j) is the effect of
// concept i on concept j and may be non-zero only where mask(i, j) == 1.
struct CausalGraph {
  Eigen::MatrixXi mask;     // I_A, binary, zero diagonal, acyclic
  Eigen::MatrixXd weights;  // A, masked

  int k() const { return static_cast<int>(mask.rows()); }
};

CausalGraph make_graph(const Eigen::MatrixXi& mask, const Eigen::MatrixXd& raw_weights);

enum class TransformMode { monotone, linear_bypass };

// Element-wise map applied per concept block. In monotone mode
// g_i(u) = a_i*u + b_i + s_i*tanh(u) with a_i > |s_i| + margin, so the
// derivative is bounded below by the margin and the map is invertible.
// linear_bypass drops the tanh term (g_i(u) = a_i*u + b_i, s = 0); with
// a = 1, b = 0 it is the identity used by the linear-SCM oracle tests.
struct ElementwiseTransform {
  TransformMode mode = TransformMode::linear_bypass;
  Eigen::VectorXd a, b, s;

  static constexpr double kMargin = 1e-3;

  static ElementwiseTransform identity(int k);
  static ElementwiseTransform linear(Eigen::VectorXd a, Eigen::VectorXd b);
  static ElementwiseTransform monotone(Eigen::VectorXd a, Eigen::VectorXd b, Eigen::VectorXd s);

  int k() const { return static_cast<int>(a.size()); }
  double eval(int i, double u) const;
  double deriv(int i, double u) const;
  // Safeguarded Newton (bracketed), |g(w) - v| <= 1e-10, at most 100 steps.
  double inverse(int i, double v) const;
  void validate() const;
};

// Kahn topological sort with smallest-index tie-breaking; throws
// ValidationError naming one cycle if the mask is not acyclic.
std::vector<int> check_acyclic(const Eigen::MatrixXi& mask);

// A = raw .* mask (element-wise); shapes must agree.
Eigen::MatrixXd masked_weights(const Eigen::MatrixXd& raw, const Eigen::MatrixXi& mask);

// Solves (I - A^T) m = eps exactly by forward substitution in topological
// order; the k x k system acts block-wise on the d-dimensional rows.
Eigen::MatrixXd solve_structural(const Eigen::MatrixXd& eps_values, const CausalGraph& graph);

LatentBlocks causal_transform(const LatentBlocks& eps, const CausalGraph& graph,
                              const ElementwiseTransform& g);
LatentBlocks inverse_transform(const LatentBlocks& z, const CausalGraph& graph,
                               const ElementwiseTransform& g);

// r_i = g_i^{-1}(z_i) - A_i^T g^{-1}(z); equals the exogenous noise that
// generated z when z came from causal_transform with the same parameters.
Eigen::MatrixXd scm_residual(const LatentBlocks& z, const CausalGraph& graph,
                             const ElementwiseTransform& g);

// JSON export of {mask, weights, topological order, concept names} for the
// reporting/visualization pipeline.
std::string graph_to_json(const CausalGraph& graph, const std::vector<std::string>& concept_names);

}  // namespace cadvae

#endif  // CADVAE_CAUSAL_HPP_
