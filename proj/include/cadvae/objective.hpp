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

#ifndef CADVAE_OBJECTIVE_HPP_
#define CADVAE_OBJECTIVE_HPP_

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "cadvae/causal.hpp"
#include "cadvae/model.hpp"

namespace cadvae {

enum class Likelihood { multinomial, gaussian };

struct LossBreakdown {
  double recon = 0;   // log-likelihood (higher is better)
  double kl_eps = 0;  // closed-form Gaussian KL against N(0, I)
  double kl_z = 0;    // single-sample estimate against the conditional prior
  double sup_a = 0;   // adjacency supervision
  double sup_z = 0;   // SCM residual supervision
  double total = 0;   // -(recon - kl_eps - beta*kl_z) + g1*sup_a + g2*sup_z
};

// ---- individual loss terms ----

// Multinomial log-likelihood: sum of log-softmax over the clicked items.
double recon_loglik(const Eigen::VectorXd& logits, std::span<const int> clicked);

// Additive-Gaussian reading of the decoder (unit variance, constants
// dropped): -0.5 * ||x - out||^2 with x the raw multi-hot.
double recon_loglik_gaussian(const Eigen::VectorXd& outputs, std::span<const int> clicked);

// 0.5 * sum(sigma^2 + mu^2 - 1 - ln sigma^2) over all k*d coordinates.
double kl_epsilon(const EncoderOutput& enc);

// Single-sample estimate log q(z) - log p(z|c): the reparameterized sample's
// density under q(eps) minus the causal-layer Jacobian log-determinant (the
// linear part is unit-determinant, leaving sum log g'(m)), minus the
// factorized Gaussian prior density at z. Throws on non-finite densities.
double kl_z_sample(const EncoderOutput& enc, const Eigen::MatrixXd& noise,
                   const CausalGraph& graph, const ElementwiseTransform& g,
                   const PriorParams& prior);

// ||c - sigmoid(A^T c)||^2.
double sup_a(const Eigen::VectorXd& c, const Eigen::MatrixXd& weights);

// Sum over concepts of the squared SCM residual norm; equals the squared
// norm of the recovered exogenous variables.
double sup_z(const LatentBlocks& z, const CausalGraph& graph, const ElementwiseTransform& g);

LossBreakdown total_loss(double recon, double kl_eps, double kl_z, double sup_a_value,
                         double sup_z_value, double beta, double gamma1, double gamma2);

// ---- batched objective with gradients ----

struct ObjectiveConfig {
  double beta = 1.0;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  Likelihood likelihood = Likelihood::multinomial;
};

struct BatchExample {
  std::span<const int> input_items;  // encoder input (fold-in for held-out users)
  std::span<const int> recon_items;  // reconstruction targets
  const UserConceptFeature* feat = nullptr;
};

// Losses averaged over the batch. When grads is non-null the parameter
// gradients of the averaged total are accumulated into it (same shapes as the
// model, see zeros_like). noise holds one k x d standard-normal draw per
// example.
//
// Gradient semantics of the supervision term: the residual target m =
// g^{-1}(z) is treated as a fixed sample when differentiating sup_z, so the
// term fits the adjacency weights to the current latent cloud by regression
// instead of cancelling algebraically. frozen_m, when provided, supplies
// those fixed targets explicitly (used by the finite-difference harness);
// otherwise the current forward values are used.
LossBreakdown compute_batch(const ModelParams& params, std::span<const BatchExample> batch,
                            const std::vector<Eigen::MatrixXd>& noise, const ObjectiveConfig& cfg,
                            ModelParams* grads,
                            const std::vector<Eigen::MatrixXd>* frozen_m = nullptr);

ModelParams zeros_like(const ModelParams& p);

// Central-difference verification of compute_batch's analytic gradients at
// the current parameters (noise and residual targets held fixed). Checks
// every coordinate of tensors up to max_dense_size and a deterministic
// sample of larger ones.
struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst_param;
  long checked = 0;
};

GradCheckResult gradient_check(const ModelParams& params, std::span<const BatchExample> batch,
                               const std::vector<Eigen::MatrixXd>& noise,
                               const ObjectiveConfig& cfg, double step = 1e-3,
                               long max_dense_size = 4096, int sparse_samples = 24);

}  // namespace cadvae

#endif  // CADVAE_OBJECTIVE_HPP_
