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

#ifndef CADVAE_MODEL_HPP_
#define CADVAE_MODEL_HPP_

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cadvae/causal.hpp"
#include "cadvae/schema.hpp"

namespace cadvae {

struct ModelDims {
  int n_items = 0;
  int k = 0;
  int d = 0;
  int hidden = 600;
  int prior_hidden = 32;
  std::vector<int> category_counts;
  // The beta-VAE ablation drops all concept conditioning: histogram/c inputs
  // are zeroed and the conditional prior is replaced by N(0, I).
  bool conditioned = true;

  int hist_dim() const;
  int input_dim() const;  // n_items + sum(m_i) + k
  bool operator==(const ModelDims&) const = default;
};

struct EncoderOutput {
  Eigen::MatrixXd mu;         // k x d
  Eigen::MatrixXd log_sigma;  // k x d, clamped to [-6, 3]
};

struct PriorParams {
  Eigen::MatrixXd lambda1;  // k x d means
  Eigen::MatrixXd lambda2;  // k x d std deviations, >= 1e-3
};

inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 3.0;
inline constexpr double kLambda2Floor = 1e-3;

// All trainable parameters: encoder trunk + per-concept heads, causal layer
// alpha = (A, g), per-concept prior nets, decoder.
struct ModelParams {
  ModelDims dims;
  TransformMode g_mode = TransformMode::monotone;
  Eigen::MatrixXi mask;  // I_A (not trained)

  Eigen::MatrixXd enc_w0;  // hidden x input_dim
  Eigen::VectorXd enc_b0;
  std::vector<Eigen::MatrixXd> enc_head_w;  // k of (2d x hidden), rows [mu; log_sigma]
  std::vector<Eigen::VectorXd> enc_head_b;

  Eigen::MatrixXd adj_raw;      // k x k, kept masked
  Eigen::VectorXd g_a, g_b, g_s;

  std::vector<Eigen::MatrixXd> prior_w0;  // k of (prior_hidden x (m_i + 1))
  std::vector<Eigen::VectorXd> prior_b0;
  std::vector<Eigen::MatrixXd> prior_w1;  // k of (2d x prior_hidden)
  std::vector<Eigen::VectorXd> prior_b1;

  Eigen::MatrixXd dec_w0;  // hidden x (k*d)
  Eigen::VectorXd dec_b0;
  Eigen::MatrixXd dec_w1;  // n_items x hidden
  Eigen::VectorXd dec_b1;

  CausalGraph graph() const { return CausalGraph{mask, masked_weights(adj_raw, mask)}; }
  ElementwiseTransform transform() const;

  // Re-applies the structural constraints after an optimizer step: A is
  // masked and, in monotone mode, a is projected to a > |s| + margin.
  void enforce_constraints();

  long parameter_count() const;

  // Visits every trainable tensor as a flat view; the iteration order is
  // fixed, which Adam and the checkpoint format rely on.
  void visit(const std::function<void(const std::string&, double*, long)>& fn);
  void visit_const(const std::function<void(const std::string&, const double*, long)>& fn) const;
};

class Rng;

ModelParams init_model(const ModelDims& dims, const Eigen::MatrixXi& mask, TransformMode g_mode,
                       Rng& rng);

// ---- forward pieces ----

// L2-normalized multi-hot over input items, concatenated with all concept
// histograms and the concentration vector c.
Eigen::VectorXd build_model_input(const ModelDims& dims, std::span<const int> items,
                                  const UserConceptFeature& feat);

// Per-user forward cache; filled by forward_user and consumed by the
// objective's backward pass.
struct ForwardCache {
  Eigen::VectorXd input;
  Eigen::VectorXd h0;
  Eigen::MatrixXd head_raw;  // k x 2d, pre-clamp
  Eigen::MatrixXd mu, log_sigma, sigma;
  Eigen::MatrixXd noise, eps, m, z, gp;
  Eigen::VectorXd h1;
  Eigen::VectorXd logits;
  std::vector<Eigen::VectorXd> prior_in, prior_h;
  Eigen::MatrixXd lam1, lam2, lam2_raw;
};

void forward_user(const ModelParams& p, std::span<const int> input_items,
                  const UserConceptFeature& feat, const Eigen::MatrixXd& noise, ForwardCache& fc);

EncoderOutput encode(const ModelParams& p, std::span<const int> items,
                     const UserConceptFeature& feat);
LatentBlocks reparameterize(const EncoderOutput& enc, const Eigen::MatrixXd& noise);
PriorParams prior_params(const ModelParams& p, const UserConceptFeature& feat);
Eigen::VectorXd decode(const ModelParams& p, const LatentBlocks& z);

// Deterministic scoring path used for ranking: encode -> mu -> causal layer
// -> decoder logits.
Eigen::VectorXd score_items(const ModelParams& p, std::span<const int> items,
                            const UserConceptFeature& feat);

// ---- checkpoint ----

struct Checkpoint {
  ModelParams params;
  std::string meta_json;  // config snapshot, epoch, seed, metric history
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cadvae

#endif  // CADVAE_MODEL_HPP_
