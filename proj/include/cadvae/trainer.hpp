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

#ifndef CADVAE_TRAINER_HPP_
#define CADVAE_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cadvae/data.hpp"
#include "cadvae/model.hpp"
#include "cadvae/objective.hpp"
#include "cadvae/schema.hpp"

namespace cadvae {

struct TrainConfig {
  int d = 20;
  int hidden = 600;
  int prior_hidden = 32;
  double beta_max = 10.0;
  int beta_anneal_steps = 2000;  // linear warm-up of beta from 0
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double learning_rate = 1e-3;
  double adj_lr_multiplier = 1.0;  // extra learning-rate factor on A
  int batch_size = 128;
  int max_epochs = 400;
  int patience = 10;   // validation rounds without improvement
  int eval_every = 4;  // epochs between validation rounds
  uint64_t seed = 1;
  std::string g_mode = "monotone";          // or "linear_bypass"
  std::string likelihood = "multinomial";   // or "gaussian"
  bool ablate_causal = false;  // A frozen to zero, identity g, no conditioning

  void validate() const;
  TransformMode transform_mode() const;
  Likelihood likelihood_mode() const;
};

// Flat key=value config file; '#' starts a comment, unknown keys are errors.
TrainConfig parse_train_config(const std::string& path);
TrainConfig train_config_from_string(const std::string& text);
std::string config_to_string(const TrainConfig& cfg);  // canonical, sorted keys
std::string config_hash(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double beta = 0;
  LossBreakdown loss;
  bool has_validation = false;
  std::map<std::string, double> validation;
  std::string to_json() const;
};

struct TrainResult {
  Checkpoint best;
  int best_epoch = -1;
  double best_val_ndcg100 = 0;
  bool diverged = false;
  std::string divergence_report;
  std::vector<EpochLog> history;
};

using LogSink = std::function<void(const EpochLog&)>;

// Minibatch Adam on the total objective with linear beta annealing, adjacency
// re-masking after every step, validation-NDCG@100 early stopping, and
// divergence abort returning the last good parameters.
TrainResult train(const InteractionDataset& ds, const ConceptSchema& schema,
                  const TrainConfig& cfg, const LogSink& log_sink = nullptr);

enum class EvalSplit { validation, test };

// Metric map {ndcg@50, ndcg@100, recall@20, recall@50} on the validation fold.
std::map<std::string, double> validate(const ModelParams& params, const InteractionDataset& ds,
                                       const ConceptSchema& schema);

// Generalized evaluation with custom cutoffs; used by the CLI eval command.
std::map<std::string, double> evaluate_split(const ModelParams& params,
                                             const InteractionDataset& ds,
                                             const ConceptSchema& schema, EvalSplit split,
                                             std::span<const int> ks);

// Mean held-out reconstruction log-likelihood (targets given fold-in input).
double heldout_recon_loglik(const ModelParams& params, const InteractionDataset& ds,
                            const ConceptSchema& schema, EvalSplit split);

// Posterior-mean z blocks for every user in the dataset (visible items only):
// returns n_users x (k*d), row-major blocks.
Eigen::MatrixXd user_mean_latents(const ModelParams& params, const InteractionDataset& ds,
                                  const ConceptSchema& schema);

}  // namespace cadvae

#endif  // CADVAE_TRAINER_HPP_
