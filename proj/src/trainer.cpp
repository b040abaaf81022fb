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

#include "cadvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

#include "cadvae/metrics.hpp"
#include "cadvae/rng.hpp"
#include "cadvae/util.hpp"

namespace cadvae {
namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct AdamState {
  std::vector<Eigen::VectorXd> m, v;
  long t = 0;
};

struct TensorView {
  std::string name;
  double* data;
  long size;
};

std::vector<TensorView> tensor_views(ModelParams& p) {
  std::vector<TensorView> out;
  p.visit([&](const std::string& n, double* d, long s) { out.push_back({n, d, s}); });
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (d <= 0 || hidden <= 0 || prior_hidden <= 0) throw ValidationError("dims must be positive");
  if (beta_max < 0) throw ValidationError("beta_max must be >= 0");
  if (beta_anneal_steps < 1) throw ValidationError("beta_anneal_steps must be >= 1");
  if (gamma1 < 0 || gamma2 < 0) throw ValidationError("gamma must be >= 0");
  if (learning_rate <= 0 || adj_lr_multiplier <= 0) throw ValidationError("lr must be positive");
  if (batch_size <= 0 || max_epochs <= 0 || patience <= 0 || eval_every <= 0) {
    throw ValidationError("loop parameters must be positive");
  }
  if (g_mode != "monotone" && g_mode != "linear_bypass") {
    throw ValidationError("g_mode must be monotone or linear_bypass");
  }
  if (likelihood != "multinomial" && likelihood != "gaussian") {
    throw ValidationError("likelihood must be multinomial or gaussian");
  }
}

TransformMode TrainConfig::transform_mode() const {
  return g_mode == "monotone" ? TransformMode::monotone : TransformMode::linear_bypass;
}

Likelihood TrainConfig::likelihood_mode() const {
  return likelihood == "multinomial" ? Likelihood::multinomial : Likelihood::gaussian;
}

TrainConfig train_config_from_string(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "d") cfg.d = std::stoi(value);
      else if (key == "hidden") cfg.hidden = std::stoi(value);
      else if (key == "prior_hidden") cfg.prior_hidden = std::stoi(value);
      else if (key == "beta_max") cfg.beta_max = std::stod(value);
      else if (key == "beta_anneal_steps") cfg.beta_anneal_steps = std::stoi(value);
      else if (key == "gamma1") cfg.gamma1 = std::stod(value);
      else if (key == "gamma2") cfg.gamma2 = std::stod(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "adj_lr_multiplier") cfg.adj_lr_multiplier = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
      else if (key == "patience") cfg.patience = std::stoi(value);
      else if (key == "eval_every") cfg.eval_every = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "g_mode") cfg.g_mode = value;
      else if (key == "likelihood") cfg.likelihood = value;
      else if (key == "ablate_causal") cfg.ablate_causal = (value == "1" || value == "true");
      else throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  return train_config_from_string(read_text_file(path));
}

std::string config_to_string(const TrainConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["d"] = std::to_string(cfg.d);
  kv["hidden"] = std::to_string(cfg.hidden);
  kv["prior_hidden"] = std::to_string(cfg.prior_hidden);
  kv["beta_max"] = format_double(cfg.beta_max);
  kv["beta_anneal_steps"] = std::to_string(cfg.beta_anneal_steps);
  kv["gamma1"] = format_double(cfg.gamma1);
  kv["gamma2"] = format_double(cfg.gamma2);
  kv["learning_rate"] = format_double(cfg.learning_rate);
  kv["adj_lr_multiplier"] = format_double(cfg.adj_lr_multiplier);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["max_epochs"] = std::to_string(cfg.max_epochs);
  kv["patience"] = std::to_string(cfg.patience);
  kv["eval_every"] = std::to_string(cfg.eval_every);
  kv["seed"] = std::to_string(cfg.seed);
  kv["g_mode"] = cfg.g_mode;
  kv["likelihood"] = cfg.likelihood;
  kv["ablate_causal"] = cfg.ablate_causal ? "1" : "0";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string config_hash(const TrainConfig& cfg) { return hex64(fnv1a64(config_to_string(cfg))); }

std::string EpochLog::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["beta"] = beta;
  j["recon"] = loss.recon;
  j["kl_eps"] = loss.kl_eps;
  j["kl_z"] = loss.kl_z;
  j["sup_a"] = loss.sup_a;
  j["sup_z"] = loss.sup_z;
  j["total"] = loss.total;
  if (has_validation) j["validation"] = validation;
  return j.dump();
}

namespace {

std::vector<UserConceptFeature> heldout_features(const std::vector<HeldoutUser>& users,
                                                 const ConceptSchema& schema) {
  std::vector<UserConceptFeature> feats;
  feats.reserve(users.size());
  for (const auto& h : users) feats.push_back(build_user_concept_features(h.input, schema));
  return feats;
}

std::map<std::string, double> evaluate_heldout(const ModelParams& params,
                                               const std::vector<HeldoutUser>& users,
                                               const ConceptSchema& schema,
                                               std::span<const int> ndcg_ks,
                                               std::span<const int> recall_ks) {
  auto feats = heldout_features(users, schema);
  std::map<const HeldoutUser*, size_t> index;
  for (size_t i = 0; i < users.size(); ++i) index[&users[i]] = i;
  auto score_fn = [&](const HeldoutUser& h) {
    return score_items(params, h.input, feats[index.at(&h)]);
  };
  RankingResult res = evaluate_ranking(score_fn, users, ndcg_ks, recall_ks);
  return res.macro;
}

}  // namespace

std::map<std::string, double> validate(const ModelParams& params, const InteractionDataset& ds,
                                       const ConceptSchema& schema) {
  if (!ds.has_split()) throw ValidationError("dataset has no split");
  const int ndcg_ks[] = {50, 100};
  const int recall_ks[] = {20, 50};
  return evaluate_heldout(params, ds.val_users, schema, ndcg_ks, recall_ks);
}

std::map<std::string, double> evaluate_split(const ModelParams& params,
                                             const InteractionDataset& ds,
                                             const ConceptSchema& schema, EvalSplit split,
                                             std::span<const int> ks) {
  if (!ds.has_split()) throw ValidationError("dataset has no split");
  const auto& users = split == EvalSplit::validation ? ds.val_users : ds.test_users;
  std::vector<int> kv(ks.begin(), ks.end());
  return evaluate_heldout(params, users, schema, kv, kv);
}

double heldout_recon_loglik(const ModelParams& params, const InteractionDataset& ds,
                            const ConceptSchema& schema, EvalSplit split) {
  const auto& users = split == EvalSplit::validation ? ds.val_users : ds.test_users;
  if (users.empty()) throw ValidationError("no held-out users in requested split");
  double total = 0;
  for (const auto& h : users) {
    auto feat = build_user_concept_features(h.input, schema);
    Eigen::VectorXd logits = score_items(params, h.input, feat);
    total += recon_loglik(logits, h.target);
  }
  return total / static_cast<double>(users.size());
}

Eigen::MatrixXd user_mean_latents(const ModelParams& params, const InteractionDataset& ds,
                                  const ConceptSchema& schema) {
  const ModelDims& dims = params.dims;
  Eigen::MatrixXd out(ds.n_users, dims.k * dims.d);
  CausalGraph graph = params.graph();
  ElementwiseTransform g = params.transform();

  std::vector<const std::vector<int>*> visible(static_cast<size_t>(ds.n_users), nullptr);
  for (int u : ds.train_users) visible[static_cast<size_t>(u)] = &ds.rows[static_cast<size_t>(u)];
  for (const auto& h : ds.val_users) visible[static_cast<size_t>(h.user)] = &h.input;
  for (const auto& h : ds.test_users) visible[static_cast<size_t>(h.user)] = &h.input;

  for (int u = 0; u < ds.n_users; ++u) {
    const std::vector<int>* items =
        visible[static_cast<size_t>(u)] ? visible[static_cast<size_t>(u)] : &ds.rows[static_cast<size_t>(u)];
    auto feat = build_user_concept_features(*items, schema);
    EncoderOutput enc = encode(params, *items, feat);
    LatentBlocks z = causal_transform(exogenous(enc.mu), graph, g);
    for (int i = 0; i < dims.k; ++i) {
      out.row(u).segment(i * dims.d, dims.d) = z.values.row(i);
    }
  }
  return out;
}

TrainResult train(const InteractionDataset& ds, const ConceptSchema& schema,
                  const TrainConfig& cfg, const LogSink& log_sink) {
  cfg.validate();
  if (!ds.has_split()) throw ValidationError("dataset split missing; run split_users first");
  if (schema.n_items() != ds.n_items) {
    throw ShapeError("schema item count does not match dataset");
  }
  check_acyclic(schema.prior_dag);

  const bool ablate = cfg.ablate_causal;
  Eigen::MatrixXi mask =
      ablate ? Eigen::MatrixXi::Zero(schema.k, schema.k).eval() : schema.prior_dag;
  TransformMode g_mode = ablate ? TransformMode::linear_bypass : cfg.transform_mode();

  ModelDims dims;
  dims.n_items = ds.n_items;
  dims.k = schema.k;
  dims.d = cfg.d;
  dims.hidden = cfg.hidden;
  dims.prior_hidden = cfg.prior_hidden;
  dims.category_counts = schema.category_counts;
  dims.conditioned = !ablate;

  Rng rng(cfg.seed);
  ModelParams params = init_model(dims, mask, g_mode, rng);

  std::vector<UserConceptFeature> train_feats;
  train_feats.reserve(ds.train_users.size());
  for (int u : ds.train_users) {
    train_feats.push_back(build_user_concept_features(ds.rows[static_cast<size_t>(u)], schema));
  }

  ObjectiveConfig ocfg;
  ocfg.gamma1 = ablate ? 0.0 : cfg.gamma1;
  ocfg.gamma2 = ablate ? 0.0 : cfg.gamma2;
  ocfg.likelihood = cfg.likelihood_mode();

  ModelParams grads = zeros_like(params);
  auto views = tensor_views(params);
  auto grad_views = tensor_views(grads);
  AdamState adam;
  adam.m.resize(views.size());
  adam.v.resize(views.size());
  for (size_t i = 0; i < views.size(); ++i) {
    adam.m[i] = Eigen::VectorXd::Zero(views[i].size);
    adam.v[i] = Eigen::VectorXd::Zero(views[i].size);
  }
  auto is_frozen = [&](const std::string& name) {
    if (g_mode == TransformMode::linear_bypass &&
        (name == "g_a" || name == "g_b" || name == "g_s")) {
      return true;  // bypass keeps the documented fixed affine transform
    }
    if (!dims.conditioned && name.rfind("prior_", 0) == 0) return true;
    if (ablate && name == "adj_raw") return true;
    return false;
  };

  TrainResult result;
  ModelParams last_good = params;
  int last_good_epoch = 0;
  long step = 0;
  int rounds_since_best = 0;
  nlohmann::json metric_history = nlohmann::json::array();

  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::vector<int> order(ds.train_users.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  bool stop = false;
  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    rng.shuffle(order);
    double epoch_weight = 0;
    LossBreakdown epoch_loss;
    double beta_now = 0;
    bool epoch_diverged = false;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      size_t bsz = end - start;

      std::vector<BatchExample> batch(bsz);
      std::vector<Eigen::MatrixXd> noise(bsz);
      for (size_t b = 0; b < bsz; ++b) {
        int local = order[start + b];
        int user = ds.train_users[static_cast<size_t>(local)];
        batch[b].input_items = ds.rows[static_cast<size_t>(user)];
        batch[b].recon_items = ds.rows[static_cast<size_t>(user)];
        batch[b].feat = &train_feats[static_cast<size_t>(local)];
        Eigen::MatrixXd n(dims.k, dims.d);
        for (int i = 0; i < dims.k; ++i) {
          for (int jd = 0; jd < dims.d; ++jd) n(i, jd) = rng.normal();
        }
        noise[b] = std::move(n);
      }

      beta_now = cfg.beta_max *
                 std::min(1.0, static_cast<double>(step) /
                                   static_cast<double>(std::max(1, cfg.beta_anneal_steps)));
      ocfg.beta = beta_now;

      for (auto& gv : grad_views) std::fill(gv.data, gv.data + gv.size, 0.0);
      LossBreakdown loss = compute_batch(params, batch, noise, ocfg, &grads);
      if (!std::isfinite(loss.total)) {
        result.diverged = true;
        result.divergence_report = "non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step);
        epoch_diverged = true;
        break;
      }

      ++adam.t;
      double bias_corr = std::sqrt(1.0 - std::pow(beta2, static_cast<double>(adam.t))) /
                         (1.0 - std::pow(beta1, static_cast<double>(adam.t)));
      for (size_t i = 0; i < views.size(); ++i) {
        if (is_frozen(views[i].name)) continue;
        double lr = cfg.learning_rate * bias_corr;
        if (views[i].name == "adj_raw") lr *= cfg.adj_lr_multiplier;
        Eigen::Map<Eigen::VectorXd> p(views[i].data, views[i].size);
        Eigen::Map<Eigen::VectorXd> g(grad_views[i].data, grad_views[i].size);
        adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
        adam.v[i] = beta2 * adam.v[i].array().matrix() +
                    (1.0 - beta2) * g.array().square().matrix();
        p.array() -= lr * adam.m[i].array() / (adam.v[i].array().sqrt() + adam_eps);
      }
      params.enforce_constraints();
      ++step;

      double w = static_cast<double>(bsz);
      epoch_loss.recon += w * loss.recon;
      epoch_loss.kl_eps += w * loss.kl_eps;
      epoch_loss.kl_z += w * loss.kl_z;
      epoch_loss.sup_a += w * loss.sup_a;
      epoch_loss.sup_z += w * loss.sup_z;
      epoch_loss.total += w * loss.total;
      epoch_weight += w;
    }

    if (epoch_diverged) break;

    if (epoch_weight > 0) {
      epoch_loss.recon /= epoch_weight;
      epoch_loss.kl_eps /= epoch_weight;
      epoch_loss.kl_z /= epoch_weight;
      epoch_loss.sup_a /= epoch_weight;
      epoch_loss.sup_z /= epoch_weight;
      epoch_loss.total /= epoch_weight;
    }
    last_good = params;
    last_good_epoch = epoch;

    EpochLog log;
    log.epoch = epoch;
    log.beta = beta_now;
    log.loss = epoch_loss;

    if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
      auto metrics = validate(params, ds, schema);
      log.has_validation = true;
      log.validation = metrics;
      metric_history.push_back({{"epoch", epoch}, {"ndcg@100", metrics.at("ndcg@100")}});
      if (result.best_epoch < 0 || metrics.at("ndcg@100") > result.best_val_ndcg100) {
        result.best_val_ndcg100 = metrics.at("ndcg@100");
        result.best_epoch = epoch;
        result.best.params = params;
        rounds_since_best = 0;
      } else {
        ++rounds_since_best;
        if (rounds_since_best >= cfg.patience) stop = true;
      }
    }
    result.history.push_back(log);
    if (log_sink) log_sink(log);
  }

  if (result.best_epoch < 0) {
    result.best.params = last_good;
    result.best_epoch = last_good_epoch;
  }

  nlohmann::json meta;
  meta["config"] = config_to_string(cfg);
  meta["config_hash"] = config_hash(cfg);
  meta["seed"] = cfg.seed;
  meta["epoch"] = result.best_epoch;
  meta["best_val_ndcg100"] = result.best_val_ndcg100;
  meta["metric_history"] = metric_history;
  if (result.diverged) meta["divergence"] = result.divergence_report;
  result.best.meta_json = meta.dump(2);
  return result;
}

}  // namespace cadvae
