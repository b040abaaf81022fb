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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cadvae/data.hpp"
#include "cadvae/metrics.hpp"
#include "cadvae/model.hpp"
#include "cadvae/objective.hpp"
#include "cadvae/projection.hpp"
#include "cadvae/schema.hpp"
#include "cadvae/synthetic.hpp"
#include "cadvae/trainer.hpp"
#include "cadvae/util.hpp"

namespace fs = std::filesystem;
using namespace cadvae;

namespace {

// Exit codes: 0 ok, 2 input error, 3 training divergence, 4 artifact mismatch.
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitMismatch = 4;

std::string resolve_path(const std::string& path) {
  if (path.empty() || fs::exists(path) || fs::path(path).is_absolute()) return path;
  const char* root = std::getenv("CADVAE_DATA_DIR");
  if (root != nullptr) {
    fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

void write_manifest(const std::string& dir, const std::string& subcommand,
                    const std::map<std::string, std::string>& args, uint64_t seed,
                    const std::string& cfg_hash) {
  nlohmann::json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["args"] = args;
  j["seed"] = seed;
  j["config_hash"] = cfg_hash;
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    if (trim(part).empty()) continue;
    out.push_back(std::stoi(trim(part)));
  }
  if (out.empty()) throw ValidationError("empty integer list");
  return out;
}

std::array<double, 3> parse_ratios(const std::string& text) {
  auto parts = split(text, ',');
  if (parts.size() != 3) throw ValidationError("ratios must be three comma-separated numbers");
  return {std::stod(trim(parts[0])), std::stod(trim(parts[1])), std::stod(trim(parts[2]))};
}

DagOverride parse_dag(const std::string& text) {
  DagOverride edges;
  for (const auto& part : split(text, ',')) {
    auto t = trim(part);
    if (t.empty()) continue;
    auto gt = t.find('>');
    if (gt == std::string::npos) throw ValidationError("DAG edge must be parent>child: " + t);
    edges.emplace_back(trim(t.substr(0, gt)), trim(t.substr(gt + 1)));
  }
  return edges;
}

int cmd_prepare(const std::string& ratings, const std::string& metadata, const std::string& out,
                const std::string& ratios_s, double foldin, uint64_t seed, bool skip_header,
                const std::string& dag_s, bool dag_given) {
  std::string ratings_path = resolve_path(ratings);
  std::string metadata_path = resolve_path(metadata);
  if (!fs::exists(ratings_path)) throw IoError("ratings file not found: " + ratings_path);
  if (!fs::exists(metadata_path)) throw IoError("metadata file not found: " + metadata_path);

  RatingTable table = load_ratings(ratings_path, skip_header);
  InteractionDataset ds = binarize_and_filter(table);
  split_users(ds, parse_ratios(ratios_s), foldin, seed);

  std::optional<DagOverride> dag;
  if (dag_given) dag = parse_dag(dag_s);
  ConceptSchema schema = load_concept_schema(metadata_path, ds.item_ids, dag);

  write_dataset(out, ds);
  write_schema(out, schema);
  std::map<std::string, std::string> args = {
      {"ratings", ratings},   {"metadata", metadata}, {"out", out},
      {"ratios", ratios_s},   {"foldin", std::to_string(foldin)},
      {"skip_header", skip_header ? "1" : "0"},
      {"dag", dag_given ? dag_s : "default"}};
  write_manifest(out, "prepare", args, seed, hex64(fnv1a64(ratios_s + dag_s)));

  std::cout << "prepared dataset: " << ds.n_users << " users, " << ds.n_items << " items, "
            << ds.train_users.size() << "/" << ds.val_users.size() << "/"
            << ds.test_users.size() << " train/val/test\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& config, const std::string& out) {
  std::string data_dir = resolve_path(data);
  InteractionDataset ds = read_dataset(data_dir);
  ConceptSchema schema = read_schema(data_dir);
  TrainConfig cfg = parse_train_config(resolve_path(config));

  fs::create_directories(out);
  std::ofstream log(fs::path(out) / "metrics.jsonl");
  if (!log) throw IoError("cannot write metrics log in " + out);
  TrainResult result = train(ds, schema, cfg, [&](const EpochLog& e) {
    log << e.to_json() << "\n";
    log.flush();
  });

  save_checkpoint((fs::path(out) / "checkpoint.bin").string(), result.best);
  std::map<std::string, std::string> args = {{"data", data}, {"config", config}, {"out", out}};
  write_manifest(out, "train", args, cfg.seed, config_hash(cfg));

  if (result.diverged) {
    std::cerr << "training diverged: " << result.divergence_report
              << " (last good checkpoint preserved)\n";
    return kExitDivergence;
  }
  std::cout << "best epoch " << result.best_epoch << ", validation ndcg@100 "
            << result.best_val_ndcg100 << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split_s,
             const std::string& ks_s, const std::string& out) {
  Checkpoint checkpoint = load_checkpoint(resolve_path(ckpt));
  std::string data_dir = resolve_path(data);
  InteractionDataset ds = read_dataset(data_dir);
  ConceptSchema schema = read_schema(data_dir);
  if (checkpoint.params.dims.n_items != ds.n_items ||
      checkpoint.params.dims.k != schema.k) {
    throw ShapeError("checkpoint shapes do not match dataset (items " +
                     std::to_string(checkpoint.params.dims.n_items) + " vs " +
                     std::to_string(ds.n_items) + ")");
  }

  EvalSplit split = split_s == "validation" ? EvalSplit::validation : EvalSplit::test;
  std::vector<int> ks = parse_int_list(ks_s);
  auto metrics = evaluate_split(checkpoint.params, ds, schema, split, ks);

  Eigen::MatrixXd latents = user_mean_latents(checkpoint.params, ds, schema);
  const auto& users = split == EvalSplit::validation ? ds.val_users : ds.test_users;
  Eigen::MatrixXd split_latents(static_cast<Eigen::Index>(users.size()), latents.cols());
  for (size_t i = 0; i < users.size(); ++i) {
    split_latents.row(static_cast<Eigen::Index>(i)) = latents.row(users[i].user);
  }
  std::vector<double> per_block;
  double indep = independence_per_concept(split_latents, checkpoint.params.dims.k,
                                          checkpoint.params.dims.d, &per_block);

  nlohmann::json j;
  j["split"] = split_s;
  j["k"] = ks;
  j["metrics"] = metrics;
  j["independence"] = {{"mean", indep}};
  for (int i = 0; i < schema.k; ++i) {
    j["independence"]["per_concept"][schema.concept_names[static_cast<size_t>(i)]] =
        per_block[static_cast<size_t>(i)];
  }
  nlohmann::json meta = nlohmann::json::parse(checkpoint.meta_json);
  if (meta.contains("config_hash")) j["config_hash"] = meta["config_hash"];

  std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out.empty()) write_text_file(out, text + "\n");
  return 0;
}

int cmd_project(const std::string& ckpt, const std::string& data, const std::string& out,
                const std::string& method_s, uint64_t seed) {
  Checkpoint checkpoint = load_checkpoint(resolve_path(ckpt));
  std::string data_dir = resolve_path(data);
  InteractionDataset ds = read_dataset(data_dir);
  ConceptSchema schema = read_schema(data_dir);
  if (checkpoint.params.dims.n_items != ds.n_items) {
    throw ShapeError("checkpoint item count does not match dataset");
  }
  ProjectionMethod method = method_s == "pca" ? ProjectionMethod::pca : ProjectionMethod::tsne;
  ProjectionResult res =
      export_projection(checkpoint.params, ds, schema, out, method, seed);
  std::cout << "wrote " << res.rows_written << " rows to " << out << " (silhouette "
            << res.silhouette << ")\n";
  return 0;
}

int cmd_synth(const std::string& out, int users, int items, int budget, int k, int d,
              const std::string& edges_s, const std::string& gmode, uint64_t seed) {
  SyntheticSpec spec = SyntheticSpec::chain_default();
  spec.n_users = users;
  spec.n_items = items;
  spec.budget = budget;
  spec.seed = seed;
  spec.g_mode = gmode;
  if (k != 3 || !edges_s.empty()) {
    spec.k = k;
    spec.a_star = Eigen::MatrixXd::Zero(k, k);
    for (const auto& part : split(edges_s, ',')) {
      auto t = trim(part);
      if (t.empty()) continue;
      auto gt = t.find('>');
      auto colon = t.find(':');
      if (gt == std::string::npos || colon == std::string::npos || colon < gt) {
        throw ValidationError("edge must be parent>child:weight, got " + t);
      }
      int p = std::stoi(t.substr(0, gt));
      int c = std::stoi(t.substr(gt + 1, colon - gt - 1));
      spec.a_star(p, c) = std::stod(t.substr(colon + 1));
    }
    spec.categories.assign(static_cast<size_t>(k), 5);
  }
  spec.d = d;

  SyntheticData synth = gen_synthetic(spec);
  write_dataset(out, synth.dataset);
  write_schema(out, synth.schema);

  nlohmann::json truth;
  std::vector<std::vector<double>> a(static_cast<size_t>(spec.k),
                                     std::vector<double>(static_cast<size_t>(spec.k)));
  for (int i = 0; i < spec.k; ++i) {
    for (int c = 0; c < spec.k; ++c) a[static_cast<size_t>(i)][static_cast<size_t>(c)] = spec.a_star(i, c);
  }
  truth["a_star"] = a;
  truth["g_mode"] = spec.g_mode;
  truth["seed"] = spec.seed;
  write_text_file((fs::path(out) / "ground_truth.json").string(), truth.dump(2) + "\n");

  std::map<std::string, std::string> args = {
      {"out", out},     {"users", std::to_string(users)},  {"items", std::to_string(items)},
      {"budget", std::to_string(budget)}, {"k", std::to_string(k)}, {"d", std::to_string(d)},
      {"edges", edges_s}, {"gmode", gmode}};
  write_manifest(out, "synth", args, seed, hex64(fnv1a64(edges_s + gmode)));
  std::cout << "synthetic dataset written to " << out << "\n";
  return 0;
}

int cmd_sweep(const std::string& data, const std::string& config, const std::string& betas_s,
              const std::string& out) {
  std::string data_dir = resolve_path(data);
  InteractionDataset ds = read_dataset(data_dir);
  ConceptSchema schema = read_schema(data_dir);
  TrainConfig base = parse_train_config(resolve_path(config));

  std::vector<double> betas;
  for (const auto& part : split(betas_s, ',')) betas.push_back(std::stod(trim(part)));
  if (betas.empty()) throw ValidationError("empty beta list");

  fs::create_directories(out);
  std::ofstream table(fs::path(out) / "results.tsv");
  table << "beta\tindependence\tndcg@100\tconfig_hash\n";

  std::vector<double> indep_vals, ndcg_vals;
  for (double beta : betas) {
    TrainConfig cfg = base;
    cfg.beta_max = beta;
    std::string run_dir = (fs::path(out) / ("beta_" + std::to_string(beta))).string();
    fs::create_directories(run_dir);
    try {
      std::ofstream log(fs::path(run_dir) / "metrics.jsonl");
      TrainResult result =
          train(ds, schema, cfg, [&](const EpochLog& e) { log << e.to_json() << "\n"; });
      if (result.diverged) throw DivergenceError(result.divergence_report);
      save_checkpoint((fs::path(run_dir) / "checkpoint.bin").string(), result.best);

      const int ks[] = {100};
      auto metrics = evaluate_split(result.best.params, ds, schema, EvalSplit::test, ks);
      Eigen::MatrixXd latents = user_mean_latents(result.best.params, ds, schema);
      Eigen::MatrixXd test_latents(static_cast<Eigen::Index>(ds.test_users.size()),
                                   latents.cols());
      for (size_t i = 0; i < ds.test_users.size(); ++i) {
        test_latents.row(static_cast<Eigen::Index>(i)) = latents.row(ds.test_users[i].user);
      }
      double indep = independence_per_concept(test_latents, schema.k, cfg.d);
      double ndcg = metrics.at("ndcg@100");
      table << beta << '\t' << indep << '\t' << ndcg << '\t' << config_hash(cfg) << '\n';
      indep_vals.push_back(indep);
      ndcg_vals.push_back(ndcg);
      std::cout << "beta " << beta << ": independence " << indep << ", ndcg@100 " << ndcg << "\n";
    } catch (const Error& e) {
      table << beta << "\tnan\tnan\t" << config_hash(cfg) << '\n';
      std::cerr << "beta " << beta << " failed: " << e.what() << " (sweep continues)\n";
    }
  }
  table.flush();

  std::map<std::string, std::string> args = {
      {"data", data}, {"config", config}, {"beta", betas_s}, {"out", out}};
  write_manifest(out, "sweep", args, base.seed, config_hash(base));

  if (indep_vals.size() >= 2) {
    double rho = spearman(indep_vals, ndcg_vals);
    std::cout << "spearman(independence, ndcg@100) = " << rho << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cadvae: causally disentangled VAE toolkit for implicit-feedback ranking"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "parse, binarize, filter and split a rating log");
  std::string ratings, metadata, out_dir, ratios = "0.8,0.1,0.1", dag;
  double foldin = 0.8;
  uint64_t seed = 1;
  bool skip_header = false;
  prepare->add_option("--ratings", ratings)->required();
  prepare->add_option("--metadata", metadata)->required();
  prepare->add_option("--out", out_dir)->required();
  prepare->add_option("--ratios", ratios);
  prepare->add_option("--foldin", foldin);
  prepare->add_option("--seed", seed);
  prepare->add_flag("--skip-header", skip_header);
  auto* dag_opt = prepare->add_option("--dag", dag, "edge overrides parent>child[,..]; empty for none");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a prepared dataset");
  std::string data, config, train_out;
  train_cmd->add_option("--data", data)->required();
  train_cmd->add_option("--config", config)->required();
  train_cmd->add_option("--out", train_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "ranking metrics and independence scores");
  std::string ckpt, eval_data, split = "test", ks = "20,50,100", eval_out;
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"test", "validation"}));
  eval_cmd->add_option("--k", ks);
  eval_cmd->add_option("--out", eval_out);

  // project
  auto* project_cmd = app.add_subcommand("project", "2-D projection of concept representations");
  std::string proj_ckpt, proj_data, proj_out, method = "tsne";
  uint64_t proj_seed = 1;
  project_cmd->add_option("--ckpt", proj_ckpt)->required();
  project_cmd->add_option("--data", proj_data)->required();
  project_cmd->add_option("--out", proj_out)->required();
  project_cmd->add_option("--method", method)->check(CLI::IsMember({"tsne", "pca"}));
  project_cmd->add_option("--seed", proj_seed);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a ground-truth SCM dataset");
  std::string synth_out, edges, gmode = "linear_bypass";
  int users = 10000, items = 3000, budget = 200, k = 3, d = 4;
  uint64_t synth_seed = 7;
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--users", users);
  synth_cmd->add_option("--items", items);
  synth_cmd->add_option("--budget", budget);
  synth_cmd->add_option("--k", k);
  synth_cmd->add_option("--d", d);
  synth_cmd->add_option("--edges", edges, "parent>child:weight[,..]");
  synth_cmd->add_option("--gmode", gmode)->check(CLI::IsMember({"linear_bypass", "monotone"}));
  synth_cmd->add_option("--seed", synth_seed);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "beta sweep: independence vs ranking quality");
  std::string sweep_data, sweep_config, betas = "1,5,10,20,50", sweep_out;
  sweep_cmd->add_option("--data", sweep_data)->required();
  sweep_cmd->add_option("--config", sweep_config)->required();
  sweep_cmd->add_option("--beta", betas);
  sweep_cmd->add_option("--out", sweep_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      return cmd_prepare(ratings, metadata, out_dir, ratios, foldin, seed, skip_header, dag,
                         dag_opt->count() > 0);
    }
    if (train_cmd->parsed()) return cmd_train(data, config, train_out);
    if (eval_cmd->parsed()) return cmd_eval(ckpt, eval_data, split, ks, eval_out);
    if (project_cmd->parsed()) return cmd_project(proj_ckpt, proj_data, proj_out, method, proj_seed);
    if (synth_cmd->parsed()) {
      return cmd_synth(synth_out, users, items, budget, k, d, edges, gmode, synth_seed);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_data, sweep_config, betas, sweep_out);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
