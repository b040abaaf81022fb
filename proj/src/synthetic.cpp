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

#include "cadvae/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadvae/rng.hpp"
#include "cadvae/util.hpp"

namespace cadvae {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double std_normal_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

// Concentration of the mixture alpha*delta + (1-alpha)*uniform over R real
// categories with an empty UNKNOWN slot: c = (alpha^2 (R^2 - 1) + 1) / R^2.
double alpha_for_concentration(double c, int R) {
  double r2 = static_cast<double>(R) * R;
  double num = c * r2 - 1.0;
  if (num <= 0) return 0.0;
  return std::min(1.0, std::sqrt(num / (r2 - 1.0)));
}

double concentration_floor(int R) { return 1.0 / (static_cast<double>(R) * R); }

}  // namespace

SyntheticSpec SyntheticSpec::chain_default() {
  SyntheticSpec spec;
  spec.a_star = Eigen::MatrixXd::Zero(3, 3);
  spec.a_star(0, 1) = 0.8;
  spec.a_star(1, 2) = -0.8;
  spec.categories = {2, 2, 5};
  return spec;
}

void SyntheticSpec::validate() const {
  if (k < 1 || d < 1) throw ValidationError("synthetic spec: k and d must be positive");
  if (budget < 5) throw ValidationError("synthetic spec: click budget must be >= 5");
  if (budget > n_items) throw ValidationError("synthetic spec: click budget exceeds n_items");
  if (n_users < 1) throw ValidationError("synthetic spec: need at least one user");
  if (a_star.rows() != k || a_star.cols() != k) {
    throw ShapeError("synthetic spec: a_star must be k x k");
  }
  if (static_cast<int>(categories.size()) != k) {
    throw ShapeError("synthetic spec: categories must have k entries");
  }
  for (int r : categories) {
    if (r < 2) throw ValidationError("synthetic spec: each concept needs >= 2 categories");
  }
  Eigen::MatrixXi mask = (a_star.array() != 0.0).cast<int>();
  check_acyclic(mask);
  if (!(root_c_lo > 0 && root_c_hi < 1 && root_c_lo < root_c_hi)) {
    throw ValidationError("synthetic spec: root c range must be inside (0, 1)");
  }
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int k = spec.k, d = spec.d, n_items = spec.n_items, n_users = spec.n_users;

  Eigen::MatrixXi mask = (spec.a_star.array() != 0.0).cast<int>();
  CausalGraph graph{mask, spec.a_star};
  ElementwiseTransform g = spec.g_mode == "monotone"
                               ? ElementwiseTransform::monotone(
                                     Eigen::VectorXd::Constant(k, 1.0),
                                     Eigen::VectorXd::Zero(k),
                                     Eigen::VectorXd::Constant(k, 0.3))
                               : ElementwiseTransform::identity(k);
  std::vector<int> topo = check_acyclic(mask);

  Rng master(spec.seed);
  Rng item_rng = master.fork(0xA11CE);

  // Item embeddings; the leading coordinate of each block drives the labels.
  Eigen::MatrixXd embed(n_items, k * d);
  for (int j = 0; j < n_items; ++j) {
    for (int c = 0; c < k * d; ++c) embed(j, c) = item_rng.normal();
  }

  // Quantile cluster edges and per-item labels per concept.
  std::vector<std::vector<double>> edges(static_cast<size_t>(k));
  std::vector<std::vector<int>> item_cat(static_cast<size_t>(k),
                                         std::vector<int>(static_cast<size_t>(n_items)));
  for (int i = 0; i < k; ++i) {
    int R = spec.categories[static_cast<size_t>(i)];
    std::vector<double> vals(static_cast<size_t>(n_items));
    for (int j = 0; j < n_items; ++j) vals[static_cast<size_t>(j)] = embed(j, i * d);
    std::sort(vals.begin(), vals.end());
    for (int b = 1; b < R; ++b) {
      edges[static_cast<size_t>(i)].push_back(
          vals[static_cast<size_t>(n_items * b / R)]);
    }
    for (int j = 0; j < n_items; ++j) {
      const auto& e = edges[static_cast<size_t>(i)];
      int cat = static_cast<int>(std::upper_bound(e.begin(), e.end(), embed(j, i * d)) -
                                 e.begin());
      item_cat[static_cast<size_t>(i)][static_cast<size_t>(j)] = cat;  // 0..R-1
    }
  }

  // Joint category cells (mixed-radix index over the k concept labels). Each
  // click first draws a cell from the product of the per-concept mixtures,
  // then an item within the cell by preference softmax; the item-level step
  // cannot shift the category marginals, so realized histograms match the
  // designed mixtures up to multinomial noise.
  long n_cells = 1;
  for (int r : spec.categories) {
    n_cells *= r;
    if (n_cells > (1 << 20)) throw ValidationError("synthetic spec: category product too large");
  }
  std::vector<std::vector<int>> items_by_cell(static_cast<size_t>(n_cells));
  for (int j = 0; j < n_items; ++j) {
    long cell = 0;
    for (int i = 0; i < k; ++i) {
      cell = cell * spec.categories[static_cast<size_t>(i)] +
             item_cat[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    items_by_cell[static_cast<size_t>(cell)].push_back(j);
  }

  SyntheticData out;
  out.graph_star = graph;
  out.g_star = g;
  out.eps_star.resize(n_users, k * d);
  out.z_star.resize(n_users, k * d);
  out.c_targets.resize(n_users, k);

  InteractionDataset ds;
  ds.n_users = n_users;
  ds.n_items = n_items;
  ds.rows.resize(static_cast<size_t>(n_users));
  ds.user_ids.resize(static_cast<size_t>(n_users));
  ds.item_ids.resize(static_cast<size_t>(n_items));
  std::iota(ds.user_ids.begin(), ds.user_ids.end(), 0);
  std::iota(ds.item_ids.begin(), ds.item_ids.end(), 0);

  std::vector<std::pair<double, int>> keys;
  for (int u = 0; u < n_users; ++u) {
    Rng urng = master.fork(static_cast<uint64_t>(u) + 1);

    Eigen::MatrixXd eps(k, d);
    for (int i = 0; i < k; ++i) {
      for (int jd = 0; jd < d; ++jd) eps(i, jd) = urng.normal();
    }
    LatentBlocks z = causal_transform(exogenous(eps), graph, g);
    for (int i = 0; i < k; ++i) {
      out.eps_star.row(u).segment(i * d, d) = eps.row(i);
      out.z_star.row(u).segment(i * d, d) = z.values.row(i);
    }

    // Per-concept category sequences drawn in topological order. Roots take
    // a wide concentration target driven by the user's own latent level;
    // each child concept's target sits on the sigmoid curve of the
    // ground-truth weights applied to the parents' REALIZED concentrations,
    // so the curve holds exactly in the variables the pipeline observes and
    // the supervision fit is free of regressor-noise attenuation.
    Eigen::VectorXd c_target(k);
    Eigen::VectorXd c_realized(k);
    std::vector<std::vector<int>> cat_seq(static_cast<size_t>(k),
                                          std::vector<int>(static_cast<size_t>(spec.budget)));
    for (int idx : topo) {
      int R = spec.categories[static_cast<size_t>(idx)];
      bool has_parent = false;
      double acc = 0;
      for (int pidx = 0; pidx < k; ++pidx) {
        if (mask(pidx, idx)) {
          has_parent = true;
          acc += spec.a_star(pidx, idx) * c_realized(pidx);
        }
      }
      double target;
      if (!has_parent) {
        target = spec.root_c_lo +
                 (spec.root_c_hi - spec.root_c_lo) * std_normal_cdf(z.values(idx, 0));
      } else {
        target = sigmoid(acc) + urng.uniform(-spec.c_jitter, spec.c_jitter);
      }
      double cap = (spec.alpha_cap * spec.alpha_cap * (static_cast<double>(R) * R - 1) + 1) /
                   (static_cast<double>(R) * R);
      target = std::clamp(target, concentration_floor(R) + 0.01, cap);
      c_target(idx) = target;

      double alpha = alpha_for_concentration(target, R);
      const auto& e = edges[static_cast<size_t>(idx)];
      int dominant = static_cast<int>(
          std::upper_bound(e.begin(), e.end(), z.values(idx, 0)) - e.begin());

      Eigen::VectorXd counts = Eigen::VectorXd::Zero(R);
      for (int t = 0; t < spec.budget; ++t) {
        double uq = urng.uniform();
        int cat;
        if (uq < alpha) {
          cat = dominant;
        } else {
          cat = static_cast<int>((uq - alpha) / (1.0 - alpha) * R);
          cat = std::min(cat, R - 1);
        }
        cat_seq[static_cast<size_t>(idx)][static_cast<size_t>(t)] = cat;
        counts(cat) += 1.0;
      }
      // Realized concentration over the m = R + 1 schema slots (UNKNOWN empty).
      Eigen::VectorXd h = counts / static_cast<double>(spec.budget);
      double m_slots = R + 1.0;
      c_realized(idx) = (h.squaredNorm() - 1.0 / m_slots) / (1.0 - 1.0 / m_slots);
    }
    out.c_targets.row(u) = c_target.transpose();

    // Combine the per-concept draws into joint cells per click.
    std::vector<int> cell_count(static_cast<size_t>(n_cells), 0);
    std::vector<int> free_slots(static_cast<size_t>(n_cells));
    for (long cidx = 0; cidx < n_cells; ++cidx) {
      free_slots[static_cast<size_t>(cidx)] =
          static_cast<int>(items_by_cell[static_cast<size_t>(cidx)].size());
    }
    int spill = 0;
    for (int t = 0; t < spec.budget; ++t) {
      long cell = 0;
      for (int i = 0; i < k; ++i) {
        cell = cell * spec.categories[static_cast<size_t>(i)] +
               cat_seq[static_cast<size_t>(i)][static_cast<size_t>(t)];
      }
      if (free_slots[static_cast<size_t>(cell)] > 0) {
        ++cell_count[static_cast<size_t>(cell)];
        --free_slots[static_cast<size_t>(cell)];
      } else {
        ++spill;
      }
    }
    // Saturated cells spill deterministically into the nearest free cell.
    for (long cidx = 0; cidx < n_cells && spill > 0; ++cidx) {
      while (free_slots[static_cast<size_t>(cidx)] > 0 && spill > 0) {
        ++cell_count[static_cast<size_t>(cidx)];
        --free_slots[static_cast<size_t>(cidx)];
        --spill;
      }
    }

    // Within each cell, preference-softmax sampling without replacement
    // (Gumbel keys on the item logits z* . v).
    std::vector<int> clicks;
    clicks.reserve(static_cast<size_t>(spec.budget));
    for (long cidx = 0; cidx < n_cells; ++cidx) {
      int count = cell_count[static_cast<size_t>(cidx)];
      if (count == 0) continue;
      const auto& pool = items_by_cell[static_cast<size_t>(cidx)];
      keys.resize(pool.size());
      for (size_t t = 0; t < pool.size(); ++t) {
        int j = pool[t];
        double pref = 0;
        for (int c = 0; c < k * d; ++c) pref += out.z_star(u, c) * embed(j, c);
        double gumbel = -std::log(-std::log(1.0 - urng.uniform()));
        keys[t] = {spec.softmax_temp * pref + gumbel, j};
      }
      std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first; });
      for (int t = 0; t < count; ++t) clicks.push_back(keys[static_cast<size_t>(t)].second);
    }
    std::sort(clicks.begin(), clicks.end());
    ds.rows[static_cast<size_t>(u)] = std::move(clicks);
  }

  split_users(ds, spec.ratios, spec.foldin_fraction, Rng::splitmix64(spec.seed ^ 0x5137));
  out.dataset = std::move(ds);

  // Schema in the data_ingest format: UNKNOWN + R level bins per concept.
  ConceptSchema schema;
  schema.k = k;
  for (int i = 0; i < k; ++i) {
    schema.concept_names.push_back("concept_" + std::to_string(i));
    int R = spec.categories[static_cast<size_t>(i)];
    std::vector<std::string> names = {"UNKNOWN"};
    for (int b = 0; b < R; ++b) names.push_back("level_" + std::to_string(b));
    schema.category_names.push_back(names);
    schema.category_counts.push_back(R + 1);
    std::vector<std::vector<int>> labels(static_cast<size_t>(n_items));
    for (int j = 0; j < n_items; ++j) {
      labels[static_cast<size_t>(j)] = {item_cat[static_cast<size_t>(i)][static_cast<size_t>(j)] + 1};
    }
    schema.item_labels.push_back(std::move(labels));
  }
  schema.prior_dag = mask;
  schema.validate();
  out.schema = std::move(schema);
  return out;
}

Eigen::MatrixXd dense_linear_solve_oracle(const Eigen::MatrixXd& eps, const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || eps.rows() != A.rows()) {
    throw ShapeError("dense oracle: shape mismatch");
  }
  Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(A.rows(), A.cols()) - A.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw ValidationError("dense oracle: singular system");
  return lu.solve(eps);
}

Eigen::MatrixXd fit_adjacency_to_features(const Eigen::MatrixXd& c_rows,
                                          const Eigen::MatrixXi& mask) {
  int k = static_cast<int>(mask.rows());
  if (c_rows.cols() != k) throw ShapeError("fit_adjacency: c column count must be k");
  Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(k, k);

  // The loss separates over children; with a single parent per child (chain
  // masks) each edge is a 1-D problem solved by damped Newton.
  for (int child = 0; child < k; ++child) {
    std::vector<int> parents;
    for (int p = 0; p < k; ++p) {
      if (mask(p, child)) parents.push_back(p);
    }
    if (parents.empty()) continue;
    if (parents.size() > 1) {
      throw ValidationError("fit_adjacency supports at most one parent per child");
    }
    int parent = parents[0];
    double a = 0;
    for (int iter = 0; iter < 200; ++iter) {
      double grad = 0, hess = 0;
      for (int u = 0; u < c_rows.rows(); ++u) {
        double cp = c_rows(u, parent), cc = c_rows(u, child);
        double s = sigmoid(a * cp);
        double sp = s * (1 - s);
        grad += -2.0 * (cc - s) * sp * cp;
        // Gauss-Newton curvature (drops the second-derivative term)
        hess += 2.0 * sp * sp * cp * cp;
      }
      if (hess <= 0) break;
      double step = grad / hess;
      a -= step;
      if (std::abs(step) < 1e-12) break;
    }
    fitted(parent, child) = a;
  }
  return fitted;
}

}  // namespace cadvae
