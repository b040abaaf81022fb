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

#include "cadvae/causal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "json.hpp"

#include "cadvae/util.hpp"

namespace cadvae {
namespace {

void require_square_binary(const Eigen::MatrixXi& mask) {
  if (mask.rows() != mask.cols()) {
    throw ShapeError("adjacency mask must be square");
  }
  for (int i = 0; i < mask.rows(); ++i) {
    if (mask(i, i) != 0) throw ValidationError("adjacency mask has non-zero diagonal");
    for (int j = 0; j < mask.cols(); ++j) {
      if (mask(i, j) != 0 && mask(i, j) != 1) {
        throw ValidationError("adjacency mask must be binary");
      }
    }
  }
}

// Finds one directed cycle for the error message; only called when Kahn's
// algorithm left nodes unprocessed, so a cycle is guaranteed to exist.
std::string find_cycle(const Eigen::MatrixXi& mask, const std::vector<bool>& in_cycle_region) {
  int k = static_cast<int>(mask.rows());
  std::vector<int> state(k, 0);  // 0 unseen, 1 on stack, 2 done
  std::vector<int> stack;
  std::string result;

  std::function<bool(int)> dfs = [&](int u) -> bool {
    state[u] = 1;
    stack.push_back(u);
    for (int v = 0; v < k; ++v) {
      if (mask(u, v) == 0 || !in_cycle_region[v]) continue;
      if (state[v] == 1) {
        std::ostringstream ss;
        auto it = std::find(stack.begin(), stack.end(), v);
        for (; it != stack.end(); ++it) ss << *it << " -> ";
        ss << v;
        result = ss.str();
        return true;
      }
      if (state[v] == 0 && dfs(v)) return true;
    }
    stack.pop_back();
    state[u] = 2;
    return false;
  };

  for (int u = 0; u < k; ++u) {
    if (in_cycle_region[u] && state[u] == 0 && dfs(u)) break;
  }
  return result;
}

}  // namespace

std::vector<int> check_acyclic(const Eigen::MatrixXi& mask) {
  require_square_binary(mask);
  int k = static_cast<int>(mask.rows());
  std::vector<int> indegree(k, 0);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) indegree[j] += mask(i, j);
  }
  std::vector<int> order;
  std::vector<bool> placed(k, false);
  order.reserve(k);
  for (int step = 0; step < k; ++step) {
    int next = -1;
    for (int i = 0; i < k; ++i) {
      if (!placed[i] && indegree[i] == 0) {
        next = i;
        break;
      }
    }
    if (next < 0) {
      std::vector<bool> remaining(k);
      for (int i = 0; i < k; ++i) remaining[i] = !placed[i];
      throw ValidationError("adjacency mask contains a cycle: " + find_cycle(mask, remaining));
    }
    placed[next] = true;
    order.push_back(next);
    for (int j = 0; j < k; ++j) {
      if (mask(next, j)) --indegree[j];
    }
  }
  return order;
}

Eigen::MatrixXd masked_weights(const Eigen::MatrixXd& raw, const Eigen::MatrixXi& mask) {
  if (raw.rows() != mask.rows() || raw.cols() != mask.cols()) {
    throw ShapeError("weight/mask shape mismatch");
  }
  return raw.cwiseProduct(mask.cast<double>());
}

CausalGraph make_graph(const Eigen::MatrixXi& mask, const Eigen::MatrixXd& raw_weights) {
  check_acyclic(mask);
  return CausalGraph{mask, masked_weights(raw_weights, mask)};
}

ElementwiseTransform ElementwiseTransform::identity(int k) {
  return linear(Eigen::VectorXd::Ones(k), Eigen::VectorXd::Zero(k));
}

ElementwiseTransform ElementwiseTransform::linear(Eigen::VectorXd a, Eigen::VectorXd b) {
  ElementwiseTransform g;
  g.mode = TransformMode::linear_bypass;
  g.a = std::move(a);
  g.b = std::move(b);
  g.s = Eigen::VectorXd::Zero(g.a.size());
  g.validate();
  return g;
}

ElementwiseTransform ElementwiseTransform::monotone(Eigen::VectorXd a, Eigen::VectorXd b,
                                                    Eigen::VectorXd s) {
  ElementwiseTransform g;
  g.mode = TransformMode::monotone;
  g.a = std::move(a);
  g.b = std::move(b);
  g.s = std::move(s);
  g.validate();
  return g;
}

void ElementwiseTransform::validate() const {
  if (a.size() != b.size() || a.size() != s.size()) {
    throw ShapeError("transform parameter size mismatch");
  }
  for (int i = 0; i < a.size(); ++i) {
    if (!(a(i) > 0)) throw ValidationError("transform slope must be positive");
    if (mode == TransformMode::monotone && !(a(i) > std::abs(s(i)) + kMargin)) {
      throw ValidationError("monotonicity margin violated: a <= |s| + margin");
    }
  }
}

double ElementwiseTransform::eval(int i, double u) const {
  if (mode == TransformMode::linear_bypass) return a(i) * u + b(i);
  return a(i) * u + b(i) + s(i) * std::tanh(u);
}

double ElementwiseTransform::deriv(int i, double u) const {
  if (mode == TransformMode::linear_bypass) return a(i);
  double t = std::tanh(u);
  return a(i) + s(i) * (1.0 - t * t);
}

double ElementwiseTransform::inverse(int i, double v) const {
  if (mode == TransformMode::linear_bypass) return (v - b(i)) / a(i);
  // a*w + b + s*tanh(w) = v and |s*tanh(w)| <= |s| give the bracket below.
  double lo = (v - b(i) - std::abs(s(i))) / a(i);
  double hi = (v - b(i) + std::abs(s(i))) / a(i);
  double w = (v - b(i)) / a(i);
  for (int iter = 0; iter < 100; ++iter) {
    double f = eval(i, w) - v;
    if (std::abs(f) <= 1e-10) return w;
    if (f > 0) {
      hi = std::min(hi, w);
    } else {
      lo = std::max(lo, w);
    }
    double step = f / deriv(i, w);
    w -= step;
    if (w <= lo || w >= hi) w = 0.5 * (lo + hi);  // bisection safeguard
  }
  throw Error("transform inverse did not converge");
}

Eigen::MatrixXd solve_structural(const Eigen::MatrixXd& eps_values, const CausalGraph& graph) {
  if (eps_values.rows() != graph.mask.rows()) {
    throw ShapeError("latent block count does not match graph size");
  }
  if (!eps_values.allFinite()) throw ValidationError("non-finite latent input");
  std::vector<int> order = check_acyclic(graph.mask);
  Eigen::MatrixXd m(eps_values.rows(), eps_values.cols());
  for (int idx : order) {
    m.row(idx) = eps_values.row(idx);
    for (int p = 0; p < graph.k(); ++p) {
      if (graph.mask(p, idx)) m.row(idx) += graph.weights(p, idx) * m.row(p);
    }
  }
  return m;
}

LatentBlocks causal_transform(const LatentBlocks& eps, const CausalGraph& graph,
                              const ElementwiseTransform& g) {
  if (eps.kind != LatentKind::exogenous) {
    throw ValidationError("causal_transform expects exogenous input");
  }
  Eigen::MatrixXd m = solve_structural(eps.values, graph);
  Eigen::MatrixXd z(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int jd = 0; jd < m.cols(); ++jd) z(i, jd) = g.eval(i, m(i, jd));
  }
  return endogenous(std::move(z));
}

Eigen::MatrixXd scm_residual(const LatentBlocks& z, const CausalGraph& graph,
                             const ElementwiseTransform& g) {
  if (z.kind != LatentKind::endogenous) {
    throw ValidationError("scm_residual expects endogenous input");
  }
  if (!z.values.allFinite()) throw ValidationError("non-finite latent input");
  Eigen::MatrixXd w(z.values.rows(), z.values.cols());
  for (int i = 0; i < w.rows(); ++i) {
    for (int jd = 0; jd < w.cols(); ++jd) w(i, jd) = g.inverse(i, z.values(i, jd));
  }
  Eigen::MatrixXd r = w;
  for (int j = 0; j < graph.k(); ++j) {
    for (int p = 0; p < graph.k(); ++p) {
      if (graph.mask(p, j)) r.row(j) -= graph.weights(p, j) * w.row(p);
    }
  }
  return r;
}

LatentBlocks inverse_transform(const LatentBlocks& z, const CausalGraph& graph,
                               const ElementwiseTransform& g) {
  return exogenous(scm_residual(z, graph, g));
}

std::string graph_to_json(const CausalGraph& graph,
                          const std::vector<std::string>& concept_names) {
  nlohmann::json j;
  j["k"] = graph.k();
  j["concept_names"] = concept_names;
  std::vector<std::vector<int>> mask(graph.k(), std::vector<int>(graph.k()));
  std::vector<std::vector<double>> weights(graph.k(), std::vector<double>(graph.k()));
  for (int i = 0; i < graph.k(); ++i) {
    for (int c = 0; c < graph.k(); ++c) {
      mask[i][c] = graph.mask(i, c);
      weights[i][c] = graph.weights(i, c);
    }
  }
  j["mask"] = mask;
  j["weights"] = weights;
  j["topological_order"] = check_acyclic(graph.mask);
  return j.dump(2);
}

}  // namespace cadvae
