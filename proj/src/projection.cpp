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

#include "cadvae/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cadvae/metrics.hpp"
#include "cadvae/rng.hpp"
#include "cadvae/trainer.hpp"
#include "cadvae/util.hpp"

namespace cadvae {

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& points) {
  if (points.rows() < 3) throw ValidationError("pca_2d needs at least 3 points");
  Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca eigendecomposition failed");

  int d = static_cast<int>(points.cols());
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  axes.col(0) = solver.eigenvectors().col(d - 1);  // eigenvalues ascending
  if (d >= 2) axes.col(1) = solver.eigenvectors().col(d - 2);
  // Sign convention: largest-magnitude component positive.
  for (int c = 0; c < 2; ++c) {
    int arg = 0;
    for (int r = 1; r < d; ++r) {
      if (std::abs(axes(r, c)) > std::abs(axes(arg, c))) arg = r;
    }
    if (axes(arg, c) < 0) axes.col(c) = -axes.col(c);
  }
  return centered * axes;
}

namespace {

// Conditional affinities with a per-point bandwidth found by bisecting to the
// requested perplexity.
Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& points, double perplexity) {
  int n = static_cast<int>(points.rows());
  Eigen::MatrixXd d2(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) d2(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  }
  double target_entropy = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double lo = 1e-20, hi = 1e20, beta = 1.0;
    Eigen::VectorXd row(n);
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0;
      for (int j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row(j);
      }
      double entropy = 0;
      for (int j = 0; j < n; ++j) {
        if (row(j) > 0) {
          double pj = row(j) / sum;
          entropy -= pj * std::log(pj);
        }
      }
      if (std::abs(entropy - target_entropy) < 1e-5) break;
      if (entropy > target_entropy) {
        lo = beta;
        beta = hi >= 1e20 ? beta * 2 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = lo <= 1e-20 ? beta / 2 : 0.5 * (beta + lo);
      }
      row.setZero();
    }
    double sum = 0;
    for (int j = 0; j < n; ++j) {
      row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
      sum += row(j);
    }
    if (sum <= 0) throw Error("t-SNE affinity underflow");
    p.row(i) = row.transpose() / sum;
  }
  Eigen::MatrixXd sym = (p + p.transpose()) / (2.0 * n);
  return sym.cwiseMax(1e-12);
}

}  // namespace

Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& points, const TsneOptions& opts) {
  int n = static_cast<int>(points.rows());
  if (n < 8) throw ValidationError("t-SNE needs at least 8 points");
  double perplexity = std::min(opts.perplexity, (n - 1) / 3.0);

  Eigen::MatrixXd p = tsne_affinities(points, perplexity);

  // PCA init with a small seeded jitter to break exact ties.
  Eigen::MatrixXd y = pca_2d(points);
  double scale = std::sqrt((y.array().square().sum()) / n);
  if (scale > 0) y *= 1e-2 / scale;
  Rng rng(opts.seed);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) y(i, c) += 1e-5 * rng.normal();
  }

  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
  for (int iter = 0; iter < opts.iterations; ++iter) {
    double exaggeration = iter < opts.exaggeration_iters ? opts.exaggeration : 1.0;
    // q_ij (student-t numerators)
    Eigen::MatrixXd num(n, n);
    double denom = 0;
    for (int i = 0; i < n; ++i) {
      num(i, i) = 0;
      for (int j = i + 1; j < n; ++j) {
        double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = v;
        num(j, i) = v;
        denom += 2 * v;
      }
    }
    denom = std::max(denom, 1e-12);

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double q = std::max(num(i, j) / denom, 1e-12);
        double coeff = 4.0 * (exaggeration * p(i, j) - q) * num(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    }
    double momentum = iter < 250 ? 0.5 : 0.8;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        bool same_sign = (grad(i, c) > 0) == (update(i, c) > 0);
        gains(i, c) = std::max(0.01, same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
        update(i, c) = momentum * update(i, c) - opts.learning_rate * gains(i, c) * grad(i, c);
        y(i, c) += update(i, c);
      }
    }
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

ProjectionResult export_projection(const ModelParams& params, const InteractionDataset& ds,
                                   const ConceptSchema& schema, const std::string& out_path,
                                   ProjectionMethod method, uint64_t seed) {
  const int k = params.dims.k;
  const int d = params.dims.d;
  Eigen::MatrixXd latents = user_mean_latents(params, ds, schema);  // n x (k*d)

  // Pool all (user, concept) block vectors into one cloud so the concepts
  // share a plane and cluster separation is measurable.
  int n_points = ds.n_users * k;
  Eigen::MatrixXd pooled(n_points, d);
  std::vector<int> labels(static_cast<size_t>(n_points));
  for (int u = 0; u < ds.n_users; ++u) {
    for (int i = 0; i < k; ++i) {
      pooled.row(u * k + i) = latents.row(u).segment(i * d, d);
      labels[static_cast<size_t>(u * k + i)] = i;
    }
  }

  Eigen::MatrixXd coords;
  if (method == ProjectionMethod::pca) {
    coords = pca_2d(pooled);
  } else {
    TsneOptions opts;
    opts.seed = seed;
    coords = tsne_2d(pooled, opts);
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write projection file: " + out_path);
  out << "x\ty\tconcept\tuser\n";
  out.precision(10);
  for (int u = 0; u < ds.n_users; ++u) {
    for (int i = 0; i < k; ++i) {
      int r = u * k + i;
      out << coords(r, 0) << '\t' << coords(r, 1) << '\t' << schema.concept_names[static_cast<size_t>(i)]
          << '\t' << u << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + out_path);

  ProjectionResult res;
  res.rows_written = n_points;
  res.silhouette = silhouette_score(coords, labels);
  return res;
}

}  // namespace cadvae
