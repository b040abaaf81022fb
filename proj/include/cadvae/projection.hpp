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

#ifndef CADVAE_PROJECTION_HPP_
#define CADVAE_PROJECTION_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "cadvae/data.hpp"
#include "cadvae/model.hpp"
#include "cadvae/schema.hpp"

namespace cadvae {

// Deterministic 2-D PCA (centered, top-2 eigenvectors with fixed sign
// convention, so repeated runs are byte-identical).
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& points);

struct TsneOptions {
  double perplexity = 30;
  int iterations = 500;
  double learning_rate = 200;
  int exaggeration_iters = 100;
  double exaggeration = 12;
  uint64_t seed = 1;
};

// Exact (O(n^2)) t-SNE to 2-D with PCA initialization plus seeded jitter.
Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& points, const TsneOptions& opts = {});

enum class ProjectionMethod { tsne, pca };

struct ProjectionResult {
  int rows_written = 0;
  double silhouette = 0;  // concept-cluster separation in the projection
};

// Per-user posterior-mean concept blocks, pooled across concepts into one
// shared 2-D plane; writes TSV rows (x, y, concept, user) with a header.
ProjectionResult export_projection(const ModelParams& params, const InteractionDataset& ds,
                                   const ConceptSchema& schema, const std::string& out_path,
                                   ProjectionMethod method, uint64_t seed = 1);

}  // namespace cadvae

#endif  // CADVAE_PROJECTION_HPP_
