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

#ifndef CADVAE_SCHEMA_HPP_
#define CADVAE_SCHEMA_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cadvae {

// k high-level concepts with per-item categorical labels and the prior DAG
// over the concepts. Category id 0 is always the reserved UNKNOWN bucket that
// absorbs items with no label in a concept.
struct ConceptSchema {
  int k = 0;
  std::vector<std::string> concept_names;
  std::vector<int> category_counts;                  // m_i, including UNKNOWN
  std::vector<std::vector<std::string>> category_names;
  std::vector<std::vector<std::vector<int>>> item_labels;  // [concept][item] -> category ids
  Eigen::MatrixXi prior_dag;                         // I_A

  int n_items() const { return k > 0 ? static_cast<int>(item_labels[0].size()) : 0; }
  void validate() const;  // acyclic DAG, label coverage, id ranges
};

// Edge override as (parent name, child name) pairs; replaces the default
// director->genre, genre->actor structure when provided.
using DagOverride = std::vector<std::pair<std::string, std::string>>;

// Loads item metadata and builds the 4-concept movie schema in the fixed
// order (year, director, genre, actor). Two input formats are accepted:
//   - native TSV: item-id, year, director-id, genre list, actor list
//     (lists semicolon-separated, empty fields allowed)
//   - MovieLens-100k u.item ('|'-separated, year from the release date and 19
//     genre flags; director/actor fall back to UNKNOWN)
// item_ids maps dense dataset indices to original ids; items without metadata
// carry UNKNOWN in every concept.
ConceptSchema load_concept_schema(const std::string& path, const std::vector<int64_t>& item_ids,
                                  const std::optional<DagOverride>& dag_override = std::nullopt);

ConceptSchema read_schema(const std::string& dir);
void write_schema(const std::string& dir, const ConceptSchema& schema);

// Per-user concept summary: one normalized category histogram per concept and
// the scalar concentration c_i in [0, 1] used by the adjacency supervision.
struct UserConceptFeature {
  std::vector<Eigen::VectorXd> histograms;
  Eigen::VectorXd c;
};

// Histogram over the categories of the user's items (multi-label items split
// their unit mass uniformly across labels); c_i is the normalized Herfindahl
// concentration (sum h^2 - 1/m) / (1 - 1/m), clamped to [0, 1], and 0 when a
// concept has fewer than two categories or the histogram is empty.
UserConceptFeature build_user_concept_features(std::span<const int> items,
                                               const ConceptSchema& schema);

}  // namespace cadvae

#endif  // CADVAE_SCHEMA_HPP_
