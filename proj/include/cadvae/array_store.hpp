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

#ifndef CADVAE_ARRAY_STORE_HPP_
#define CADVAE_ARRAY_STORE_HPP_

#include <Eigen/Dense>
#include <map>
#include <string>

namespace cadvae {

// Single-file container of named double matrices. Raw little-endian doubles,
// so save -> load roundtrips are bit-exact (checkpoint reload contract).
using ArrayMap = std::map<std::string, Eigen::MatrixXd>;

void save_arrays(const std::string& path, const ArrayMap& arrays);
ArrayMap load_arrays(const std::string& path);

}  // namespace cadvae

#endif  // CADVAE_ARRAY_STORE_HPP_
