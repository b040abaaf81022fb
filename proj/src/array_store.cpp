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

#include "cadvae/array_store.hpp"

#include <cstdint>
#include <fstream>

#include "cadvae/util.hpp"

namespace cadvae {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'V', 'A', 'R', 'R', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated array file");
  return v;
}

}  // namespace

void save_arrays(const std::string& path, const ArrayMap& arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write array file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(out, arrays.size());
  for (const auto& [name, mat] : arrays) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(mat.rows()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(mat.cols()));
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(mat.size())));
  }
  if (!out) throw IoError("write failed: " + path);
}

ArrayMap load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open array file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw IoError("not a cadvae array file: " + path);
  }
  uint64_t count = read_pod<uint64_t>(in);
  ArrayMap arrays;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t nlen = read_pod<uint32_t>(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    uint64_t rows = read_pod<uint64_t>(in);
    uint64_t cols = read_pod<uint64_t>(in);
    Eigen::MatrixXd mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw IoError("truncated array data in " + path);
    arrays.emplace(std::move(name), std::move(mat));
  }
  return arrays;
}

}  // namespace cadvae
