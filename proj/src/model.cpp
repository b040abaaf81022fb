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

#include "cadvae/model.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"

#include "cadvae/array_store.hpp"
#include "cadvae/rng.hpp"
#include "cadvae/util.hpp"

namespace cadvae {

int ModelDims::hist_dim() const {
  return std::accumulate(category_counts.begin(), category_counts.end(), 0);
}

int ModelDims::input_dim() const { return n_items + hist_dim() + k; }

ElementwiseTransform ModelParams::transform() const {
  ElementwiseTransform g;
  g.mode = g_mode;
  g.a = g_a;
  g.b = g_b;
  g.s = g_mode == TransformMode::monotone ? g_s : Eigen::VectorXd::Zero(g_a.size());
  return g;
}

void ModelParams::enforce_constraints() {
  adj_raw = masked_weights(adj_raw, mask);
  if (g_mode == TransformMode::monotone) {
    for (int i = 0; i < g_a.size(); ++i) {
      double lo = std::abs(g_s(i)) + ElementwiseTransform::kMargin;
      if (g_a(i) <= lo) g_a(i) = lo + 1e-6;
    }
  }
}

void ModelParams::visit(const std::function<void(const std::string&, double*, long)>& fn) {
  auto mat = [&](const std::string& name, Eigen::MatrixXd& m) { fn(name, m.data(), m.size()); };
  auto vec = [&](const std::string& name, Eigen::VectorXd& v) { fn(name, v.data(), v.size()); };
  mat("enc_w0", enc_w0);
  vec("enc_b0", enc_b0);
  for (int i = 0; i < dims.k; ++i) {
    mat("enc_head_w" + std::to_string(i), enc_head_w[static_cast<size_t>(i)]);
    vec("enc_head_b" + std::to_string(i), enc_head_b[static_cast<size_t>(i)]);
  }
  mat("adj_raw", adj_raw);
  vec("g_a", g_a);
  vec("g_b", g_b);
  vec("g_s", g_s);
  for (int i = 0; i < dims.k; ++i) {
    mat("prior_w0_" + std::to_string(i), prior_w0[static_cast<size_t>(i)]);
    vec("prior_b0_" + std::to_string(i), prior_b0[static_cast<size_t>(i)]);
    mat("prior_w1_" + std::to_string(i), prior_w1[static_cast<size_t>(i)]);
    vec("prior_b1_" + std::to_string(i), prior_b1[static_cast<size_t>(i)]);
  }
  mat("dec_w0", dec_w0);
  vec("dec_b0", dec_b0);
  mat("dec_w1", dec_w1);
  vec("dec_b1", dec_b1);
}

void ModelParams::visit_const(
    const std::function<void(const std::string&, const double*, long)>& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&](const std::string& name, double* data, long size) { fn(name, data, size); });
}

long ModelParams::parameter_count() const {
  long total = 0;
  visit_const([&](const std::string&, const double*, long size) { total += size; });
  return total;
}

ModelParams init_model(const ModelDims& dims, const Eigen::MatrixXi& mask, TransformMode g_mode,
                       Rng& rng) {
  if (static_cast<int>(dims.category_counts.size()) != dims.k) {
    throw ShapeError("category_counts size must equal k");
  }
  check_acyclic(mask);

  ModelParams p;
  p.dims = dims;
  p.g_mode = g_mode;
  p.mask = mask;

  auto init_mat = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
    }
    return m;
  };

  p.enc_w0 = init_mat(dims.hidden, dims.input_dim());
  p.enc_b0 = Eigen::VectorXd::Zero(dims.hidden);
  for (int i = 0; i < dims.k; ++i) {
    p.enc_head_w.push_back(init_mat(2 * dims.d, dims.hidden));
    p.enc_head_b.push_back(Eigen::VectorXd::Zero(2 * dims.d));
  }
  p.adj_raw = Eigen::MatrixXd::Zero(dims.k, dims.k);
  p.g_a = Eigen::VectorXd::Ones(dims.k);
  p.g_b = Eigen::VectorXd::Zero(dims.k);
  p.g_s = g_mode == TransformMode::monotone
              ? Eigen::VectorXd::Constant(dims.k, 0.1)
              : Eigen::VectorXd::Zero(dims.k);
  for (int i = 0; i < dims.k; ++i) {
    int m_i = dims.category_counts[static_cast<size_t>(i)];
    p.prior_w0.push_back(init_mat(dims.prior_hidden, m_i + 1));
    p.prior_b0.push_back(Eigen::VectorXd::Zero(dims.prior_hidden));
    p.prior_w1.push_back(init_mat(2 * dims.d, dims.prior_hidden));
    p.prior_b1.push_back(Eigen::VectorXd::Zero(2 * dims.d));
  }
  p.dec_w0 = init_mat(dims.hidden, dims.k * dims.d);
  p.dec_b0 = Eigen::VectorXd::Zero(dims.hidden);
  p.dec_w1 = init_mat(dims.n_items, dims.hidden);
  p.dec_b1 = Eigen::VectorXd::Zero(dims.n_items);
  return p;
}

Eigen::VectorXd build_model_input(const ModelDims& dims, std::span<const int> items,
                                  const UserConceptFeature& feat) {
  if (items.empty()) throw ValidationError("encoder input has no interactions");
  Eigen::VectorXd in = Eigen::VectorXd::Zero(dims.input_dim());
  for (int item : items) {
    if (item < 0 || item >= dims.n_items) throw ShapeError("item id out of range");
    in(item) = 1.0;
  }
  double norm = in.head(dims.n_items).norm();
  in.head(dims.n_items) /= norm;

  int offset = dims.n_items;
  for (int i = 0; i < dims.k; ++i) {
    int m_i = dims.category_counts[static_cast<size_t>(i)];
    if (feat.histograms[static_cast<size_t>(i)].size() != m_i) {
      throw ShapeError("histogram size does not match schema");
    }
    if (dims.conditioned) in.segment(offset, m_i) = feat.histograms[static_cast<size_t>(i)];
    offset += m_i;
  }
  if (dims.conditioned) in.segment(offset, dims.k) = feat.c;
  return in;
}

void forward_user(const ModelParams& p, std::span<const int> input_items,
                  const UserConceptFeature& feat, const Eigen::MatrixXd& noise, ForwardCache& fc) {
  const ModelDims& dims = p.dims;
  fc.input = build_model_input(dims, input_items, feat);
  fc.h0 = (p.enc_w0 * fc.input + p.enc_b0).array().tanh();

  fc.head_raw.resize(dims.k, 2 * dims.d);
  fc.mu.resize(dims.k, dims.d);
  fc.log_sigma.resize(dims.k, dims.d);
  for (int i = 0; i < dims.k; ++i) {
    Eigen::VectorXd head = p.enc_head_w[static_cast<size_t>(i)] * fc.h0 +
                           p.enc_head_b[static_cast<size_t>(i)];
    fc.head_raw.row(i) = head.transpose();
    fc.mu.row(i) = head.head(dims.d).transpose();
    fc.log_sigma.row(i) = head.tail(dims.d)
                              .cwiseMax(kLogSigmaMin)
                              .cwiseMin(kLogSigmaMax)
                              .transpose();
  }
  fc.sigma = fc.log_sigma.array().exp();
  fc.noise = noise;
  fc.eps = fc.mu + fc.sigma.cwiseProduct(noise);

  CausalGraph graph = p.graph();
  ElementwiseTransform g = p.transform();
  fc.m = solve_structural(fc.eps, graph);
  fc.z.resize(dims.k, dims.d);
  fc.gp.resize(dims.k, dims.d);
  for (int i = 0; i < dims.k; ++i) {
    for (int jd = 0; jd < dims.d; ++jd) {
      fc.z(i, jd) = g.eval(i, fc.m(i, jd));
      fc.gp(i, jd) = g.deriv(i, fc.m(i, jd));
    }
  }

  Eigen::VectorXd zflat(dims.k * dims.d);
  for (int i = 0; i < dims.k; ++i) zflat.segment(i * dims.d, dims.d) = fc.z.row(i).transpose();
  fc.h1 = (p.dec_w0 * zflat + p.dec_b0).array().tanh();
  fc.logits = p.dec_w1 * fc.h1 + p.dec_b1;

  fc.prior_in.assign(static_cast<size_t>(dims.k), {});
  fc.prior_h.assign(static_cast<size_t>(dims.k), {});
  fc.lam1.resize(dims.k, dims.d);
  fc.lam2.resize(dims.k, dims.d);
  fc.lam2_raw.resize(dims.k, dims.d);
  if (!dims.conditioned) {
    fc.lam1.setZero();
    fc.lam2.setOnes();
    fc.lam2_raw.setZero();
    return;
  }
  for (int i = 0; i < dims.k; ++i) {
    int m_i = dims.category_counts[static_cast<size_t>(i)];
    Eigen::VectorXd u(m_i + 1);
    u.head(m_i) = feat.histograms[static_cast<size_t>(i)];
    u(m_i) = feat.c(i);
    fc.prior_in[static_cast<size_t>(i)] = u;
    Eigen::VectorXd hp = (p.prior_w0[static_cast<size_t>(i)] * u +
                          p.prior_b0[static_cast<size_t>(i)]).array().tanh();
    fc.prior_h[static_cast<size_t>(i)] = hp;
    Eigen::VectorXd o = p.prior_w1[static_cast<size_t>(i)] * hp +
                        p.prior_b1[static_cast<size_t>(i)];
    fc.lam1.row(i) = o.head(dims.d).transpose();
    fc.lam2_raw.row(i) = o.tail(dims.d).transpose();
    for (int jd = 0; jd < dims.d; ++jd) {
      double raw = fc.lam2_raw(i, jd);
      // softplus with the usual overflow guard
      double sp = raw > 30 ? raw : std::log1p(std::exp(raw));
      fc.lam2(i, jd) = sp + kLambda2Floor;
    }
  }
}

EncoderOutput encode(const ModelParams& p, std::span<const int> items,
                     const UserConceptFeature& feat) {
  ForwardCache fc;
  forward_user(p, items, feat, Eigen::MatrixXd::Zero(p.dims.k, p.dims.d), fc);
  return EncoderOutput{fc.mu, fc.log_sigma};
}

LatentBlocks reparameterize(const EncoderOutput& enc, const Eigen::MatrixXd& noise) {
  if (noise.rows() != enc.mu.rows() || noise.cols() != enc.mu.cols()) {
    throw ShapeError("noise shape does not match encoder output");
  }
  Eigen::MatrixXd sigma = enc.log_sigma.array().exp();
  return exogenous(enc.mu + sigma.cwiseProduct(noise));
}

PriorParams prior_params(const ModelParams& p, const UserConceptFeature& feat) {
  const ModelDims& dims = p.dims;
  PriorParams out;
  out.lambda1.resize(dims.k, dims.d);
  out.lambda2.resize(dims.k, dims.d);
  if (!dims.conditioned) {
    out.lambda1.setZero();
    out.lambda2.setOnes();
    return out;
  }
  for (int i = 0; i < dims.k; ++i) {
    int m_i = dims.category_counts[static_cast<size_t>(i)];
    Eigen::VectorXd u(m_i + 1);
    u.head(m_i) = feat.histograms[static_cast<size_t>(i)];
    u(m_i) = feat.c(i);
    Eigen::VectorXd hp = (p.prior_w0[static_cast<size_t>(i)] * u +
                          p.prior_b0[static_cast<size_t>(i)]).array().tanh();
    Eigen::VectorXd o = p.prior_w1[static_cast<size_t>(i)] * hp +
                        p.prior_b1[static_cast<size_t>(i)];
    out.lambda1.row(i) = o.head(dims.d).transpose();
    for (int jd = 0; jd < dims.d; ++jd) {
      double raw = o(dims.d + jd);
      double sp = raw > 30 ? raw : std::log1p(std::exp(raw));
      out.lambda2(i, jd) = sp + kLambda2Floor;
    }
  }
  return out;
}

Eigen::VectorXd decode(const ModelParams& p, const LatentBlocks& z) {
  if (!z.values.allFinite()) throw ValidationError("non-finite latent input to decoder");
  const ModelDims& dims = p.dims;
  Eigen::VectorXd zflat(dims.k * dims.d);
  for (int i = 0; i < dims.k; ++i) zflat.segment(i * dims.d, dims.d) = z.values.row(i).transpose();
  Eigen::VectorXd h1 = (p.dec_w0 * zflat + p.dec_b0).array().tanh();
  return p.dec_w1 * h1 + p.dec_b1;
}

Eigen::VectorXd score_items(const ModelParams& p, std::span<const int> items,
                            const UserConceptFeature& feat) {
  ForwardCache fc;
  forward_user(p, items, feat, Eigen::MatrixXd::Zero(p.dims.k, p.dims.d), fc);
  return fc.logits;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ArrayMap arrays;
  ckpt.params.visit_const([&](const std::string& name, const double* data, long size) {
    Eigen::MatrixXd flat(size, 1);
    std::copy(data, data + size, flat.data());
    arrays.emplace(name, std::move(flat));
  });
  arrays.emplace("mask", ckpt.params.mask.cast<double>());
  save_arrays(path, arrays);

  nlohmann::json meta = nlohmann::json::parse(ckpt.meta_json.empty() ? "{}" : ckpt.meta_json);
  meta["dims"] = {{"n_items", ckpt.params.dims.n_items},
                  {"k", ckpt.params.dims.k},
                  {"d", ckpt.params.dims.d},
                  {"hidden", ckpt.params.dims.hidden},
                  {"prior_hidden", ckpt.params.dims.prior_hidden},
                  {"category_counts", ckpt.params.dims.category_counts},
                  {"conditioned", ckpt.params.dims.conditioned}};
  meta["g_mode"] = ckpt.params.g_mode == TransformMode::monotone ? "monotone" : "linear_bypass";
  write_text_file(path + ".json", meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  ArrayMap arrays = load_arrays(path);
  nlohmann::json meta = nlohmann::json::parse(read_text_file(path + ".json"));

  ModelDims dims;
  dims.n_items = meta.at("dims").at("n_items").get<int>();
  dims.k = meta.at("dims").at("k").get<int>();
  dims.d = meta.at("dims").at("d").get<int>();
  dims.hidden = meta.at("dims").at("hidden").get<int>();
  dims.prior_hidden = meta.at("dims").at("prior_hidden").get<int>();
  dims.category_counts = meta.at("dims").at("category_counts").get<std::vector<int>>();
  dims.conditioned = meta.at("dims").value("conditioned", true);
  TransformMode g_mode = meta.at("g_mode").get<std::string>() == "monotone"
                             ? TransformMode::monotone
                             : TransformMode::linear_bypass;

  auto mask_it = arrays.find("mask");
  if (mask_it == arrays.end()) throw IoError("checkpoint missing mask array");
  Eigen::MatrixXi mask = mask_it->second.cast<int>();

  Rng dummy(0);
  ModelParams params = init_model(dims, mask, g_mode, dummy);
  params.visit([&](const std::string& name, double* data, long size) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IoError("checkpoint missing array: " + name);
    if (it->second.size() != size) {
      throw ShapeError("checkpoint array size mismatch for " + name);
    }
    std::copy(it->second.data(), it->second.data() + size, data);
  });

  Checkpoint ckpt;
  ckpt.params = std::move(params);
  ckpt.meta_json = meta.dump(2);
  return ckpt;
}

}  // namespace cadvae
