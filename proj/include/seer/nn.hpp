#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "seer/rng.hpp"
#include "seer/tensor.hpp"

namespace seer {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Affine map on the trailing dimension. Weight is in_dim x out_dim so inputs
// compose as matmul(x, W) + b.
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::int64_t in_dim, std::int64_t out_dim, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::vector<double> w(static_cast<std::size_t>(in_dim * out_dim));
    for (auto& v : w) v = rng.uniform(-bound, bound);
    std::vector<double> b(static_cast<std::size_t>(out_dim));
    for (auto& v : b) v = rng.uniform(-bound, bound);
    weight = Tensor(Shape{in_dim, out_dim}, std::move(w), true);
    bias = Tensor(Shape{out_dim}, std::move(b), true);
  }

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Single-hidden-layer perceptron with GELU, hidden width = output width.
struct Mlp {
  Linear in;
  Linear out;

  Mlp() = default;
  Mlp(std::int64_t in_dim, std::int64_t out_dim, Rng& rng)
      : in(in_dim, out_dim, rng), out(out_dim, out_dim, rng) {}

  Tensor operator()(const Tensor& x) const { return out(gelu(in(x))); }

  void collect(const std::string& prefix, NamedParams& o) const {
    in.collect(prefix + ".in", o);
    out.collect(prefix + ".out", o);
  }
};

// Layer normalization over the trailing dimension with learnable gain/bias.
struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-6;

  LayerNorm() = default;
  explicit LayerNorm(std::int64_t dim) {
    gain = Tensor::full({dim}, 1.0, true);
    bias = Tensor::zeros({dim}, true);
  }

  Tensor operator()(const Tensor& x) const {
    Tensor mu = reduce_mean(x, -1, true);
    Tensor var = variance(x, -1, true);
    Tensor xhat = div(sub(x, mu), sqrt_t(add(var, eps)));
    return add(mul(xhat, gain), bias);
  }

  void collect(const std::string& prefix, NamedParams& o) const {
    o.emplace_back(prefix + ".gain", gain);
    o.emplace_back(prefix + ".bias", bias);
  }
};

}  // namespace seer
