#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "seer/tensor.hpp"

namespace seer {

inline constexpr double kNormEps = 1e-5;

// Per-channel standardization statistics of one lookback window, retained so
// predictions can be mapped back to data units.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // biased (1/n) estimate; may be 0 for constant channels
};

struct PatchConfig {
  std::int64_t patch_len = 16;
  enum class Padding { FrontReplicate, Strict };
  Padding padding = Padding::FrontReplicate;
};

// X: N x T. Returns (x - mean) / (std + eps) per channel plus the stats.
inline std::pair<Tensor, NormStats> instance_normalize(const Tensor& X) {
  if (X.ndim() != 2) throw TensorError("instance_normalize expects N x T input");
  const std::int64_t N = X.shape()[0], T = X.shape()[1];
  if (T < 2) throw TensorError("instance_normalize needs T >= 2");
  NormStats stats;
  stats.mean.resize(N);
  stats.stddev.resize(N);
  std::vector<double> out(static_cast<std::size_t>(N * T));
  const auto& xv = X.values();
  for (std::int64_t c = 0; c < N; ++c) {
    double mu = 0.0;
    for (std::int64_t t = 0; t < T; ++t) mu += xv[c * T + t];
    mu /= static_cast<double>(T);
    double var = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
      const double d = xv[c * T + t] - mu;
      var += d * d;
    }
    var /= static_cast<double>(T);
    const double sd = std::sqrt(var);
    stats.mean[c] = mu;
    stats.stddev[c] = sd;
    for (std::int64_t t = 0; t < T; ++t)
      out[c * T + t] = (xv[c * T + t] - mu) / (sd + kNormEps);
  }
  return {Tensor(Shape{N, T}, std::move(out)), stats};
}

// Differentiable inverse: y * (std + eps) + mean, per channel.
inline Tensor denormalize(const Tensor& Yn, const NormStats& stats) {
  if (Yn.ndim() != 2) throw TensorError("denormalize expects N x F input");
  const std::int64_t N = Yn.shape()[0];
  if (static_cast<std::size_t>(N) != stats.mean.size())
    throw TensorError("denormalize channel-count mismatch: tensor has " +
                      std::to_string(N) + " channels, stats have " +
                      std::to_string(stats.mean.size()));
  std::vector<double> scale(N), shift(N);
  for (std::int64_t c = 0; c < N; ++c) {
    scale[c] = stats.stddev[c] + kNormEps;
    shift[c] = stats.mean[c];
  }
  Tensor s(Shape{N, 1}, std::move(scale));
  Tensor m(Shape{N, 1}, std::move(shift));
  return add(mul(Yn, s), m);
}

// Non-overlapping segmentation N x T -> N x n x p with n = ceil(T/p). When p
// does not divide T, front-replicate mode left-pads with each channel's first
// value so the most recent points stay aligned; strict mode rejects instead.
inline Tensor make_patches(const Tensor& X, const PatchConfig& cfg) {
  if (X.ndim() != 2) throw TensorError("make_patches expects N x T input");
  const std::int64_t N = X.shape()[0], T = X.shape()[1];
  const std::int64_t p = cfg.patch_len;
  if (p < 1) throw TensorError("patch length must be >= 1");
  const std::int64_t n = (T + p - 1) / p;
  const std::int64_t pad = n * p - T;
  if (pad != 0 && cfg.padding == PatchConfig::Padding::Strict)
    throw TensorError("patch length " + std::to_string(p) +
                      " does not divide T=" + std::to_string(T) +
                      " in strict mode");
  std::vector<double> out(static_cast<std::size_t>(N * n * p));
  const auto& xv = X.values();
  for (std::int64_t c = 0; c < N; ++c)
    for (std::int64_t j = 0; j < n * p; ++j) {
      const std::int64_t t = j - pad;
      out[c * n * p + j] = t < 0 ? xv[c * T] : xv[c * T + t];
    }
  return Tensor(Shape{N, n, p}, std::move(out));
}

}  // namespace seer
