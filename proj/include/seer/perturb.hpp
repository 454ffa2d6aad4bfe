#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "seer/data.hpp"
#include "seer/rng.hpp"

namespace seer {

enum class PerturbKind { WhiteNoise, Anomalies, Missing, DistributionShift };

inline std::string perturb_kind_name(PerturbKind k) {
  switch (k) {
    case PerturbKind::WhiteNoise: return "white-noise";
    case PerturbKind::Anomalies: return "anomalies";
    case PerturbKind::Missing: return "missing";
    case PerturbKind::DistributionShift: return "distribution-shift";
  }
  return "?";
}

inline PerturbKind perturb_kind_from_name(const std::string& s) {
  if (s == "white-noise") return PerturbKind::WhiteNoise;
  if (s == "anomalies") return PerturbKind::Anomalies;
  if (s == "missing") return PerturbKind::Missing;
  if (s == "distribution-shift") return PerturbKind::DistributionShift;
  throw DataError("unknown perturbation kind '" + s + "'");
}

// One corruption recipe. Only the fields of the selected kind are read.
struct PerturbationSpec {
  PerturbKind kind = PerturbKind::WhiteNoise;
  double noise_ratio = 0.0;   // r_noise
  double noise_scale = 1.0;   // alpha_noise
  double cont_ratio = 0.0;    // r_cont
  std::int64_t cont_len = 12; // L_cont
  double outlier_ratio = 0.005;  // r_out
  double anom_scale = 2.0;    // alpha_anom
  double miss_ratio = 0.0;    // r_miss
  std::int64_t miss_len = 12; // L_miss
  std::int64_t shift_segments = 1;  // K_shift
  double shift_scale = 5.0;   // alpha_shift
  std::uint64_t seed = 0;

  void validate() const {
    auto ratio_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!ratio_ok(noise_ratio) || !ratio_ok(cont_ratio) ||
        !ratio_ok(outlier_ratio) || !ratio_ok(miss_ratio))
      throw DataError("perturbation ratios must lie in [0,1]");
    if (cont_len < 1 || miss_len < 1)
      throw DataError("segment lengths must be >= 1");
    if (kind == PerturbKind::DistributionShift && shift_segments < 1)
      throw DataError("distribution shift needs K >= 1 segments");
  }
};

namespace detail {

// Biased (1/T) standard deviation of one channel of the clean input.
inline double channel_std(const TimeSeriesFrame& f, std::int64_t c) {
  const std::int64_t T = f.length;
  double mu = 0.0;
  for (std::int64_t t = 0; t < T; ++t) mu += f.at(c, t);
  mu /= static_cast<double>(T);
  double var = 0.0;
  for (std::int64_t t = 0; t < T; ++t) {
    const double d = f.at(c, t) - mu;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(T));
}

// k distinct indices from [0, n) via partial Fisher-Yates.
inline std::vector<std::int64_t> sample_without_replacement(std::int64_t n,
                                                           std::int64_t k,
                                                           Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::int64_t i = 0; i < k; ++i) {
    const std::int64_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace detail

// Per channel: floor(T * r_noise) distinct points get N(0, (alpha * sigma_c)^2)
// noise added. Constant channels (sigma_c = 0) are untouched.
inline TimeSeriesFrame inject_white_noise(const TimeSeriesFrame& X,
                                          double r_noise, double alpha_noise,
                                          std::uint64_t seed) {
  TimeSeriesFrame out = X;
  const std::int64_t T = X.length;
  const std::int64_t n_noise =
      static_cast<std::int64_t>(std::floor(T * r_noise));
  Rng base(seed);
  for (std::int64_t c = 0; c < X.channels; ++c) {
    Rng rng = base.child(static_cast<std::uint64_t>(c));
    const double sigma = detail::channel_std(X, c);
    auto idx = detail::sample_without_replacement(T, n_noise, rng);
    for (auto i : idx) out.at(c, i) += rng.normal() * alpha_noise * sigma;
  }
  return out;
}

// floor(T*r_cont / L_cont) contiguous segments, each shifted by a single
// +-alpha*sigma_c offset, then floor(T*r_out) point outliers. Segment starts
// are drawn with replacement; overlaps are allowed.
inline TimeSeriesFrame inject_anomalies(const TimeSeriesFrame& X, double r_cont,
                                        std::int64_t L_cont, double r_out,
                                        double alpha_anom, std::uint64_t seed) {
  if (L_cont > X.length) throw DataError("anomaly segment longer than series");
  TimeSeriesFrame out = X;
  const std::int64_t T = X.length;
  const std::int64_t n_seg =
      static_cast<std::int64_t>(std::floor(T * r_cont / static_cast<double>(L_cont)));
  const std::int64_t n_out = static_cast<std::int64_t>(std::floor(T * r_out));
  Rng base(seed);
  for (std::int64_t c = 0; c < X.channels; ++c) {
    Rng rng = base.child(static_cast<std::uint64_t>(c));
    const double sigma = detail::channel_std(X, c);
    for (std::int64_t s = 0; s < n_seg; ++s) {
      const std::int64_t start = rng.uniform_int(T - L_cont + 1);
      const double delta =
          (rng.uniform_int(2) == 0 ? -1.0 : 1.0) * alpha_anom * sigma;
      for (std::int64_t t = start; t < start + L_cont; ++t) out.at(c, t) += delta;
    }
    auto idx = detail::sample_without_replacement(T, n_out, rng);
    for (auto i : idx) {
      const double delta =
          (rng.uniform_int(2) == 0 ? -1.0 : 1.0) * alpha_anom * sigma;
      out.at(c, i) += delta;
    }
  }
  return out;
}

// floor(T*r_miss / L_miss) segments of length L_miss set to exactly 0.
inline TimeSeriesFrame inject_missing(const TimeSeriesFrame& X, double r_miss,
                                      std::int64_t L_miss, std::uint64_t seed) {
  if (L_miss > X.length) throw DataError("missing segment longer than series");
  TimeSeriesFrame out = X;
  const std::int64_t T = X.length;
  const std::int64_t n_seg =
      static_cast<std::int64_t>(std::floor(T * r_miss / static_cast<double>(L_miss)));
  Rng base(seed);
  for (std::int64_t c = 0; c < X.channels; ++c) {
    Rng rng = base.child(static_cast<std::uint64_t>(c));
    for (std::int64_t s = 0; s < n_seg; ++s) {
      const std::int64_t start = rng.uniform_int(T - L_miss + 1);
      for (std::int64_t t = start; t < start + L_miss; ++t) out.at(c, t) = 0.0;
    }
  }
  return out;
}

// Partition [0, T) into K blocks of length floor(T/K); each block gets an
// independent Uniform(-alpha, alpha) * sigma_c offset. Positions beyond
// K * floor(T/K) stay untouched, mirroring the end = min((k+1)L, T) bound.
inline TimeSeriesFrame inject_distribution_shift(const TimeSeriesFrame& X,
                                                 std::int64_t K_shift,
                                                 double alpha_shift,
                                                 std::uint64_t seed) {
  if (K_shift < 1) throw DataError("distribution shift needs K >= 1");
  TimeSeriesFrame out = X;
  const std::int64_t T = X.length;
  const std::int64_t L_seg = T / K_shift;
  Rng base(seed);
  for (std::int64_t c = 0; c < X.channels; ++c) {
    Rng rng = base.child(static_cast<std::uint64_t>(c));
    const double sigma = detail::channel_std(X, c);
    for (std::int64_t k = 0; k < K_shift; ++k) {
      const std::int64_t start = k * L_seg;
      const std::int64_t end = std::min((k + 1) * L_seg, T);
      const double delta = rng.uniform(-alpha_shift, alpha_shift) * sigma;
      for (std::int64_t t = start; t < end; ++t) out.at(c, t) += delta;
    }
  }
  return out;
}

inline TimeSeriesFrame apply_perturbation(const TimeSeriesFrame& X,
                                          const PerturbationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PerturbKind::WhiteNoise:
      return inject_white_noise(X, spec.noise_ratio, spec.noise_scale, spec.seed);
    case PerturbKind::Anomalies:
      return inject_anomalies(X, spec.cont_ratio, spec.cont_len,
                              spec.outlier_ratio, spec.anom_scale, spec.seed);
    case PerturbKind::Missing:
      return inject_missing(X, spec.miss_ratio, spec.miss_len, spec.seed);
    case PerturbKind::DistributionShift:
      return inject_distribution_shift(X, spec.shift_segments, spec.shift_scale,
                                       spec.seed);
  }
  throw DataError("unreachable");
}

// The sweep grids used throughout the robustness experiments.
inline std::vector<double> default_grid(PerturbKind k) {
  if (k == PerturbKind::DistributionShift) return {1, 3, 5, 10};
  return {0.0, 0.01, 0.05, 0.10, 0.15};
}

// One corrupted copy per grid level; seeds derived from (seed, level index).
inline std::vector<std::pair<double, TimeSeriesFrame>> sweep(
    const TimeSeriesFrame& X, PerturbKind kind, const std::vector<double>& grid,
    const PerturbationSpec& fixed, std::uint64_t seed) {
  if (grid.empty()) throw DataError("sweep grid is empty");
  std::vector<std::pair<double, TimeSeriesFrame>> out;
  for (std::size_t li = 0; li < grid.size(); ++li) {
    PerturbationSpec spec = fixed;
    spec.kind = kind;
    spec.seed = Rng::mix(seed + 0x51F7ull * (li + 1));
    switch (kind) {
      case PerturbKind::WhiteNoise: spec.noise_ratio = grid[li]; break;
      case PerturbKind::Anomalies: spec.cont_ratio = grid[li]; break;
      case PerturbKind::Missing: spec.miss_ratio = grid[li]; break;
      case PerturbKind::DistributionShift:
        spec.shift_segments = static_cast<std::int64_t>(grid[li]);
        break;
    }
    out.emplace_back(grid[li], apply_perturbation(X, spec));
  }
  return out;
}

}  // namespace seer
