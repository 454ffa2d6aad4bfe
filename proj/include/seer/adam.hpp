#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seer/tensor.hpp"

namespace seer {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;  // first moment, per parameter
  std::vector<std::vector<double>> v;  // second moment, per parameter

  void init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.numel(), 0.0);
      v.emplace_back(p.numel(), 0.0);
    }
    step = 0;
  }
};

// Standard Adam update with bias correction. Reads each parameter's
// accumulated gradient; the caller is responsible for zeroing afterwards.
inline void adam_step(std::vector<Tensor>& params, AdamState& st) {
  if (st.m.size() != params.size()) st.init(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (st.m[i].size() != static_cast<std::size_t>(params[i].numel()))
      throw TensorError("adam state shape mismatch for parameter " +
                        std::to_string(i));
    for (double g : params[i].grad())
      if (!std::isfinite(g))
        throw TensorError("non-finite gradient in parameter " +
                          std::to_string(i) + "; aborting Adam step");
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& vals = params[i].mutable_values();
    const auto& grads = params[i].grad();
    if (grads.empty()) continue;  // parameter never touched by the graph
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = grads[j];
      st.m[i][j] = st.beta1 * st.m[i][j] + (1.0 - st.beta1) * g;
      st.v[i][j] = st.beta2 * st.v[i][j] + (1.0 - st.beta2) * g * g;
      const double mhat = st.m[i][j] / bc1;
      const double vhat = st.v[i][j] / bc2;
      vals[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace seer
