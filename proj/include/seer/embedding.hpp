#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "seer/nn.hpp"
#include "seer/rng.hpp"
#include "seer/tensor.hpp"

namespace seer {

struct MoEConfig {
  std::int64_t hidden_dim = 64;      // d
  std::int64_t routed_experts = 8;   // M
  std::int64_t top_k = 2;            // k
  std::int64_t shared_experts = 1;

  void validate() const {
    if (hidden_dim < 1) throw TensorError("MoE hidden dim must be >= 1");
    if (top_k < 1 || top_k > routed_experts)
      throw TensorError("MoE requires 1 <= k <= M (k=" + std::to_string(top_k) +
                        ", M=" + std::to_string(routed_experts) + ")");
    if (shared_experts < 0) throw TensorError("shared expert count must be >= 0");
  }
};

// Per-token routing result: selected expert indices, the dense routing-weight
// matrix (zeros off the top-k), and the raw pre-top-k gate logits.
struct GateDecision {
  std::vector<std::vector<std::int64_t>> indices;  // tokens x k, ascending
  Tensor weights;  // tokens x M, softmax over survivors, exact 0 elsewhere
  Tensor logits;   // tokens x M, pre-top-k gate outputs
};

// Augmented Embedding Module: MoE patch embedding plus the series-wise
// prototype pipeline (channel embedding, stochastic pooling, prototype MLP).
class AugmentedEmbedding {
 public:
  AugmentedEmbedding() = default;
  AugmentedEmbedding(std::int64_t patch_len, std::int64_t lookback,
                     std::int64_t dprime, const MoEConfig& cfg, Rng& rng)
      : cfg_(cfg), patch_len_(patch_len), dprime_(dprime) {
    cfg.validate();
    if (dprime < 1) throw TensorError("prototype dim d' must be >= 1");
    for (std::int64_t i = 0; i < cfg.routed_experts; ++i)
      routed_.emplace_back(patch_len, cfg.hidden_dim, rng);
    for (std::int64_t i = 0; i < cfg.shared_experts; ++i)
      shared_.emplace_back(patch_len, cfg.hidden_dim, rng);
    gate_mu_ = Linear(patch_len, cfg.routed_experts, rng);
    gate_sigma_ = Linear(patch_len, cfg.routed_experts, rng);
    channel_ = Linear(lookback, cfg.hidden_dim, rng);
    pool_mlp_ = Mlp(cfg.hidden_dim, dprime, rng);
    proto_mlp_ = Mlp(cfg.hidden_dim + dprime, cfg.hidden_dim, rng);
  }

  const MoEConfig& config() const { return cfg_; }
  std::int64_t prototype_dim() const { return dprime_; }

  // One routed expert's affine projection, (N*n) x p -> (N*n) x d.
  Tensor expert_project(const Tensor& xp_flat, std::int64_t expert) const {
    if (expert < 0 || expert >= cfg_.routed_experts)
      throw TensorError("expert index " + std::to_string(expert) +
                        " out of range");
    return routed_[expert](xp_flat);
  }

  // Noisy gating: H = Linear_mu(x) + eps * Linear_sigma(x) during training,
  // noise-free at inference. KeepTopK drops non-top-k logits to -inf (ties
  // broken by lower expert index); G = softmax over survivors.
  GateDecision noisy_gate(const Tensor& xp_flat, bool training,
                          Rng* rng) const {
    const std::int64_t tokens = xp_flat.shape()[0];
    const std::int64_t M = cfg_.routed_experts;
    Tensor h = gate_mu_(xp_flat);
    if (training) {
      if (rng == nullptr)
        throw TensorError("training-mode gating needs an RNG for the noise");
      std::vector<double> eps(static_cast<std::size_t>(tokens * M));
      for (auto& e : eps) e = rng->normal();
      h = add(h, mul(Tensor(Shape{tokens, M}, std::move(eps)), gate_sigma_(xp_flat)));
    }
    GateDecision gd;
    gd.logits = h;
    gd.indices.resize(static_cast<std::size_t>(tokens));
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> mask(static_cast<std::size_t>(tokens * M), ninf);
    const auto& hv = h.values();
    for (std::int64_t t = 0; t < tokens; ++t) {
      std::vector<std::int64_t> order(static_cast<std::size_t>(M));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::int64_t a, std::int64_t b) {
                         return hv[t * M + a] > hv[t * M + b];
                       });
      auto& sel = gd.indices[t];
      sel.assign(order.begin(), order.begin() + cfg_.top_k);
      std::sort(sel.begin(), sel.end());
      for (auto i : sel) mask[t * M + i] = 0.0;
    }
    gd.weights = softmax(add(h, Tensor(Shape{tokens, M}, std::move(mask))), 1);
    return gd;
  }

  // Sum of shared experts plus gate-weighted selected routed experts.
  // patches: N x n x p, result N x n x d.
  Tensor augmented_patch_embed(const Tensor& patches, bool training,
                               Rng* rng) const {
    const std::int64_t N = patches.shape()[0];
    const std::int64_t n = patches.shape()[1];
    Tensor flat = reshape(patches, {N * n, patch_len_});
    GateDecision gate = noisy_gate(flat, training, rng);
    Tensor out = Tensor::zeros({N * n, cfg_.hidden_dim});
    for (const auto& e : shared_) out = add(out, e(flat));
    for (std::int64_t i = 0; i < cfg_.routed_experts; ++i) {
      // dense form: non-selected tokens carry an exact-zero weight, so the
      // corresponding experts see no gradient from them
      Tensor w = slice(gate.weights, 1, i, 1);
      out = add(out, mul(w, routed_[i](flat)));
    }
    return reshape(out, {N, n, cfg_.hidden_dim});
  }

  // Shared affine map T -> d applied per channel.
  Tensor channel_embed(const Tensor& X) const { return channel_(X); }

  // MLP1 then stochastic pooling over channels. Training samples one channel
  // per feature position from the per-position softmax; inference returns the
  // probability-weighted expectation. Result shape {d'}.
  Tensor stochastic_pool(const Tensor& xe, bool training, Rng* rng) const {
    const std::int64_t N = xe.shape()[0];
    Tensor a = pool_mlp_(xe);  // N x d'
    Tensor probs = softmax(a, 0);
    if (!training) return reduce_sum(mul(probs, a), 0);
    if (rng == nullptr)
      throw TensorError("training-mode pooling needs an RNG for the draws");
    const auto& pv = probs.values();
    std::vector<double> onehot(static_cast<std::size_t>(N * dprime_), 0.0);
    for (std::int64_t j = 0; j < dprime_; ++j) {
      double u = rng->uniform(0.0, 1.0);
      std::int64_t pick = N - 1;
      double acc = 0.0;
      for (std::int64_t i = 0; i < N; ++i) {
        acc += pv[i * dprime_ + j];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
      onehot[pick * dprime_ + j] = 1.0;
    }
    return reduce_sum(mul(Tensor(Shape{N, dprime_}, std::move(onehot)), a), 0);
  }

  // Per channel, concatenate the channel embedding with the pooled vector and
  // map through the prototype MLP. Result N x d.
  Tensor build_prototypes(const Tensor& xe, const Tensor& o) const {
    const std::int64_t N = xe.shape()[0];
    Tensor o_rows = reshape(o, {1, dprime_});
    std::vector<Tensor> rows(static_cast<std::size_t>(N), o_rows);
    Tensor repeated = concat(rows, 0);  // N x d'
    Tensor f = concat({xe, repeated}, 1);
    return proto_mlp_(f);
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    for (std::size_t i = 0; i < routed_.size(); ++i)
      routed_[i].collect(prefix + ".routed" + std::to_string(i), out);
    for (std::size_t i = 0; i < shared_.size(); ++i)
      shared_[i].collect(prefix + ".shared" + std::to_string(i), out);
    gate_mu_.collect(prefix + ".gate_mu", out);
    gate_sigma_.collect(prefix + ".gate_sigma", out);
    channel_.collect(prefix + ".channel", out);
    pool_mlp_.collect(prefix + ".pool_mlp", out);
    proto_mlp_.collect(prefix + ".proto_mlp", out);
  }

 private:
  MoEConfig cfg_;
  std::int64_t patch_len_ = 0;
  std::int64_t dprime_ = 0;
  std::vector<Linear> routed_;
  std::vector<Linear> shared_;
  Linear gate_mu_;
  Linear gate_sigma_;
  Linear channel_;
  Mlp pool_mlp_;
  Mlp proto_mlp_;
};

}  // namespace seer
