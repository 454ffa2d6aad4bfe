#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "seer/nn.hpp"
#include "seer/tensor.hpp"

namespace seer {

struct AttentionConfig {
  std::int64_t heads = 4;
  bool positional = true;  // learnable positional embeddings before the causal block

  void validate(std::int64_t hidden_dim) const {
    if (heads < 1 || hidden_dim % heads != 0)
      throw TensorError("head count " + std::to_string(heads) +
                        " must divide hidden dim " + std::to_string(hidden_dim));
  }
};

// Per-token quality verdict. `identity` is numerically all ones but carries
// the g -> g / detach(score) gradient coupling onto the score path.
struct FilterMask {
  Tensor scores;      // N x n, clamped to [1e-6, 1-1e-6]
  Tensor indicator;   // N x n constant 0/1, score > tau
  Tensor identity;    // N x n, value 1, gradient-bearing
  double tau = 0.5;

  std::int64_t kept_count(std::int64_t channel) const {
    const std::int64_t n = indicator.shape()[1];
    std::int64_t k = 0;
    for (std::int64_t j = 0; j < n; ++j)
      if (indicator.at({channel, j}) == 1.0) ++k;
    return k;
  }
};

inline constexpr double kScoreClampLo = 1e-6;
inline constexpr double kScoreClampHi = 1.0 - 1e-6;

// One pre-norm residual attention block (no feed-forward sublayer).
struct AttentionBlock {
  LayerNorm norm;
  Linear q, k, v, o;
  std::int64_t heads = 1;

  AttentionBlock() = default;
  AttentionBlock(std::int64_t dim, std::int64_t n_heads, Rng& rng)
      : norm(dim),
        q(dim, dim, rng),
        k(dim, dim, rng),
        v(dim, dim, rng),
        o(dim, dim, rng),
        heads(n_heads) {}

  // x: N x L x d. If attn_out is non-null it receives the N x h x L x L
  // post-softmax attention weights.
  Tensor operator()(const Tensor& x, bool causal,
                    Tensor* attn_out = nullptr) const {
    const std::int64_t N = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    const std::int64_t dh = d / heads;
    Tensor h = norm(x);
    auto split_heads = [&](const Tensor& t) {
      return transpose(reshape(t, {N, L, heads, dh}), 1, 2);  // N x h x L x dh
    };
    Tensor Q = split_heads(q(h));
    Tensor K = split_heads(k(h));
    Tensor V = split_heads(v(h));
    Tensor scores =
        div(matmul(Q, transpose(K, -1, -2)), std::sqrt(static_cast<double>(dh)));
    if (causal) {
      const double ninf = -std::numeric_limits<double>::infinity();
      std::vector<double> m(static_cast<std::size_t>(L * L), 0.0);
      for (std::int64_t i = 0; i < L; ++i)
        for (std::int64_t j = i + 1; j < L; ++j) m[i * L + j] = ninf;
      scores = add(scores, Tensor(Shape{L, L}, std::move(m)));
    }
    Tensor attn = softmax(scores, -1);
    if (attn_out != nullptr) *attn_out = attn;
    Tensor ctx = reshape(transpose(matmul(attn, V), 1, 2), {N, L, d});
    return add(x, o(ctx));  // residual
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    norm.collect(prefix + ".norm", out);
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
  }
};

// Learnable Patch Replacement Module: scoring/filtering, prototype
// substitution, causal attention with the prepended global token, and the
// refinement self-attention.
class ReplacementModule {
 public:
  ReplacementModule() = default;
  ReplacementModule(std::int64_t hidden_dim, std::int64_t num_patches,
                    const AttentionConfig& cfg, Rng& rng)
      : cfg_(cfg),
        score_(hidden_dim, 1, rng),
        causal_block_(hidden_dim, cfg.heads, rng),
        refine_block_(hidden_dim, cfg.heads, rng) {
    cfg.validate(hidden_dim);
    // one dedicated row for the global token plus one per patch position
    const double bound = 0.02;
    std::vector<double> pe(static_cast<std::size_t>((num_patches + 1) * hidden_dim));
    for (auto& v : pe) v = rng.uniform(-bound, bound);
    pos_embed_ = Tensor(Shape{num_patches + 1, hidden_dim}, std::move(pe), true);
  }

  FilterMask score_tokens(const Tensor& xp, double tau) const {
    if (tau < 0.0 || tau >= 1.0) throw TensorError("tau must lie in [0,1)");
    const std::int64_t N = xp.shape()[0], n = xp.shape()[1];
    Tensor raw = reshape(sigmoid(score_(xp)), {N, n});
    FilterMask fm;
    fm.tau = tau;
    fm.scores = clamp(raw, kScoreClampLo, kScoreClampHi);
    std::vector<double> ind(static_cast<std::size_t>(N * n));
    const auto& sv = fm.scores.values();
    for (std::size_t i = 0; i < sv.size(); ++i) ind[i] = sv[i] > tau ? 1.0 : 0.0;
    fm.indicator = Tensor(Shape{N, n}, std::move(ind));
    // hard connection: scores * (1 / detach(scores)) == 1 in value
    fm.identity = mul(fm.scores, div(1.0, detach(fm.scores)));
    return fm;
  }

  static Tensor build_mask(const FilterMask& fm) {
    return mul(fm.indicator, fm.identity);
  }

  // out[i,j] = xp[i,j] * mask[i,j] + prototypes[i] * (1 - mask[i,j]).
  static Tensor replace_tokens(const Tensor& xp, const Tensor& prototypes,
                               const Tensor& mask) {
    const std::int64_t N = xp.shape()[0], n = xp.shape()[1], d = xp.shape()[2];
    Tensor m3 = reshape(mask, {N, n, 1});
    Tensor o3 = reshape(prototypes, {N, 1, d});
    return add(mul(xp, m3), mul(o3, sub(Tensor::scalar(1.0), m3)));
  }

  // Prepends the prototype as a global token, adds positional embeddings (if
  // enabled), and applies causal attention; position j sees positions <= j.
  Tensor causal_attend(const Tensor& xf, const Tensor& prototypes,
                       Tensor* attn_out = nullptr) const {
    const std::int64_t N = xf.shape()[0], d = xf.shape()[2];
    Tensor seq = concat({reshape(prototypes, {N, 1, d}), xf}, 1);
    if (cfg_.positional) seq = add(seq, pos_embed_);
    return causal_block_(seq, /*causal=*/true, attn_out);
  }

  Tensor refine_msa(const Tensor& xout, Tensor* attn_out = nullptr) const {
    return refine_block_(xout, /*causal=*/false, attn_out);
  }

  const AttentionConfig& config() const { return cfg_; }

  void collect(const std::string& prefix, NamedParams& out) const {
    score_.collect(prefix + ".score", out);
    causal_block_.collect(prefix + ".causal", out);
    refine_block_.collect(prefix + ".refine", out);
    out.emplace_back(prefix + ".pos_embed", pos_embed_);
  }

 private:
  AttentionConfig cfg_;
  Linear score_;
  AttentionBlock causal_block_;
  AttentionBlock refine_block_;
  Tensor pos_embed_;
};

}  // namespace seer
