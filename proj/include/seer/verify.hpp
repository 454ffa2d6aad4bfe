#pragma once

#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seer/data.hpp"
#include "seer/perturb.hpp"
#include "seer/predictor.hpp"

namespace seer {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string message;
};

struct VerifyOptions {
  // names a gradient rule to corrupt on purpose; used by the test harness to
  // prove that failures are detected and reported, empty in normal runs
  std::string fault_op;
};

namespace detail {

inline std::vector<double> verify_fd(Tensor& param,
                                     const std::function<double()>& f,
                                     double h = 1e-5) {
  std::vector<double> g(param.numel());
  auto& vals = param.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double up = f();
    vals[i] = orig - h;
    const double down = f();
    vals[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double verify_rel(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline Tensor verify_rand(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Compares analytic and finite-difference gradients of a scalar graph in one
// parameter. The fault offset simulates a broken backward rule.
inline CheckResult grad_check(const std::string& name, Tensor& param,
                              const std::function<Tensor()>& graph,
                              double tol, const VerifyOptions& opts) {
  CheckResult r;
  r.name = name;
  auto fd = verify_fd(param, [&] { return graph().item(); }, 1e-5);
  param.zero_grad();
  backward(graph());
  std::vector<double> an = param.grad();
  if (opts.fault_op == name)
    for (auto& g : an) g += 0.01;
  double worst = 0.0;
  for (std::size_t i = 0; i < an.size(); ++i)
    worst = std::max(worst, verify_rel(an[i], fd[i]));
  r.pass = worst < tol;
  std::ostringstream os;
  os << "max relative error " << worst << " (tolerance " << tol << ")";
  r.message = os.str();
  return r;
}

}  // namespace detail

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  auto simple = [&](const std::string& name, bool pass,
                    const std::string& msg) {
    out.push_back(CheckResult{name, pass, msg});
  };

  {  // core op gradients against finite differences
    Rng rng(101);
    Tensor A = detail::verify_rand({4, 5}, rng, true);
    Tensor B = detail::verify_rand({5, 3}, rng, true);
    out.push_back(detail::grad_check(
        "grad.matmul", A, [&] { return sum_all(matmul(A, B)); }, 1e-6, opts));
    Tensor S = detail::verify_rand({3, 4}, rng, true);
    Tensor W = detail::verify_rand({4, 1}, rng);
    out.push_back(detail::grad_check(
        "grad.softmax", S,
        [&] { return sum_all(matmul(softmax(S, 1), W)); }, 1e-5, opts));
    Tensor X = detail::verify_rand({2, 6}, rng, true);
    out.push_back(detail::grad_check(
        "grad.elementwise", X,
        [&] {
          return mean_all(mul(gelu(X), add(sigmoid(X), abs_t(X))));
        },
        1e-5, opts));
  }

  {  // attention block gradients
    Rng rng(103);
    AttentionBlock block(4, 2, rng);
    Tensor x = detail::verify_rand({1, 3, 4}, rng);
    out.push_back(detail::grad_check(
        "grad.attention", block.q.weight, [&] { return sum_all(block(x, true)); },
        1e-4, opts));
  }

  {  // end-to-end model gradients, filter disabled
    ModelConfig c = ModelConfig::with_hidden(8);
    c.lookback = 16;
    c.horizon = 4;
    c.patch_len = 4;
    c.moe.routed_experts = 4;
    c.moe.top_k = 2;
    c.attn.heads = 2;
    c.tau = 0.0;
    c.seed = 9;
    SeerModel m(c);
    Rng rng(105);
    Tensor x = detail::verify_rand({2, 16}, rng);
    Tensor y = detail::verify_rand({2, 4}, rng);
    Tensor p;
    for (auto& [n, t] : m.named_params())
      if (n == "embed.routed0.weight") p = t;
    out.push_back(detail::grad_check(
        "grad.full_model", p,
        [&] { return l1_loss(m.forward(x, false, nullptr), y); }, 1e-4, opts));
  }

  {  // gating invariants
    Rng rng(107);
    MoEConfig cfg;
    cfg.hidden_dim = 6;
    cfg.routed_experts = 4;
    cfg.top_k = 2;
    AugmentedEmbedding emb(3, 16, 2, cfg, rng);
    Tensor x = detail::verify_rand({5, 3}, rng);
    GateDecision gd = emb.noisy_gate(x, false, nullptr);
    bool ok = true;
    std::string msg = "k nonzero weights summing to 1, deterministic";
    for (std::int64_t t = 0; t < 5 && ok; ++t) {
      double sum = 0.0;
      std::int64_t nz = 0;
      for (std::int64_t e = 0; e < 4; ++e) {
        const double w = gd.weights.at({t, e});
        if (w != 0.0) {
          ++nz;
          sum += w;
        }
      }
      if (nz != 2 || std::fabs(sum - 1.0) > 1e-9) {
        ok = false;
        msg = "token " + std::to_string(t) + " violates the gate contract";
      }
    }
    GateDecision gd2 = emb.noisy_gate(x, false, nullptr);
    for (std::int64_t i = 0; i < gd.weights.numel(); ++i)
      if (gd.weights.values()[i] != gd2.weights.values()[i]) {
        ok = false;
        msg = "inference gating is not deterministic";
      }
    simple("gate.invariants", ok, msg);
  }

  {  // straight-through symbolic rule
    Tensor score(Shape{1, 1}, {0.5}, true);
    Tensor identity = mul(score, div(1.0, detach(score)));
    score.zero_grad();
    backward(sum_all(mul(identity, 2.0)));
    const bool ok = identity.values()[0] == 1.0 &&
                    std::fabs(score.grad()[0] - 4.0) < 1e-12;
    simple("mask.straight_through", ok,
           "upstream 2.0 at score 0.5 must deliver 4.0");
  }

  {  // replacement semantics
    Rng rng(109);
    Tensor xp = detail::verify_rand({2, 3, 4}, rng);
    Tensor proto = detail::verify_rand({2, 4}, rng);
    Tensor ones = Tensor::full({2, 3}, 1.0);
    Tensor zeros = Tensor::zeros({2, 3});
    Tensor kept = ReplacementModule::replace_tokens(xp, proto, ones);
    Tensor swapped = ReplacementModule::replace_tokens(xp, proto, zeros);
    bool ok = true;
    for (std::int64_t i = 0; i < xp.numel(); ++i)
      if (kept.values()[i] != xp.values()[i]) ok = false;
    for (std::int64_t c = 0; c < 2 && ok; ++c)
      for (std::int64_t j = 0; j < 3; ++j)
        for (std::int64_t f = 0; f < 4; ++f)
          if (swapped.at({c, j, f}) != proto.at({c, f})) ok = false;
    simple("mask.replacement", ok,
           "all-ones mask passes tokens through, all-zeros substitutes");
  }

  {  // causal attention zeros above the diagonal
    Rng rng(111);
    AttentionConfig acfg;
    acfg.heads = 2;
    ReplacementModule repl(4, 3, acfg, rng);
    Tensor xf = detail::verify_rand({2, 3, 4}, rng);
    Tensor proto = detail::verify_rand({2, 4}, rng);
    Tensor attn;
    repl.causal_attend(xf, proto, &attn);
    bool ok = true;
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t i = 0; i < 4; ++i)
          for (std::int64_t j = i + 1; j < 4; ++j)
            if (attn.at({b, h, i, j}) != 0.0) ok = false;
    simple("attention.causality", ok, "weights above the diagonal must be 0");
  }

  {  // perturbation count oracles
    TimeSeriesFrame x;
    x.channels = 1;
    x.length = 100;
    x.channel_names = {"c0"};
    x.values.resize(100);
    for (std::int64_t t = 0; t < 100; ++t) x.values[t] = std::sin(0.3 * t);
    PerturbationSpec spec;
    spec.kind = PerturbKind::WhiteNoise;
    spec.noise_ratio = 0.1;
    spec.seed = 5;
    TimeSeriesFrame y = apply_perturbation(x, spec);
    std::int64_t changed = 0;
    for (std::int64_t i = 0; i < 100; ++i)
      if (y.values[i] != x.values[i]) ++changed;
    simple("perturb.counts", changed == 10,
           "white noise at 10% of T=100 must touch 10 points, touched " +
               std::to_string(changed));
  }

  {  // perturbation moment oracle
    const std::int64_t T = 100000;
    TimeSeriesFrame x;
    x.channels = 1;
    x.length = T;
    x.channel_names = {"c0"};
    x.values.resize(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) x.values[t] = std::sin(0.01 * t);
    PerturbationSpec spec;
    spec.kind = PerturbKind::WhiteNoise;
    spec.noise_ratio = 1.0;
    spec.noise_scale = 1.0;
    spec.seed = 11;
    TimeSeriesFrame y = apply_perturbation(x, spec);
    const double sd = detail::channel_std(x, 0);
    double mean = 0.0, var = 0.0;
    for (std::int64_t i = 0; i < T; ++i) mean += y.values[i] - x.values[i];
    mean /= T;
    for (std::int64_t i = 0; i < T; ++i) {
      const double d = y.values[i] - x.values[i] - mean;
      var += d * d;
    }
    var /= T;
    const bool ok =
        std::fabs(mean) < 0.02 && std::fabs(std::sqrt(var) - sd) < 0.02;
    simple("perturb.moments", ok, "injected noise moments at T=1e5");
  }

  {  // K=1 distribution shift preserves pairwise differences
    TimeSeriesFrame x;
    x.channels = 1;
    x.length = 50;
    x.channel_names = {"c0"};
    x.values.resize(50);
    for (std::int64_t t = 0; t < 50; ++t) x.values[t] = std::cos(0.2 * t);
    PerturbationSpec spec;
    spec.kind = PerturbKind::DistributionShift;
    spec.shift_segments = 1;
    spec.seed = 13;
    TimeSeriesFrame y = apply_perturbation(x, spec);
    bool ok = true;
    for (std::int64_t t = 1; t < 50; ++t) {
      const double dx = x.values[t] - x.values[t - 1];
      const double dy = y.values[t] - y.values[t - 1];
      if (std::fabs(dx - dy) > 1e-12) ok = false;
    }
    simple("perturb.shift_pairwise", ok,
           "single-block shift must preserve within-channel differences");
  }

  {  // metric fixtures
    MetricsResult mr = metrics({1, 2, 3, 4}, {3, 4, 1, 2}, {0, 2, 4});
    const bool ok = std::fabs(mr.mse - 4.0) < 1e-12 &&
                    std::fabs(mr.mae - 2.0) < 1e-12;
    simple("metrics.fixtures", ok, "hand mse/mae fixture");
  }

  {  // normalization round trip
    Rng rng(115);
    Tensor x = detail::verify_rand({3, 20}, rng);
    auto [xn, stats] = instance_normalize(x);
    Tensor back = denormalize(xn, stats);
    double worst = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i)
      worst = std::max(worst,
                       std::fabs(back.values()[i] - x.values()[i]));
    simple("norm.roundtrip", worst < 1e-10,
           "denormalize(instance_normalize(x)) must recover x");
  }

  return out;
}

}  // namespace seer
