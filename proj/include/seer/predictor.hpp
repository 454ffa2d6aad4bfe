#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <new>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seer/adam.hpp"
#include "seer/data.hpp"
#include "seer/embedding.hpp"
#include "seer/nn.hpp"
#include "seer/preprocess.hpp"
#include "seer/replacement.hpp"
#include "seer/rng.hpp"
#include "seer/tensor.hpp"

namespace seer {

struct ModelConfig {
  std::int64_t lookback = 96;   // T
  std::int64_t horizon = 96;    // F
  std::int64_t patch_len = 16;  // p
  std::int64_t hidden_dim = 64; // d
  std::int64_t reduced_dim = 32;    // d~, scaling ratio 0.5 by default
  std::int64_t prototype_dim = 32;  // d'
  MoEConfig moe;
  AttentionConfig attn;
  double tau = 0.5;
  std::uint64_t seed = 0;

  std::int64_t num_patches() const {
    return (lookback + patch_len - 1) / patch_len;
  }

  void validate() const {
    if (horizon < 1) throw TensorError("horizon must be >= 1");
    if (lookback < 2) throw TensorError("lookback must be >= 2");
    if (patch_len < 1) throw TensorError("patch length must be >= 1");
    if (reduced_dim > hidden_dim || reduced_dim < 1)
      throw TensorError("reduced dim must satisfy 1 <= d~ <= d");
    if (tau < 0.0 || tau >= 1.0) throw TensorError("tau must lie in [0,1)");
    moe.validate();
    attn.validate(hidden_dim);
  }

  static ModelConfig with_hidden(std::int64_t d) {
    ModelConfig c;
    c.hidden_dim = d;
    c.reduced_dim = std::max<std::int64_t>(1, d / 2);
    c.prototype_dim = std::max<std::int64_t>(1, d / 2);
    c.moe.hidden_dim = d;
    return c;
  }
};

class SeerModel {
 public:
  explicit SeerModel(ModelConfig cfg) : cfg_(cfg) {
    cfg.validate();
    Rng rng(Rng::mix(cfg.seed ^ 0x5EE2ull));
    const std::int64_t n = cfg.num_patches();
    embed_ = AugmentedEmbedding(cfg.patch_len, cfg.lookback, cfg.prototype_dim,
                                cfg.moe, rng);
    repl_ = ReplacementModule(cfg.hidden_dim, n, cfg.attn, rng);
    reduce_ = Linear(cfg.hidden_dim, cfg.reduced_dim, rng);
    head_ = Linear((n + 1) * cfg.reduced_dim, cfg.horizon, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  AugmentedEmbedding& embedding() { return embed_; }
  ReplacementModule& replacement() { return repl_; }

  // Shared affine map d -> d~ applied per token.
  Tensor reduce_features(const Tensor& xo) const {
    const std::int64_t N = xo.shape()[0], L = xo.shape()[1];
    return reshape(reduce_(reshape(xo, {N * L, cfg_.hidden_dim})),
                   {N, L, cfg_.reduced_dim});
  }

  // Per channel, flatten (n+1)*d~ features into F outputs.
  Tensor flatten_head(const Tensor& xo_reduced) const {
    const std::int64_t N = xo_reduced.shape()[0];
    const std::int64_t feat = xo_reduced.shape()[1] * xo_reduced.shape()[2];
    return head_(reshape(xo_reduced, {N, feat}));
  }

  // Full pipeline, X: N x T raw values -> N x F forecast in data units.
  Tensor forward(const Tensor& X, bool training, Rng* rng,
                 FilterMask* mask_out = nullptr) const {
    auto [xn, stats] = instance_normalize(X);
    PatchConfig pc;
    pc.patch_len = cfg_.patch_len;
    Tensor patches = make_patches(xn, pc);
    Tensor xp = embed_.augmented_patch_embed(patches, training, rng);
    Tensor xe = embed_.channel_embed(xn);
    Tensor o = embed_.stochastic_pool(xe, training, rng);
    Tensor prototypes = embed_.build_prototypes(xe, o);
    FilterMask fm = repl_.score_tokens(xp, cfg_.tau);
    if (mask_out != nullptr) *mask_out = fm;
    // tau = 0 keeps every token, so the filter is a true no-op: skip the
    // straight-through mask so no estimator gradient reaches the score path
    Tensor xf = xp;
    if (cfg_.tau > 0.0) {
      Tensor mask = ReplacementModule::build_mask(fm);
      xf = ReplacementModule::replace_tokens(xp, prototypes, mask);
    }
    Tensor xout = repl_.causal_attend(xf, prototypes);
    Tensor xo = repl_.refine_msa(xout);
    Tensor yn = flatten_head(reduce_features(xo));
    return denormalize(yn, stats);
  }

  NamedParams named_params() const {
    NamedParams out;
    embed_.collect("embed", out);
    repl_.collect("repl", out);
    reduce_.collect("reduce", out);
    head_.collect("head", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

 private:
  ModelConfig cfg_;
  AugmentedEmbedding embed_;
  ReplacementModule repl_;
  Linear reduce_;
  Linear head_;
};

// Mean absolute deviation over all entries; subgradient at 0 is 0.
inline Tensor l1_loss(const Tensor& yhat, const Tensor& y) {
  if (yhat.shape() != y.shape())
    throw TensorError("l1_loss shape mismatch: " + shape_str(yhat.shape()) +
                      " vs " + shape_str(y.shape()));
  return mean_all(abs_t(sub(yhat, y)));
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text container, config plus named parameter tensors.
// "%.17g" round-trips doubles exactly, so save/load is byte-stable.
// ---------------------------------------------------------------------------

inline void write_model_config(std::ostream& os, const ModelConfig& c) {
  os << "lookback " << c.lookback << "\nhorizon " << c.horizon << "\npatch_len "
     << c.patch_len << "\nhidden_dim " << c.hidden_dim << "\nreduced_dim "
     << c.reduced_dim << "\nprototype_dim " << c.prototype_dim
     << "\nrouted_experts " << c.moe.routed_experts << "\ntop_k "
     << c.moe.top_k << "\nshared_experts " << c.moe.shared_experts
     << "\nheads " << c.attn.heads << "\npositional " << (c.attn.positional ? 1 : 0);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", c.tau);
  os << "\ntau " << buf << "\nseed " << c.seed << "\n";
}

inline ModelConfig read_model_config(std::istream& is) {
  ModelConfig c;
  std::string key;
  for (int i = 0; i < 13; ++i) {
    is >> key;
    if (key == "lookback") is >> c.lookback;
    else if (key == "horizon") is >> c.horizon;
    else if (key == "patch_len") is >> c.patch_len;
    else if (key == "hidden_dim") { is >> c.hidden_dim; c.moe.hidden_dim = c.hidden_dim; }
    else if (key == "reduced_dim") is >> c.reduced_dim;
    else if (key == "prototype_dim") is >> c.prototype_dim;
    else if (key == "routed_experts") is >> c.moe.routed_experts;
    else if (key == "top_k") is >> c.moe.top_k;
    else if (key == "shared_experts") is >> c.moe.shared_experts;
    else if (key == "heads") is >> c.attn.heads;
    else if (key == "positional") { int p; is >> p; c.attn.positional = p != 0; }
    else if (key == "tau") is >> c.tau;
    else if (key == "seed") is >> c.seed;
    else throw TensorError("unknown checkpoint config key '" + key + "'");
  }
  return c;
}

inline void save_checkpoint(const SeerModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TensorError("cannot write checkpoint " + path);
  out << "SEER-CKPT v1\n";
  write_model_config(out, model.config());
  auto params = model.named_params();
  out << "params " << params.size() << "\n";
  char buf[64];
  for (const auto& [name, t] : params) {
    out << name << " " << t.ndim();
    for (auto d : t.shape()) out << " " << d;
    out << "\n";
    for (std::size_t i = 0; i < t.values().size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.values()[i]);
      out << buf << (i + 1 == t.values().size() ? "" : " ");
    }
    out << "\n";
  }
}

inline SeerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TensorError("cannot open checkpoint " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "SEER-CKPT" || version != "v1")
    throw TensorError(path + " is not a v1 checkpoint");
  ModelConfig cfg = read_model_config(in);
  SeerModel model(cfg);
  std::string key;
  std::size_t count = 0;
  in >> key >> count;
  if (key != "params") throw TensorError("malformed checkpoint " + path);
  auto params = model.named_params();
  if (count != params.size())
    throw TensorError("checkpoint has " + std::to_string(count) +
                      " parameters, model expects " + std::to_string(params.size()));
  for (auto& [name, t] : params) {
    std::string pname;
    std::size_t nd;
    in >> pname >> nd;
    if (pname != name)
      throw TensorError("checkpoint parameter '" + pname + "' does not match '" +
                        name + "'");
    Shape shape(nd);
    for (auto& d : shape) in >> d;
    if (shape != t.shape())
      throw TensorError("shape mismatch for parameter " + name);
    for (auto& v : t.mutable_values()) in >> v;
  }
  if (!in) throw TensorError("truncated checkpoint " + path);
  return model;
}

// ---------------------------------------------------------------------------
// Training loop: Adam on L1 over seeded shuffled batches, early stopping on
// validation loss, batch halving (down to 8) on allocation failure.
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 64;
  double lr = 1e-3;
  std::int64_t patience = 5;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  std::int64_t best_epoch = -1;
  std::int64_t final_batch_size = 0;
};

inline double evaluate_l1(const SeerModel& model, const TimeSeriesFrame& part,
                          std::int64_t stride = 1) {
  const auto& cfg = model.config();
  auto ws = windows(part, cfg.lookback, cfg.horizon, stride);
  double total = 0.0;
  for (const auto& w : ws) {
    Tensor x = part.window(w.origin, cfg.lookback);
    Tensor y = part.window(w.origin + cfg.lookback, cfg.horizon);
    total += l1_loss(model.forward(x, false, nullptr), y).item();
  }
  return total / static_cast<double>(ws.size());
}

inline TrainResult train(SeerModel& model, const TimeSeriesFrame& train_part,
                         const TimeSeriesFrame& val_part,
                         const TrainOptions& opt) {
  const auto& cfg = model.config();
  auto train_windows = windows(train_part, cfg.lookback, cfg.horizon);
  auto params = model.params();
  AdamState st;
  st.lr = opt.lr;
  st.init(params);
  Rng rng(Rng::mix(opt.seed ^ 0x7124ull));
  TrainResult result;
  result.final_batch_size = opt.batch_size;
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t since_best = 0;
  std::int64_t batch_size = opt.batch_size;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    // seeded shuffle
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(static_cast<std::int64_t>(i))]);
    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < order.size();) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      try {
        zero_grads(params);
        Tensor batch_loss = Tensor::scalar(0.0);
        for (std::size_t bi = start; bi < end; ++bi) {
          const auto& w = train_windows[order[bi]];
          Tensor x = train_part.window(w.origin, cfg.lookback);
          Tensor y = train_part.window(w.origin + cfg.lookback, cfg.horizon);
          batch_loss = add(batch_loss, l1_loss(model.forward(x, true, &rng), y));
        }
        batch_loss = div(batch_loss, static_cast<double>(end - start));
        if (!batch_loss.all_finite())
          throw TensorError("non-finite training loss at epoch " +
                            std::to_string(epoch));
        if (opt.lr != 0.0) {
          backward(batch_loss);
          adam_step(params, st);
        }
        epoch_loss += batch_loss.item();
        ++batches;
        start = end;
      } catch (const std::bad_alloc&) {
        if (batch_size <= 8) throw;
        batch_size = std::max<std::int64_t>(8, batch_size / 2);
        result.final_batch_size = batch_size;
      }
    }
    result.train_loss.push_back(epoch_loss / std::max<std::int64_t>(1, batches));
    const double val = evaluate_l1(model, val_part);
    result.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  return result;
}

}  // namespace seer
