#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seer/replacement.hpp"
#include "testutil.hpp"

using namespace seer;
using testutil::finite_diff;
using testutil::max_rel_error;
using testutil::random_tensor;

namespace {

ReplacementModule make_repl(std::int64_t d, std::int64_t n,
                            AttentionConfig cfg, std::uint64_t seed) {
  Rng rng(seed);
  return ReplacementModule(d, n, cfg, rng);
}

}  // namespace

TEST_CASE("straight-through identity: value one, gradient g over score") {
  Tensor score(Shape{1, 1}, {0.5}, true);
  Tensor identity = mul(score, div(1.0, detach(score)));
  CHECK(identity.values()[0] == 1.0);
  score.zero_grad();
  backward(sum_all(mul(identity, 2.0)));
  // upstream gradient 2.0 at score 0.5 arrives as 2.0 / 0.5 = 4.0
  CHECK(score.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("score_tokens: clamped scores, indicator thresholding, identity ones") {
  AttentionConfig cfg;
  cfg.heads = 2;
  auto repl = make_repl(4, 3, cfg, 7);
  Rng rng(3);
  Tensor xp = random_tensor({2, 3, 4}, rng, false, 5.0);
  FilterMask fm = repl.score_tokens(xp, 0.5);
  CHECK(fm.scores.shape() == Shape{2, 3});
  for (std::int64_t i = 0; i < fm.scores.numel(); ++i) {
    const double s = fm.scores.values()[i];
    CHECK(s >= kScoreClampLo);
    CHECK(s <= kScoreClampHi);
    CHECK(fm.indicator.values()[i] == (s > 0.5 ? 1.0 : 0.0));
    // s * (1/s) is 1 up to one ulp of rounding
    CHECK(fm.identity.values()[i] == doctest::Approx(1.0).epsilon(1e-15));
  }
  std::int64_t kept = fm.kept_count(0) + fm.kept_count(1);
  std::int64_t ones = 0;
  for (double v : fm.indicator.values()) ones += v == 1.0;
  CHECK(kept == ones);
  CHECK_THROWS_AS(repl.score_tokens(xp, 1.0), TensorError);
  CHECK_THROWS_AS(repl.score_tokens(xp, -0.1), TensorError);

  // tau = 0 keeps everything because scores are clamped above zero
  FilterMask all = repl.score_tokens(xp, 0.0);
  for (double v : all.indicator.values()) CHECK(v == 1.0);
}

TEST_CASE("mask gradient reaches scores only for kept tokens") {
  FilterMask fm;
  fm.scores = Tensor(Shape{1, 3}, {0.8, 0.25, 0.5}, true);
  fm.indicator = Tensor(Shape{1, 3}, {1.0, 0.0, 1.0});
  fm.identity = mul(fm.scores, div(1.0, detach(fm.scores)));
  Tensor mask = ReplacementModule::build_mask(fm);
  CHECK(mask.values()[0] == 1.0);
  CHECK(mask.values()[1] == 0.0);
  CHECK(mask.values()[2] == 1.0);
  fm.scores.zero_grad();
  backward(sum_all(mul(mask, Tensor(Shape{1, 3}, {3.0, 3.0, 3.0}))));
  CHECK(fm.scores.grad()[0] == doctest::Approx(3.0 / 0.8).epsilon(1e-12));
  CHECK(fm.scores.grad()[1] == 0.0);
  CHECK(fm.scores.grad()[2] == doctest::Approx(3.0 / 0.5).epsilon(1e-12));
}

TEST_CASE("replace_tokens enumeration") {
  Tensor xp(Shape{2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor proto(Shape{2, 3}, {-1, -2, -3, -4, -5, -6});
  Tensor mask(Shape{2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor xf = ReplacementModule::replace_tokens(xp, proto, mask);
  CHECK(xf.shape() == Shape{2, 2, 3});
  // kept tokens pass through, dropped tokens become the channel prototype
  for (std::int64_t j = 0; j < 3; ++j) {
    CHECK(xf.at({0, 0, j}) == xp.at({0, 0, j}));
    CHECK(xf.at({0, 1, j}) == proto.at({0, j}));
    CHECK(xf.at({1, 0, j}) == proto.at({1, j}));
    CHECK(xf.at({1, 1, j}) == xp.at({1, 1, j}));
  }
}

TEST_CASE("fractional mask interpolates token and prototype") {
  Tensor xp(Shape{1, 1, 2}, {2.0, 4.0});
  Tensor proto(Shape{1, 2}, {10.0, 20.0});
  Tensor mask(Shape{1, 1}, {0.25});
  Tensor xf = ReplacementModule::replace_tokens(xp, proto, mask);
  CHECK(xf.at({0, 0, 0}) == doctest::Approx(0.25 * 2.0 + 0.75 * 10.0));
  CHECK(xf.at({0, 0, 1}) == doctest::Approx(0.25 * 4.0 + 0.75 * 20.0));
}

TEST_CASE("causal attention weights are exactly zero above the diagonal") {
  AttentionConfig cfg;
  cfg.heads = 2;
  auto repl = make_repl(4, 3, cfg, 17);
  Rng rng(5);
  Tensor xf = random_tensor({2, 3, 4}, rng);
  Tensor proto = random_tensor({2, 4}, rng);
  Tensor attn;
  Tensor out = repl.causal_attend(xf, proto, &attn);
  CHECK(out.shape() == Shape{2, 4, 4});
  CHECK(attn.shape() == Shape{2, 2, 4, 4});
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t h = 0; h < 2; ++h)
      for (std::int64_t i = 0; i < 4; ++i) {
        double row = 0.0;
        for (std::int64_t j = 0; j < 4; ++j) {
          const double w = attn.at({b, h, i, j});
          if (j > i) CHECK(w == 0.0);
          row += w;
        }
        CHECK(std::fabs(row - 1.0) < 1e-12);
      }
}

TEST_CASE("causality: editing a later token leaves earlier outputs unchanged") {
  AttentionConfig cfg;
  cfg.heads = 2;
  auto repl = make_repl(4, 3, cfg, 23);
  Rng rng(8);
  Tensor xf = random_tensor({1, 3, 4}, rng);
  Tensor proto = random_tensor({1, 4}, rng);
  Tensor base = repl.causal_attend(xf, proto);

  Tensor xf2 = Tensor(xf.shape(), xf.values());
  for (std::int64_t j = 0; j < 4; ++j)
    xf2.mutable_values()[2 * 4 + j] += 1.0;  // last patch token
  Tensor bumped = repl.causal_attend(xf2, proto);
  // sequence positions 0..2 (global token + first two patches) are untouched
  for (std::int64_t pos = 0; pos < 3; ++pos)
    for (std::int64_t j = 0; j < 4; ++j)
      CHECK(base.at({0, pos, j}) == bumped.at({0, pos, j}));
  double moved = 0.0;
  for (std::int64_t j = 0; j < 4; ++j)
    moved += std::fabs(base.at({0, 3, j}) - bumped.at({0, 3, j}));
  CHECK(moved > 0.0);
}

TEST_CASE("positional embeddings separate identical replaced tokens") {
  AttentionConfig cfg;
  cfg.heads = 2;
  auto repl = make_repl(4, 2, cfg, 29);
  Rng rng(11);
  Tensor row = random_tensor({1, 1, 4}, rng);
  Tensor xf = concat({row, row}, 1);  // both patch tokens identical
  Tensor proto = random_tensor({1, 4}, rng);
  Tensor out = repl.causal_attend(xf, proto);
  double diff = 0.0;
  for (std::int64_t j = 0; j < 4; ++j)
    diff += std::fabs(out.at({0, 1, j}) - out.at({0, 2, j}));
  CHECK(diff > 1e-8);
}

TEST_CASE("refinement attention is permutation equivariant") {
  AttentionConfig cfg;
  cfg.heads = 2;
  auto repl = make_repl(4, 3, cfg, 37);
  Rng rng(13);
  Tensor x = random_tensor({1, 4, 4}, rng);
  Tensor out = repl.refine_msa(x);
  // reverse the token order
  std::vector<Tensor> rev;
  for (std::int64_t i = 3; i >= 0; --i) rev.push_back(slice(x, 1, i, 1));
  Tensor out_rev = repl.refine_msa(concat(rev, 1));
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j)
      CHECK(out.at({0, i, j}) ==
            doctest::Approx(out_rev.at({0, 3 - i, j})).epsilon(1e-10));
}

TEST_CASE("attention block gradients agree with finite differences") {
  Rng rng(41);
  AttentionBlock block(4, 2, rng);
  Tensor x = random_tensor({1, 3, 4}, rng, false, 0.5);
  NamedParams ps;
  block.collect("b", ps);
  auto loss_fn = [&]() { return sum_all(block(x, true)).item(); };
  for (auto& [name, p] : ps) {
    auto fd = finite_diff(p, loss_fn, 1e-6);
    for (auto& [n2, t] : ps) t.zero_grad();
    backward(sum_all(block(x, true)));
    CHECK(max_rel_error(p.grad(), fd) < 1e-5);
  }
}

TEST_CASE("residual path: zero-weight attention is the identity map") {
  Rng rng(43);
  AttentionBlock block(4, 2, rng);
  for (auto& v : block.o.weight.mutable_values()) v = 0.0;
  for (auto& v : block.o.bias.mutable_values()) v = 0.0;
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor y = block(x, false);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
}

TEST_CASE("head count must divide the hidden dim") {
  AttentionConfig cfg;
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(8), TensorError);
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(8), TensorError);
  Rng rng(1);
  CHECK_THROWS_AS(ReplacementModule(8, 4, cfg, rng), TensorError);
}
