#include <gtest/gtest.h>

#include <cmath>

#include "msn/nn/adamw.hpp"
#include "msn/nn/timestep.hpp"
#include "msn/nn/transformer.hpp"
#include "msn/tensor/grad_check.hpp"
#include "test_util.hpp"

using namespace msn;
using msn::test::random_tensor;

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(3);
  auto q = random_tensor<double>({2, 1, 8}, rng);
  auto k = random_tensor<double>({2, 1, 8}, rng);
  auto v = random_tensor<double>({2, 1, 8}, rng);
  auto out = attention(q, k, v, 2, false);
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_NEAR(out.values()[i], v.values()[i], 1e-12);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng(4);
  auto q = random_tensor<double>({1, 5, 4}, rng);
  std::vector<double> krow{0.3, -1.0, 0.7, 2.0}, kv;
  for (int t = 0; t < 5; ++t) kv.insert(kv.end(), krow.begin(), krow.end());
  Tensor<double> k({1, 5, 4}, kv);
  auto v = random_tensor<double>({1, 5, 4}, rng);
  auto out = attention(q, k, v, 1, false);
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0;
    for (std::size_t t = 0; t < 5; ++t) m += v.values()[t * 4 + d] / 5.0;
    for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(out.values()[t * 4 + d], m, 1e-12);
  }
}

TEST(Attention, CausalMaskIgnoresFuture) {
  Rng rng(5);
  TransformerConfig cfg{1, 8, 4, true, 2, 16};
  Init init{&rng};
  MultiHeadAttention<double> attn(cfg, init);
  auto x = random_tensor<double>({2, 4, 8}, rng);
  auto base = attn(x, true).values();
  for (std::size_t t = 0; t < 4; ++t) {
    auto xv = x.values();
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t d = 0; d < 8; ++d) xv[(b * 4 + t) * 8 + d] += 0.5;
    auto out = attn(Tensor<double>(x.shape(), xv), true).values();
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t s = 0; s < t; ++s)
        for (std::size_t d = 0; d < 8; ++d) EXPECT_EQ(out[(b * 4 + s) * 8 + d], base[(b * 4 + s) * 8 + d]);
    // the perturbed position itself must react
    double diff = 0;
    for (std::size_t d = 0; d < 8; ++d) diff += std::abs(out[t * 8 + d] - base[t * 8 + d]);
    EXPECT_GT(diff, 0.0);
  }
}

TEST(Attention, ShapeMismatchThrows) {
  Tensor<double> a = Tensor<double>::zeros({1, 2, 4}), b = Tensor<double>::zeros({1, 3, 4});
  EXPECT_THROW(attention(a, b, b, 1, false), ShapeError);
}

TEST(TransformerStack, CausalPrefixInvariance) {
  Rng rng(6);
  Init init{&rng};
  TransformerStack<float> stack({2, 16, 8, true, 2, 10}, init);
  auto x = random_tensor<float>({1, 6, 16}, rng);
  auto full = stack(x).values();
  auto xv = x.values();
  for (std::size_t i = 3 * 16; i < xv.size(); ++i) xv[i] = 7.0f;
  auto pert = stack(Tensor<float>(x.shape(), xv)).values();
  for (std::size_t i = 0; i < 3 * 16; ++i) EXPECT_EQ(full[i], pert[i]);
}

TEST(TransformerStack, CachedStepMatchesFullPass) {
  Rng rng(7);
  Init init{&rng};
  TransformerStack<double> stack({2, 16, 8, true, 2, 10}, init);
  auto x = random_tensor<double>({1, 5, 16}, rng);
  auto full = stack(x).values();
  KvCache<double> cache;
  for (std::size_t t = 0; t < 5; ++t) {
    std::vector<double> row(x.values().begin() + t * 16, x.values().begin() + (t + 1) * 16);
    auto y = stack.step(Tensor<double>({1, 1, 16}, row), cache).values();
    for (std::size_t d = 0; d < 16; ++d) EXPECT_NEAR(y[d], full[t * 16 + d], 1e-12);
  }
}

TEST(TransformerBlock, GradCheckF64) {
  Rng rng(8);
  Init init{&rng};
  TransformerConfig cfg{1, 8, 4, true, 2, 8};
  TransformerBlock<double> block(cfg, init);
  ParameterRefs<double> params;
  block.collect(params, "block");
  for (auto& p : params) {
    for (auto& w : p.param->value.mutable_data()) w += 0.1 * std::normal_distribution<double>()(rng);
  }
  std::vector<Tensor<double>> inputs{random_tensor<double>({2, 3, 8}, rng, true)};
  for (auto& p : params) inputs.push_back(p.param->value);
  auto fn = [&](const std::vector<Tensor<double>>& in) { return msn::test::project(block(in[0], true)); };
  EXPECT_LT(grad_check<double>(fn, inputs, 1e-5), 1e-4);
}

TEST(LayerNorm, NormalisesEachPosition) {
  Rng rng(9);
  auto x = random_tensor<double>({3, 4, 32}, rng, false, 5.0);
  auto y = layer_norm(x, Tensor<double>::full({32}, 1.0), Tensor<double>::zeros({32}));
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0, v = 0;
    for (std::size_t d = 0; d < 32; ++d) m += y.values()[r * 32 + d] / 32;
    for (std::size_t d = 0; d < 32; ++d) v += std::pow(y.values()[r * 32 + d] - m, 2) / 32;
    EXPECT_NEAR(m, 0.0, 1e-4);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(Timestep, ZeroIsSinZeroCosOne) {
  auto e = sinusoidal_embedding<double>(0.0, 16);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[8 + i], 1.0);
  }
}

TEST(Timestep, DistinctTimesDiffer) {
  auto a = sinusoidal_embedding<double>(0.25, 256), b = sinusoidal_embedding<double>(0.5, 256);
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  EXPECT_GT(m, 0.0);
}

TEST(Timestep, EmbedderOutputWidth) {
  Rng rng(10);
  Init init{&rng};
  TimestepEmbedder<float> emb(256, 256, init);
  std::vector<double> ts{0.0, 0.3};
  auto out = emb(ts);
  EXPECT_EQ(out.shape(), (Shape{2, 256}));
  std::vector<double> again{0.3};
  auto one = emb(again);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(one.values()[i], out.values()[256 + i]);
}

TEST(Timestep, OddDimThrows) {
  EXPECT_THROW(sinusoidal_embedding<float>(0.5, 7), InvalidArgument);
  Rng rng(1);
  Init init{&rng};
  EXPECT_THROW(TimestepEmbedder<float>(7, 8, init), InvalidArgument);
}

namespace {

struct Scalar {
  Parameter<double> p;
  ParameterRefs<double> refs;
  explicit Scalar(double v) : p{Tensor<double>({1}, {v}, true)} { refs.push_back({"p", &p}); }
  void set_grad(double g) {
    p.value.zero_grad();
    mul(p.value, Tensor<double>({1}, {g})).backward();
  }
};

}  // namespace

TEST(AdamW, ZeroGradientNoDecayLeavesParameters) {
  Scalar s(1.5);
  AdamW<double> opt(s.refs, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 3; ++i) {
    s.set_grad(0.0);
    opt.step();
  }
  EXPECT_EQ(s.p.value.item(), 1.5);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Scalar s(1.0);
  AdamW<double> opt(s.refs, {0.1, 0.9, 0.999, 1e-8, 0.0});
  s.set_grad(1.0);
  opt.step();
  // m_hat = v_hat = 1, so the step is lr / (1 + eps)
  EXPECT_NEAR(s.p.value.item(), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, DecoupledDecay) {
  Scalar s(2.0);
  AdamW<double> opt(s.refs, {0.1, 0.9, 0.999, 1e-8, 0.1});
  s.set_grad(0.0);
  opt.step();
  EXPECT_NEAR(s.p.value.item(), 2.0 * (1.0 - 0.01), 1e-15);
}

TEST(AdamW, MissingGradientThrows) {
  Scalar s(1.0);
  AdamW<double> opt(s.refs, {});
  EXPECT_THROW(opt.step(), InvalidArgument);
}

TEST(AdamW, FrozenRowsUntouched) {
  Parameter<double> w{Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}, true)};
  w.frozen_rows = 2;
  ParameterRefs<double> refs{{"w", &w}};
  AdamW<double> opt(refs, {0.1, 0.9, 0.999, 1e-8, 0.0});
  sum(w.value).backward();
  opt.step();
  auto v = w.value.values();
  EXPECT_EQ(std::vector<double>(v.begin(), v.begin() + 4), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_NE(v[4], 5.0);
  EXPECT_NE(v[5], 6.0);
}

TEST(Lora, ZeroBReproducesBase) {
  Rng rng(11);
  Init init{&rng};
  Linear<float> lin(6, 4, init);
  auto x = random_tensor<float>({3, 6}, rng);
  auto base = lin(x).values();
  lin.enable_lora(2, 4.0, init);
  EXPECT_EQ(lin(x).values(), base);
}

TEST(Lora, HandExample) {
  Rng rng(12);
  Init init{&rng};
  LoraAdapter<double> ad(2, 2, 1, 1.0, init);
  ad.a.value = Tensor<double>({1, 2}, {1, 0}, true);
  ad.b.value = Tensor<double>({2, 1}, {1, 0}, true);
  Tensor<double> w({2, 2}, {1, 0, 0, 1});
  auto y = lora_forward(Tensor<double>({1, 2}, {3, 5}), w, ad);
  EXPECT_EQ(y.values(), (std::vector<double>{6, 5}));
}

TEST(Lora, BaseWeightStaysFrozen) {
  Rng rng(13);
  Init init{&rng};
  Linear<float> lin(5, 3, init);
  lin.enable_lora(2, 4.0, init);
  ParameterRefs<float> params;
  lin.collect(params, "lin");
  const auto before = lin.weight().value.values();
  AdamW<float> opt(params, {0.01, 0.9, 0.999, 1e-8, 0.1});
  for (int i = 0; i < 3; ++i) {
    msn::test::project(lin(random_tensor<float>({4, 5}, rng))).backward();
    opt.step();
    opt.zero_grad();
  }
  EXPECT_EQ(lin.weight().value.values(), before);
  EXPECT_FALSE(lin.weight().value.has_grad());
  double bnorm = 0;
  for (float v : lin.lora()->b.value.values()) bnorm += std::abs(v);
  EXPECT_GT(bnorm, 0.0);
}
