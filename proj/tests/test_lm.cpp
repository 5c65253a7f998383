#include <gtest/gtest.h>

#include <cmath>

#include "msn/io/hash.hpp"
#include "msn/lm/generate.hpp"
#include "msn/lm/train.hpp"
#include "test_util.hpp"

using namespace msn;
using msn::test::random_tensor;

namespace {

LmConfig tiny_config() {
  LmConfig c;
  c.n_blocks = 2;
  c.hidden_dim = 32;
  c.head_dim = 16;
  c.ffn_mult = 2;
  c.max_len = 64;
  c.lora_rank = 4;
  c.lora_alpha = 8;
  return c;
}

template <class T = float>
std::unique_ptr<LanguageModel<T>> make_lm(std::uint64_t seed = 1, LmConfig cfg = tiny_config()) {
  Rng rng(seed);
  Init init{&rng};
  return std::make_unique<LanguageModel<T>>(cfg, init);
}

std::string frozen_digest(LanguageModel<float>& m) {
  io::Sha256 h;
  m.stack().for_each_linear([&](Linear<float>& l) { h.update(std::span<const float>(l.weight().value.values())); });
  const std::size_t text = m.vocab().text_size() * m.config().hidden_dim;
  for (auto* p : {&m.input_embedding(), &m.output_embedding()}) {
    h.update(std::span<const float>(p->value.values()).subspan(0, text));
  }
  return h.hex();
}

}  // namespace

TEST(Vocab, RangesAreContiguous) {
  Vocab v(256, 32);
  EXPECT_EQ(v.size(), 256u + 32 + 2);
  EXPECT_TRUE(v.is_text(255));
  EXPECT_FALSE(v.is_audio(255));
  EXPECT_TRUE(v.is_audio(256));
  EXPECT_TRUE(v.is_audio(287));
  EXPECT_FALSE(v.is_audio(288));
  EXPECT_EQ(v.soa(), 288);
  EXPECT_EQ(v.eoa(), 289);
  EXPECT_EQ(v.audio_code(v.audio_id(17)), 17);
  EXPECT_THROW(v.audio_id(32), InvalidArgument);
  EXPECT_EQ(v.render(std::vector<std::int32_t>{'h', 'i', 288, 260, 289, 10}), "hi<soa><a4><eoa><0x0A>");
}

TEST(Sequence, PretrainForcedOrders) {
  Vocab v(256, 8);
  std::vector<std::int32_t> codes{1, 2, 3};
  auto text_first = build_pretrain_example(v, "ab", codes, true);
  EXPECT_EQ(text_first.ids, (std::vector<std::int32_t>{'a', 'b', v.soa(), 257, 258, 259, v.eoa()}));
  EXPECT_EQ(text_first.weights, (std::vector<float>{1, 1, 10, 10, 10, 10, 10}));
  auto audio_first = build_pretrain_example(v, "ab", codes, false);
  EXPECT_EQ(audio_first.ids, (std::vector<std::int32_t>{v.soa(), 257, 258, 259, v.eoa(), 'a', 'b'}));
  EXPECT_EQ(audio_first.weights, (std::vector<float>{10, 10, 10, 10, 10, 1, 1}));
  EXPECT_THROW(build_pretrain_example(v, "", codes, true), InvalidArgument);
  EXPECT_THROW(build_pretrain_example(v, "ab", {}, true), InvalidArgument);
}

TEST(Sequence, PretrainSwapIsFair) {
  Vocab v(256, 8);
  std::vector<std::int32_t> codes{1};
  Rng rng(5);
  int text_first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) text_first += build_pretrain_example(v, "x", codes, rng).ids[0] == 'x';
  const double frac = static_cast<double>(text_first) / n;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(Sequence, FinetuneTemplate) {
  Vocab v(256, 8);
  std::vector<std::int32_t> codes{4, 5};
  auto s = build_finetune_example(v, "What sound is this?", codes, "dog bark");
  EXPECT_EQ(v.render(s.ids), "USER: <soa><a4><a5><eoa> What sound is this? ASSISTANT: dog bark");
  EXPECT_EQ(std::count(s.ids.begin(), s.ids.end(), v.soa()), 1);
  EXPECT_EQ(std::count(s.ids.begin(), s.ids.end(), v.eoa()), 1);
  const std::string prompt = "USER: <soa><a4><a5><eoa> What sound is this? ASSISTANT:";
  const std::size_t prompt_tokens = prompt.size() - std::string("<soa><a4><a5><eoa>").size() + 4;
  ASSERT_EQ(s.size(), prompt_tokens + std::string(" dog bark").size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.weights[i], i < prompt_tokens ? 0.0f : 1.0f) << i;

  auto with_audio = build_finetune_example(v, "Make it", codes, "ok", std::vector<std::int32_t>{6, 7});
  const auto soa_at = std::find(with_audio.ids.rbegin(), with_audio.ids.rend(), v.soa()).base() - 1;
  const auto first = static_cast<std::size_t>(soa_at - with_audio.ids.begin());
  ASSERT_EQ(with_audio.size() - first, 4u);
  for (std::size_t i = first; i < with_audio.size(); ++i) EXPECT_EQ(with_audio.weights[i], 10.0f);
  EXPECT_EQ(with_audio.weights[first - 1], 1.0f);
  EXPECT_THROW(build_finetune_example(v, "q", codes, ""), InvalidArgument);
  EXPECT_THROW(build_finetune_example(v, "", codes, "a"), InvalidArgument);
}

TEST(Loss, UniformLogits) {
  auto logits = Tensor<double>::zeros({3, 4});
  std::vector<std::int32_t> tg{0, 3, 1};
  std::vector<float> w{1, 10, 2};
  EXPECT_NEAR(weighted_ce_zloss(logits, tg, w).loss.item(), std::log(4.0), 1e-12);
}

TEST(Loss, WeightedMean) {
  // row r has nll exactly l_r for target 0: logits [0, log(e^l - 1)]
  std::vector<double> x;
  for (double l : {1.0, 2.0}) {
    x.push_back(0.0);
    x.push_back(std::log(std::exp(l) - 1.0));
  }
  Tensor<double> logits({2, 2}, x);
  std::vector<std::int32_t> tg{0, 0};
  std::vector<float> w{1, 10};
  auto r = weighted_ce_zloss(logits, tg, w);
  EXPECT_NEAR(r.loss.item(), 21.0 / 11.0, 1e-12);
  EXPECT_NEAR(r.loss.item(), 1.9091, 1e-4);
}

TEST(Loss, ZlossExample) {
  std::vector<std::int32_t> tg{1};
  std::vector<float> w{1};
  auto r = weighted_ce_zloss(Tensor<double>({1, 2}, {0, 0}), tg, w, 1e-4);
  EXPECT_NEAR(r.zloss.item(), 1e-4 * std::log(2.0) * std::log(2.0), 1e-15);
  EXPECT_NEAR(r.zloss.item(), 4.8045e-5, 1e-9);
  EXPECT_NEAR(r.total.item(), r.loss.item() + r.zloss.item(), 1e-15);
}

TEST(Loss, MatchesHighPrecisionOracle) {
  Rng rng(41);
  const std::size_t rows = 50, v = 37;
  auto logits = random_tensor<float>({rows, v}, rng, false, 6.0);
  std::vector<std::int32_t> tg(rows);
  std::vector<float> w(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    tg[r] = static_cast<std::int32_t>(rng() % v);
    w[r] = r % 3 ? 1.0f : 10.0f;
  }
  long double num = 0, den = 0, z2 = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    long double s = 0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(static_cast<long double>(logits.values()[r * v + j]));
    const long double lse = std::log(s);
    num += w[r] * (lse - logits.values()[r * v + tg[r]]);
    den += w[r];
    z2 += lse * lse;
  }
  auto out = weighted_ce_zloss(logits, tg, w, 1e-4);
  const double loss = static_cast<double>(num / den), zloss = static_cast<double>(1e-4L * z2 / rows);
  EXPECT_NEAR(out.loss.item(), loss, 1e-6 * loss);
  EXPECT_NEAR(out.zloss.item(), zloss, 1e-6 * zloss);
}

TEST(Loss, AudioWeightScalesGradientTenfold) {
  Tensor<double> logits({2, 5}, {0.1, -0.3, 0.7, 0.2, 0.0, 0.1, -0.3, 0.7, 0.2, 0.0}, true);
  std::vector<std::int32_t> tg{2, 2};
  std::vector<float> w{10, 1};
  weighted_ce_zloss(logits, tg, w, 0.0).loss.backward();
  double a = 0, t = 0;
  for (std::size_t j = 0; j < 5; ++j) {
    a += std::pow(logits.grad()[j], 2);
    t += std::pow(logits.grad()[5 + j], 2);
  }
  EXPECT_NEAR(std::sqrt(a) / std::sqrt(t), 10.0, 1e-5 * 10.0);
}

TEST(Loss, Errors) {
  auto logits = Tensor<double>::zeros({2, 3});
  std::vector<std::int32_t> tg{0};
  std::vector<float> w{1, 1};
  EXPECT_THROW(weighted_ce_zloss(logits, tg, w), ShapeError);
  std::vector<std::int32_t> bad{0, 3};
  EXPECT_THROW(weighted_ce_zloss(logits, bad, w), InvalidArgument);
}

TEST(ExtendVocab, SizesAndSecondCallRejected) {
  auto m = make_lm();
  Rng rng(2);
  EXPECT_EQ(m->vocab().size(), 256u);
  m->extend_vocab(32, 0.02, rng);
  EXPECT_EQ(m->vocab().size(), 256u + 32 + 2);
  EXPECT_EQ(m->input_embedding().value.dim(0), 290u);
  EXPECT_EQ(m->output_embedding().value.dim(0), 290u);
  EXPECT_EQ(m->input_embedding().frozen_rows, 256u);
  EXPECT_THROW(m->extend_vocab(32, 0.02, rng), InvalidArgument);
}

TEST(ExtendVocab, TextLogitsUnchangedAtInit) {
  auto m = make_lm(3);
  auto ids = Vocab(256, 0).encode_text("a dog barks twice");
  auto base = m->forward(ids, 1).values();
  Rng rng(4);
  m->extend_vocab(16, 0.02, rng);
  m->enable_lora(rng);
  auto ext = m->forward(ids, 1).values();
  const std::size_t v = 256 + 16 + 2;
  ASSERT_EQ(ext.size(), ids.size() * v);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t j = 0; j < 256; ++j) ASSERT_EQ(ext[t * v + j], base[t * 256 + j]) << t << "," << j;
}

TEST(ExtendVocab, FrozenWeightsConservedNewRowsLearn) {
  auto m = make_lm(5);
  Rng rng(6);
  m->extend_vocab(8, 0.02, rng);
  m->enable_lora(rng);
  const auto digest = frozen_digest(*m);
  const auto new_rows_before = m->input_embedding().value.values();
  const Vocab v = m->vocab();

  auto seq = build_pretrain_example(v, "cat", std::vector<std::int32_t>{1, 2, 3}, true);
  std::vector<const FusionSequence*> ptrs{&seq};
  auto terms = lm_loss(*m, make_lm_batch(ptrs));
  terms.total.backward();
  const auto& g = m->input_embedding().value.grad();
  const std::size_t h = m->config().hidden_dim;
  for (std::int32_t id : {v.soa(), v.audio_id(1), v.audio_id(2)}) {
    double n = 0;
    for (std::size_t c = 0; c < h; ++c) n += std::abs(g[static_cast<std::size_t>(id) * h + c]);
    EXPECT_GT(n, 0.0) << id;
  }
  m->input_embedding().value.zero_grad();

  LmTrainConfig tc;
  tc.steps = 5;
  tc.batch_size = 1;
  tc.weight_decay = 0.1;
  train_lm(*m, [&](std::size_t, Rng&) { return seq; }, 1, tc);
  EXPECT_EQ(frozen_digest(*m), digest);
  const auto& after = m->input_embedding().value.values();
  EXPECT_TRUE(std::equal(after.begin(), after.begin() + 256 * h, new_rows_before.begin()));
  EXPECT_FALSE(std::equal(after.begin() + 256 * h, after.end(), new_rows_before.begin() + 256 * h));
}

TEST(Generate, CachedStepMatchesFullForward) {
  auto m = make_lm<double>(7);
  auto ids = Vocab(256, 0).encode_text("hello");
  auto full = m->forward(ids, 1).values();
  KvCache<double> cache;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto s = m->step(ids[t], cache).values();
    for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(s[j], full[t * 256 + j], 1e-12);
  }
}

TEST(Generate, TemperatureLimitIsGreedy) {
  auto m = make_lm(8);
  Rng ext(1);
  m->extend_vocab(8, 1.0, ext);
  auto prompt = m->vocab().encode_text("sound:");
  GenerateConfig greedy{24, 0.0, 0, true}, cold{24, 1e-6, 0, true};
  Rng r1(1), r2(2);
  auto a = generate(*m, prompt, greedy, r1), b = generate(*m, prompt, cold, r2);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.ids.size(), 24u);
}

TEST(Generate, ConstrainedSpansAreBracketed) {
  auto m = make_lm(9);
  Rng ext(2);
  m->extend_vocab(8, 3.0, ext);
  const Vocab& v = m->vocab();
  std::vector<std::int32_t> prompt{'x', v.soa()};
  Rng rng(10);
  std::size_t spans = 0;
  for (int i = 0; i < 200; ++i) {
    GenerateConfig cfg{static_cast<std::size_t>(4 + i % 20), 1.5, 0, true};
    auto r = generate(*m, prompt, cfg, rng);
    EXPECT_FALSE(r.unclosed_audio);
    EXPECT_TRUE(audio_spans_well_formed(v, r.ids)) << v.render(r.ids);
    spans += static_cast<std::size_t>(std::count(r.ids.begin(), r.ids.end(), v.soa()));
  }
  EXPECT_GE(spans, 200u);
}

TEST(Generate, UnclosedSpanFlagged) {
  auto m = make_lm(11);
  Rng ext(3);
  m->extend_vocab(4, 0.02, ext);
  std::vector<std::int32_t> prompt{'x', m->vocab().soa(), m->vocab().audio_id(0)};
  Rng rng(1);
  auto r = generate(*m, prompt, {3, 1.0, 0, false}, rng);
  EXPECT_TRUE(r.unclosed_audio);
  EXPECT_EQ(r.ids, prompt);
  std::vector<std::int32_t> bad{m->vocab().eoa()};
  EXPECT_THROW(generate(*m, bad, {8, 1.0, 0, true}, rng), InvalidArgument);
}

TEST(Generate, ReproducesMemorizedContinuation) {
  auto m = make_lm(12);
  Rng ext(4);
  m->extend_vocab(8, 0.02, ext);
  const Vocab& v = m->vocab();
  std::vector<std::int32_t> codes{3, 1, 4, 1, 5};
  auto seq = build_finetune_example(v, "What?", codes, "a dog");
  LmTrainConfig tc;
  tc.steps = 300;
  tc.batch_size = 1;
  tc.lr = 3e-3;
  train_lm(*m, [&](std::size_t, Rng&) { return seq; }, 1, tc);
  const std::size_t answer = std::string(" a dog").size();
  std::vector<std::int32_t> prompt(seq.ids.begin(), seq.ids.end() - static_cast<std::ptrdiff_t>(answer));
  Rng rng(1);
  auto r = generate(*m, prompt, {seq.size(), 0.0, 0, true}, rng);
  EXPECT_EQ(v.render(r.ids), v.render(seq.ids));
  EXPECT_DOUBLE_EQ(next_token_accuracy(*m, {seq}), 1.0);
}
