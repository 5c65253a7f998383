#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "msn/tokenizer/model.hpp"
#include "msn/vq/codebook.hpp"
#include "test_util.hpp"

using namespace msn;
using msn::test::random_tensor;

namespace {

Codebook<double> make_codebook(std::size_t k, std::size_t d, std::vector<double> entries = {}, double decay = 0.99,
                               double threshold = 1e-3, std::uint64_t seed = 1) {
  Rng rng(seed);
  Init init{&rng};
  Codebook<double> cb({k, d, decay, threshold}, init);
  if (!entries.empty()) {
    auto t = cb.entries().value.mutable_data();
    std::copy(entries.begin(), entries.end(), t.begin());
  }
  return cb;
}

std::int32_t brute_force_argmin(const double* e, const std::vector<double>& table, std::size_t k, std::size_t d) {
  std::int32_t best = -1;
  long double best_d = 0;
  for (std::size_t j = 0; j < k; ++j) {
    long double dist = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const long double diff = static_cast<long double>(e[c]) - table[j * d + c];
      dist += diff * diff;
    }
    if (best < 0 || dist < best_d) {
      best = static_cast<std::int32_t>(j);
      best_d = dist;
    }
  }
  return best;
}

}  // namespace

TEST(Quantize, TwoEntryExample) {
  auto cb = make_codebook(2, 2, {1, 0, 0, 1});
  auto r = quantize(Tensor<double>({1, 2}, {0.9, 0.1}), cb);
  EXPECT_EQ(r.indices, (std::vector<std::int32_t>{0}));
  EXPECT_EQ(r.quantized.values(), (std::vector<double>{1, 0}));
  EXPECT_NEAR(r.commitment_loss.item(), 0.01, 1e-12);
  EXPECT_NEAR(r.codebook_loss.item(), 0.01, 1e-12);
}

TEST(Quantize, ExactEntryHasZeroLoss) {
  auto cb = make_codebook(5, 3);
  std::vector<double> row(cb.entry(3).begin(), cb.entry(3).end());
  auto r = quantize(Tensor<double>({1, 3}, row), cb);
  EXPECT_EQ(r.indices[0], 3);
  EXPECT_EQ(r.commitment_loss.item(), 0.0);
  EXPECT_EQ(r.codebook_loss.item(), 0.0);
}

TEST(Quantize, TiesGoToLowestIndex) {
  auto cb = make_codebook(3, 2, {1, 0, -1, 0, 1, 0});
  auto r = quantize(Tensor<double>({1, 2}, {0, 0.5}), cb);
  EXPECT_EQ(r.indices[0], 0);
}

TEST(Quantize, MatchesBruteForceOracle) {
  Rng rng(21);
  const std::size_t k = 64, d = 8;
  auto cb = make_codebook(k, d, {}, 0.99, 1e-3, 22);
  auto e = random_tensor<double>({1000, d}, rng);
  auto r = quantize(e, cb);
  const auto& table = cb.table().values();
  for (std::size_t i = 0; i < 1000; ++i) {
    EXPECT_EQ(r.indices[i], brute_force_argmin(e.values().data() + i * d, table, k, d)) << "row " << i;
  }
}

TEST(Quantize, Idempotent) {
  Rng rng(23);
  auto cb = make_codebook(32, 4, {}, 0.99, 1e-3, 24);
  auto r = quantize(random_tensor<double>({200, 4}, rng), cb);
  auto again = quantize(r.quantized.detach(), cb);
  EXPECT_EQ(again.indices, r.indices);
}

TEST(Quantize, Errors) {
  auto cb = make_codebook(4, 3);
  EXPECT_THROW(quantize(Tensor<double>::zeros({2, 2}), cb), ShapeError);
  EXPECT_THROW(quantize(Tensor<double>::zeros({0, 3}), cb), Error);
  EXPECT_THROW(lookup_entries(cb, std::vector<std::int32_t>{4}, {1}), InvalidArgument);
}

TEST(StraightThrough, GradientBitwiseEqualsPassThrough) {
  Rng rng(25);
  auto cb = make_codebook(16, 4, {}, 0.99, 1e-3, 26);
  auto e = random_tensor<double>({6, 4}, rng, true);
  auto q = quantize(e.detach(), cb).quantized.detach();
  auto downstream = [](const Tensor<double>& x) { return msn::test::project(square(x), 5); };

  downstream(straight_through(e, q)).backward();
  Tensor<double> q_leaf(q.shape(), q.values(), true);
  downstream(q_leaf).backward();

  ASSERT_TRUE(e.has_grad());
  ASSERT_EQ(e.grad().size(), q_leaf.grad().size());
  EXPECT_EQ(std::memcmp(e.grad().data(), q_leaf.grad().data(), e.grad().size() * sizeof(double)), 0);
  auto fwd = straight_through(e, q);
  EXPECT_EQ(std::memcmp(fwd.values().data(), q.values().data(), q.numel() * sizeof(double)), 0);
}

TEST(StraightThrough, IdentityWhenEqual) {
  Rng rng(27);
  auto e = random_tensor<double>({3, 2}, rng, true);
  auto y = straight_through(e, e.detach());
  EXPECT_EQ(y.values(), e.values());
  sum(y).backward();
  for (double g : e.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Maintenance, AllUsedUnchanged) {
  Rng rng(28);
  auto cb = make_codebook(4, 2, {}, 0.9, 0.01);
  const auto before = cb.table().values();
  std::vector<std::int32_t> ids{0, 1, 2, 3};
  std::vector<double> enc(8, 5.0);
  for (int s = 0; s < 200; ++s) EXPECT_TRUE(codebook_maintenance(cb, ids, std::span<const double>(enc), rng).empty());
  EXPECT_EQ(cb.table().values(), before);
}

TEST(Maintenance, DeadEntryRestarted) {
  Rng rng(29);
  auto cb = make_codebook(4, 2, {}, 0.9, 0.01);
  const auto before = cb.table().values();
  std::vector<std::int32_t> ids{0, 1, 3, 0};
  std::vector<double> enc{7, 7, 8, 8, 9, 9, 10, 10};
  std::size_t restarted_at = 0;
  for (int s = 1; s <= 100 && !restarted_at; ++s) {
    auto r = codebook_maintenance(cb, ids, std::span<const double>(enc), rng);
    if (!r.empty()) {
      EXPECT_EQ(r, (std::vector<std::size_t>{2}));
      restarted_at = static_cast<std::size_t>(s);
    }
  }
  ASSERT_GT(restarted_at, 0u);
  const auto& after = cb.table().values();
  for (std::size_t k : {0u, 1u, 3u}) {
    EXPECT_EQ(after[k * 2], before[k * 2]);
    EXPECT_EQ(after[k * 2 + 1], before[k * 2 + 1]);
  }
  EXPECT_EQ(after[4], after[5]);
  EXPECT_GE(after[4], 7.0);
  EXPECT_EQ(cb.usage()[2], 1.0);
}

TEST(Maintenance, ZeroThresholdNeverRestarts) {
  Rng rng(30);
  auto cb = make_codebook(4, 2, {}, 0.5, 0.0);
  const auto before = cb.table().values();
  std::vector<std::int32_t> ids{0};
  std::vector<double> enc{1, 1};
  for (int s = 0; s < 200; ++s) EXPECT_TRUE(codebook_maintenance(cb, ids, std::span<const double>(enc), rng).empty());
  EXPECT_EQ(cb.table().values(), before);
}

TEST(Perplexity, Examples) {
  EXPECT_DOUBLE_EQ(codebook_perplexity(std::vector<std::size_t>{0, 9, 0}), 1.0);
  EXPECT_NEAR(codebook_perplexity(std::vector<std::size_t>(8, 3)), 8.0, 1e-12);
  const double h = -(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25));
  EXPECT_NEAR(h, 1.0397, 1e-4);
  EXPECT_NEAR(codebook_perplexity(std::vector<std::size_t>{2, 1, 1}), std::exp(h), 1e-12);
  EXPECT_NEAR(codebook_perplexity(std::vector<std::size_t>{2, 1, 1}), 2.828, 1e-3);
  EXPECT_THROW(codebook_perplexity(std::vector<std::size_t>{0, 0}), InvalidArgument);
  EXPECT_THROW(codebook_perplexity(std::vector<std::size_t>{}), InvalidArgument);
}

TEST(Bitrate, MatchesTokensTimesLog2K) {
  TokenizerConfig cfg;
  const double tokens_per_second = static_cast<double>(cfg.seq_len) / 10.0;
  EXPECT_NEAR(bitrate(cfg.seq_len, 10.0, cfg.codebook_size), tokens_per_second * std::log2(cfg.codebook_size), 1e-12);
}
