#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "msn/core/config.hpp"
#include "msn/io/captions.hpp"
#include "msn/io/model_files.hpp"
#include "msn/io/pairs.hpp"
#include "msn/io/synthetic.hpp"
#include "test_util.hpp"

using namespace msn;

namespace {

SyntheticLatentSpec small_spec(std::uint64_t seed = 1) {
  SyntheticLatentSpec s;
  s.n_classes = 3;
  s.steps = 8;
  s.dim = 4;
  s.seed = seed;
  return s;
}

std::vector<std::uint8_t> bytes_of(const std::string& path) { return io::read_file(path); }

}  // namespace

TEST(Synthetic, DeterministicInSpecAndSeed) {
  auto a = io::encode_latents(gen_latent_dataset(small_spec(), 5));
  auto b = io::encode_latents(gen_latent_dataset(small_spec(), 5));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, io::encode_latents(gen_latent_dataset(small_spec(2), 5)));
}

TEST(Synthetic, NoiselessSameClassIdentical) {
  auto spec = small_spec();
  spec.noise_std = 0.0;
  auto ds = gen_latent_dataset(spec, 3);
  ASSERT_EQ(ds.size(), 9u);
  EXPECT_TRUE(std::ranges::equal(ds.sample(3), ds.sample(4)));
  EXPECT_FALSE(std::ranges::equal(ds.sample(0), ds.sample(3)));
  EXPECT_EQ(ds.labels, (std::vector<std::uint16_t>{0, 0, 0, 1, 1, 1, 2, 2, 2}));
}

TEST(Synthetic, BimodalSignSplit) {
  auto spec = small_spec();
  spec.n_classes = 2;
  spec.noise_std = 0.0;
  spec.bimodal_class = 1;
  auto ds = gen_latent_dataset(spec, 10000);
  const auto pos = render_pattern(class_patterns(spec)[1], spec.steps);
  std::size_t plus = 0, minus = 0;
  for (std::size_t i = 10000; i < 20000; ++i) {
    auto s = ds.sample(i);
    if (std::ranges::equal(s, pos)) ++plus;
    else if (std::equal(s.begin(), s.end(), pos.begin(), [](float a, float b) { return a == -b; })) ++minus;
  }
  EXPECT_EQ(plus + minus, 10000u);
  const double frac = static_cast<double>(plus) / 10000.0;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(Synthetic, ValuesBounded) {
  auto spec = small_spec();
  spec.noise_std = 0.1;
  auto ds = gen_latent_dataset(spec, 200);
  const double bound = spec.max_amplitude + 6 * spec.noise_std;
  std::size_t out = 0;
  for (float v : ds.values) out += std::abs(v) > bound;
  EXPECT_LE(static_cast<double>(out), 1e-4 * static_cast<double>(ds.values.size()));
}

TEST(Synthetic, InvalidSpecs) {
  auto spec = small_spec();
  spec.n_classes = 1;
  EXPECT_THROW(gen_latent_dataset(spec, 2), InvalidArgument);
  spec = small_spec();
  spec.noise_std = -1;
  EXPECT_THROW(gen_latent_dataset(spec, 2), InvalidArgument);
  EXPECT_THROW(gen_latent_dataset(small_spec(), 0), InvalidArgument);
}

TEST(Captions, TemplateContract) {
  Rng a(3), b(3);
  EXPECT_EQ(gen_caption(2, a), gen_caption(2, b));
  Rng rng(4);
  std::set<std::string> forms;
  for (int i = 0; i < 100; ++i) {
    auto c = gen_caption(0, rng);
    EXPECT_NE(c.find("dog"), std::string::npos) << c;
    for (unsigned char ch : c) EXPECT_LT(ch, 128);
    forms.insert(c);
  }
  EXPECT_GE(forms.size(), 3u);
  EXPECT_THROW(gen_caption(kSoundEvents.size(), rng), InvalidArgument);
}

TEST(LatentFile, RoundTripBitwise) {
  auto ds = gen_latent_dataset(small_spec(), 4);
  const auto p1 = test::temp_path("a.msnl"), p2 = test::temp_path("b.msnl");
  io::save_latents(ds, p1);
  auto loaded = io::load_latents(p1);
  EXPECT_EQ(loaded.values, ds.values);
  EXPECT_EQ(loaded.labels, ds.labels);
  io::save_latents(loaded, p2);
  EXPECT_EQ(bytes_of(p1), bytes_of(p2));
}

TEST(LatentFile, Errors) {
  auto bytes = io::encode_latents(gen_latent_dataset(small_spec(), 2));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(io::decode_latents(truncated), CorruptionError);
  auto bumped = bytes;
  bumped[4] = 9;
  EXPECT_THROW(io::decode_latents(bumped), UnsupportedVersion);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(io::decode_latents(magic), FormatError);
}

TEST(Pairs, RoundTrip) {
  std::vector<PairRecord> pairs(2);
  pairs[0].caption = "A loud dog is barking";
  pairs[0].audio_tokens = {1, 2, 3};
  pairs[0].label = "dog";
  pairs[1].caption = "x";
  pairs[1].audio_tokens = {7};
  pairs[1].instruction = "What sound is this?";
  pairs[1].answer = "bell";
  pairs[1].answer_audio_tokens = {4, 5};
  const auto p1 = test::temp_path("a.jsonl"), p2 = test::temp_path("b.jsonl");
  io::save_pairs(pairs, p1);
  auto loaded = io::load_pairs(p1);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].label, "dog");
  EXPECT_FALSE(loaded[0].instruction);
  EXPECT_EQ(loaded[1].answer_audio_tokens, pairs[1].answer_audio_tokens);
  io::save_pairs(loaded, p2);
  EXPECT_EQ(bytes_of(p1), bytes_of(p2));
  EXPECT_THROW(io::decode_pairs("{\"caption\": \"a\"}\n"), FormatError);
  EXPECT_THROW(io::decode_pairs("not json\n"), FormatError);
}

namespace {

struct TwoParams {
  Parameter<float> a{Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6})};
  Parameter<float> b{Tensor<float>({4}, {-1, 0.5f, 1e-20f, 3})};
  ParameterRefs<float> refs() { return {{"w.a", &a}, {"w.b", &b}}; }
};

}  // namespace

TEST(Checkpoint, SaveLoadSaveIdentical) {
  TwoParams src;
  const auto p1 = test::temp_path("a.msnc"), p2 = test::temp_path("b.msnc");
  io::save_checkpoint(src.refs(), p1);
  TwoParams dst;
  dst.a.value = Tensor<float>::zeros({2, 3});
  dst.b.value = Tensor<float>::zeros({4});
  io::load_checkpoint(dst.refs(), p1);
  EXPECT_EQ(dst.a.value.values(), src.a.value.values());
  EXPECT_EQ(dst.b.value.values(), src.b.value.values());
  io::save_checkpoint(dst.refs(), p2);
  EXPECT_EQ(bytes_of(p1), bytes_of(p2));
}

TEST(Checkpoint, CorruptionAndVersion) {
  TwoParams src;
  auto bytes = io::encode_checkpoint(io::snapshot(src.refs()));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  EXPECT_THROW(io::decode_checkpoint(truncated), CorruptionError);
  auto flipped = bytes;
  flipped[20] ^= 0x40;
  EXPECT_THROW(io::decode_checkpoint(flipped), CorruptionError);
  auto version = bytes;
  version[4] = 2;
  EXPECT_THROW(io::decode_checkpoint(version), UnsupportedVersion);
  EXPECT_THROW(io::decode_checkpoint(std::vector<std::uint8_t>(5, 0)), CorruptionError);
}

TEST(Checkpoint, FailedLoadLeavesModelUntouched) {
  TwoParams src;
  const auto path = test::temp_path("names.msnc");
  auto stored = io::snapshot(src.refs());
  stored.push_back({"w.extra", {1}, {0.0f}});
  stored.push_back({"w.other", {1}, {0.0f}});
  io::write_file(path, io::encode_checkpoint(stored));
  TwoParams dst;
  dst.a.value = Tensor<float>::zeros({2, 3});
  try {
    io::load_checkpoint(dst.refs(), path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("w.extra"), std::string::npos);
    EXPECT_NE(msg.find("w.other"), std::string::npos);
  }
  EXPECT_EQ(dst.a.value.values(), std::vector<float>(6, 0.0f));

  auto truncated = io::encode_checkpoint(io::snapshot(src.refs()));
  truncated.resize(truncated.size() - 2);
  io::write_file(path, truncated);
  EXPECT_THROW(io::load_checkpoint(dst.refs(), path), CorruptionError);
  EXPECT_EQ(dst.a.value.values(), std::vector<float>(6, 0.0f));
}

TEST(Checkpoint, PaperTokenizerNames) {
  auto cfg = TokenizerConfig::paper();
  const auto manifest = tokenizer_manifest(cfg);
  // Same block structure, narrow widths, so the model can be materialized.
  cfg.hidden_dim = cfg.head_dim = cfg.timestep_dim = 16;
  cfg.codebook_size = 8;
  Rng rng(1);
  Init init{&rng};
  TokenizerModel<float> model(cfg, init);
  const auto path = test::temp_path("paper_names.msnc");
  io::save_tokenizer(model, path);
  auto names = io::checkpoint_names(path);
  ASSERT_EQ(names.size(), manifest.size());
  bool enc = false, cb = false, dec = false;
  for (std::size_t i = 0; i < names.size(); ++i) {
    EXPECT_EQ(names[i], manifest[i].first);
    enc |= names[i].rfind("encoder.", 0) == 0;
    cb |= names[i].rfind("codebook.", 0) == 0;
    dec |= names[i].rfind("decoder.", 0) == 0;
  }
  EXPECT_TRUE(enc && cb && dec);
}

TEST(Config, OverridesTypedAfterExistingEntry) {
  nlohmann::json cfg{{"a.n", 3u}, {"a.lr", 0.5}, {"a.flag", true}, {"a.name", "x"}, {"a.off", -2}};
  apply_override(cfg, "a.n=12");
  apply_override(cfg, "a.lr=1e-3");
  apply_override(cfg, "a.flag=false");
  apply_override(cfg, "a.name=fm");
  apply_override(cfg, "a.off=-5");
  EXPECT_EQ(cfg["a.n"].get<std::size_t>(), 12u);
  EXPECT_DOUBLE_EQ(cfg["a.lr"].get<double>(), 1e-3);
  EXPECT_FALSE(cfg["a.flag"].get<bool>());
  EXPECT_EQ(cfg["a.name"], "fm");
  EXPECT_EQ(cfg["a.off"].get<int>(), -5);
  EXPECT_THROW(apply_override(cfg, "a.n=-1"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "a.n=1.5"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "a.flag=yes"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "a.missing=1"), InvalidArgument);
  EXPECT_THROW(apply_override(cfg, "novalue"), InvalidArgument);
  EXPECT_THROW(merge_config(cfg, nlohmann::json{{"b", 1}}), InvalidArgument);
}
