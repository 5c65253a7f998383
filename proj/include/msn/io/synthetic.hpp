#pragma once

// Synthetic stand-in for autoencoder latents: every class owns a channel-wise
// damped sinusoid pattern; samples add isotropic Gaussian noise.  One class can
// be designated bimodal, emitting +pattern or -pattern with equal probability.

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "msn/core/rng.hpp"
#include "msn/io/latent_file.hpp"

namespace msn {

struct ClassPattern {
  std::vector<double> frequency;  // cycles over the clip, per channel
  std::vector<double> damping;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

struct SyntheticLatentSpec {
  std::size_t n_classes = 4;
  std::size_t steps = 32;
  std::size_t dim = 16;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  std::optional<std::size_t> bimodal_class;
  double min_amplitude = 0.5;
  double max_amplitude = 1.5;
  // Per-sample streams start here; a held-out set shares the class patterns
  // of its training set but uses a different offset.
  std::uint64_t sample_offset = 0;

  void validate() const {
    if (n_classes < 2) throw InvalidArgument("synthetic spec: n_classes must be >= 2");
    if (steps == 0 || dim == 0) throw InvalidArgument("synthetic spec: T and D must be positive");
    if (noise_std < 0.0) throw InvalidArgument("synthetic spec: noise_std must be >= 0");
    if (bimodal_class && *bimodal_class >= n_classes) throw InvalidArgument("synthetic spec: bimodal class out of range");
    if (n_classes > 0xffff) throw InvalidArgument("synthetic spec: too many classes for u16 labels");
  }
};

inline std::vector<ClassPattern> class_patterns(const SyntheticLatentSpec& spec) {
  std::vector<ClassPattern> out;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    Rng rng = substream(spec.seed, 0x10000u + c);
    std::uniform_real_distribution<double> freq(0.5, 3.0), damp(0.0, 2.0), amp(spec.min_amplitude, spec.max_amplitude),
        phase(0.0, 2.0 * std::numbers::pi);
    ClassPattern p;
    for (std::size_t d = 0; d < spec.dim; ++d) {
      p.frequency.push_back(freq(rng));
      p.damping.push_back(damp(rng));
      p.amplitude.push_back(amp(rng));
      p.phase.push_back(phase(rng));
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<float> render_pattern(const ClassPattern& p, std::size_t steps, double sign = 1.0) {
  const std::size_t dim = p.frequency.size();
  std::vector<float> out(steps * dim);
  for (std::size_t t = 0; t < steps; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(steps);
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = p.amplitude[d] * std::exp(-p.damping[d] * u) *
                       std::sin(2.0 * std::numbers::pi * p.frequency[d] * u + p.phase[d]);
      out[t * dim + d] = static_cast<float>(sign * v);
    }
  }
  return out;
}

// Samples are ordered class-major; sample i draws from its own substream.
inline LatentDataset gen_latent_dataset(const SyntheticLatentSpec& spec, std::size_t n_per_class) {
  spec.validate();
  if (n_per_class < 1) throw InvalidArgument("gen_latent_dataset: n_per_class must be >= 1");
  const auto patterns = class_patterns(spec);
  LatentDataset ds{spec.steps, spec.dim, {}, {}};
  ds.values.reserve(spec.n_classes * n_per_class * spec.steps * spec.dim);
  std::size_t index = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++index) {
      Rng rng = substream(spec.seed, spec.sample_offset + index);
      double sign = 1.0;
      if (spec.bimodal_class && *spec.bimodal_class == c) sign = uniform01(rng) < 0.5 ? 1.0 : -1.0;
      auto sample = render_pattern(patterns[c], spec.steps, sign);
      if (spec.noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (auto& v : sample) v = static_cast<float>(static_cast<double>(v) + noise(rng));
      }
      ds.append(sample, static_cast<std::uint16_t>(c));
    }
  }
  return ds;
}

}  // namespace msn
