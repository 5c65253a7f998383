#pragma once

// Nearest-neighbour vector quantization with straight-through gradients,
// VQ-VAE codebook/commitment losses and dead-entry restarts.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "msn/nn/layers.hpp"

namespace msn {

struct CodebookConfig {
  std::size_t size = 256;  // K
  std::size_t dim = 16;    // D
  double usage_decay = 0.99;
  double restart_threshold = 1e-3;

  static CodebookConfig paper_preset() { return {8196, 64, 0.99, 1e-3}; }
};

template <class T>
class Codebook {
 public:
  Codebook() = default;
  Codebook(const CodebookConfig& cfg, Init& init)
      : cfg_(cfg), entries_(init.normal<T>({cfg.size, cfg.dim}, 1.0)) {
    if (cfg.size == 0 || cfg.dim == 0) throw InvalidArgument("codebook size and dim must be positive");
    usage_ = init.meta ? Parameter<T>{Tensor<T>::meta({cfg.size})} : Parameter<T>{Tensor<T>::full({cfg.size}, T(1))};
    usage_.trainable = false;
  }

  std::size_t size() const { return cfg_.size; }
  std::size_t dim() const { return cfg_.dim; }
  const CodebookConfig& config() const { return cfg_; }

  Parameter<T>& entries() { return entries_; }
  const Tensor<T>& table() const { return entries_.value; }
  std::span<const T> entry(std::size_t k) const { return table().data().subspan(k * cfg_.dim, cfg_.dim); }

  // Exponentially decayed usage per entry; starts at 1 for every entry.
  std::span<T> usage() { return usage_.value.mutable_data(); }
  std::span<const T> usage() const { return usage_.value.data(); }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".entries", &entries_});
    out.push_back({prefix + ".usage", &usage_});
  }

 private:
  CodebookConfig cfg_;
  Parameter<T> entries_;
  Parameter<T> usage_;
};

template <class T>
struct QuantizationResult {
  std::vector<std::int32_t> indices;
  Tensor<T> quantized;        // entries[indices], differentiable wrt the codebook
  Tensor<T> codebook_loss;    // mean ||sg(e) - q||^2
  Tensor<T> commitment_loss;  // mean ||e - sg(q)||^2
};

// argmin_k ||e_i - c_k||^2 per row, ties to the lowest k.  The ||e||^2 term is
// constant per row and dropped.
template <class T>
std::vector<std::int32_t> nearest_entries(std::span<const T> rows, std::size_t dim, const Tensor<T>& table) {
  const std::size_t k_total = table.dim(0);
  const auto& cb = table.values();
  std::vector<T> norms(k_total, T(0));
  for (std::size_t k = 0; k < k_total; ++k) {
    for (std::size_t j = 0; j < dim; ++j) norms[k] += cb[k * dim + j] * cb[k * dim + j];
  }
  const std::size_t n = rows.size() / dim;
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* e = rows.data() + i * dim;
    T best = std::numeric_limits<T>::infinity();
    std::int32_t arg = 0;
    for (std::size_t k = 0; k < k_total; ++k) {
      const T* c = cb.data() + k * dim;
      T dot = T(0);
      for (std::size_t j = 0; j < dim; ++j) dot += e[j] * c[j];
      const T d = norms[k] - T(2) * dot;
      if (d < best) {
        best = d;
        arg = static_cast<std::int32_t>(k);
      }
    }
    out[i] = arg;
  }
  return out;
}

// e: [..., D] encoder outputs.
template <class T>
QuantizationResult<T> quantize(const Tensor<T>& e, const Codebook<T>& cb) {
  if (e.rank() == 0 || e.shape().back() != cb.dim()) {
    throw ShapeError("quantize: input " + shape_str(e.shape()) + " does not match codebook dim " +
                     std::to_string(cb.dim()));
  }
  if (e.numel() == 0) throw InvalidArgument("quantize: empty input");
  QuantizationResult<T> r;
  r.indices = nearest_entries<T>(e.data(), cb.dim(), cb.table());
  Shape ids_shape(e.shape().begin(), e.shape().end() - 1);
  r.quantized = embedding(cb.table(), std::span<const std::int32_t>(r.indices), ids_shape);
  r.codebook_loss = mean(square(sub(r.quantized, e.detach())));
  r.commitment_loss = mean(square(sub(e, r.quantized.detach())));
  return r;
}

// Entries looked up without gradient; used on the decode path.
template <class T>
Tensor<T> lookup_entries(const Codebook<T>& cb, std::span<const std::int32_t> indices, Shape ids_shape) {
  for (auto id : indices) {
    if (id < 0 || static_cast<std::size_t>(id) >= cb.size()) {
      throw InvalidArgument("token index " + std::to_string(id) + " outside codebook of size " +
                            std::to_string(cb.size()));
    }
  }
  NoGradGuard no_grad;
  return embedding(cb.table(), indices, std::move(ids_shape));
}

// Updates the decayed usage with this batch's counts and re-seeds every entry
// whose usage fell below the threshold with a random row of `encoded`.
// Returns the re-seeded entry ids.
template <class T>
std::vector<std::size_t> codebook_maintenance(Codebook<T>& cb, std::span<const std::int32_t> indices,
                                              std::span<const T> encoded, Rng& rng) {
  const auto& cfg = cb.config();
  std::vector<double> counts(cb.size(), 0.0);
  for (auto id : indices) counts[static_cast<std::size_t>(id)] += 1.0;
  auto usage = cb.usage();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    usage[k] = static_cast<T>(cfg.usage_decay * static_cast<double>(usage[k]) + (1.0 - cfg.usage_decay) * counts[k]);
  }
  std::vector<std::size_t> restarted;
  if (cfg.restart_threshold <= 0.0 || encoded.empty()) return restarted;
  const std::size_t n_rows = encoded.size() / cb.dim();
  std::uniform_int_distribution<std::size_t> pick(0, n_rows - 1);
  auto table = cb.entries().value.mutable_data();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    if (static_cast<double>(usage[k]) >= cfg.restart_threshold) continue;
    const std::size_t row = pick(rng);
    std::copy_n(encoded.data() + row * cb.dim(), cb.dim(), table.data() + k * cb.dim());
    usage[k] = T(1);
    restarted.push_back(k);
  }
  return restarted;
}

// exp(entropy) of the empirical index distribution.
inline double codebook_perplexity(std::span<const std::size_t> histogram) {
  double total = 0.0;
  for (auto c : histogram) total += static_cast<double>(c);
  if (histogram.empty() || total <= 0.0) throw InvalidArgument("codebook_perplexity: empty histogram");
  double h = 0.0;
  for (auto c : histogram) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

inline std::vector<std::size_t> index_histogram(std::span<const std::int32_t> indices, std::size_t k) {
  std::vector<std::size_t> hist(k, 0);
  for (auto id : indices) ++hist.at(static_cast<std::size_t>(id));
  return hist;
}

}  // namespace msn
