#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "msn/io/checkpoint.hpp"
#include "msn/io/metrics.hpp"
#include "msn/nn/adamw.hpp"
#include "msn/tokenizer/model.hpp"

namespace msn {

struct StepLosses {
  double total = 0.0;
  double decoder = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

struct TokenizerTrainingReport {
  std::vector<StepLosses> steps;
  io::MetricsSink metrics;  // one row per epoch per metric
  std::size_t epochs_completed = 0;
  std::size_t restarts = 0;
  bool diverged = false;
  std::string divergence_message;
};

// One optimisation step's forward pass on a [B, T, D] batch.
template <class T>
struct TokenizerForward {
  Tensor<T> total;
  Tensor<T> decoder_loss;
  QuantizationResult<T> quant;
  Tensor<T> encoded;
};

template <class T>
TokenizerForward<T> tokenizer_forward(TokenizerModel<T>& model, const Tensor<T>& z, Rng& rng) {
  const auto& cfg = model.config();
  TokenizerForward<T> f;
  f.encoded = model.encoder()(z);
  f.quant = quantize(f.encoded, model.codebook());
  auto cond = straight_through(f.encoded, f.quant.quantized);
  const std::size_t batch = z.dim(0), per = z.numel() / batch;
  if (cfg.objective == Objective::flow_matching) {
    std::vector<T> xt(z.numel()), ut(z.numel());
    std::vector<double> ts(batch);
    const OtCfmConfig flow = cfg.flow();
    for (std::size_t b = 0; b < batch; ++b) {
      auto s = sample_path<T>(z.data().subspan(b * per, per), rng, flow);
      ts[b] = s.t;
      std::copy(s.xt.begin(), s.xt.end(), xt.begin() + static_cast<std::ptrdiff_t>(b * per));
      std::copy(s.ut.begin(), s.ut.end(), ut.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    auto v = dit_forward(model.decoder(), cfg.objective, Tensor<T>(z.shape(), std::move(xt)), ts, cond);
    f.decoder_loss = cfm_loss(v, Tensor<T>(z.shape(), std::move(ut)));
  } else {
    auto zhat = dit_forward<T>(model.decoder(), cfg.objective, Tensor<T>(), {}, cond);
    f.decoder_loss = mean(square(sub(zhat, z)));
  }
  f.total = add(add(f.decoder_loss, scale(f.quant.codebook_loss, static_cast<T>(cfg.codebook_weight))),
                scale(f.quant.commitment_loss, static_cast<T>(cfg.beta)));
  return f;
}

// Minibatch AdamW training.  Per step: encode, quantize with straight-through
// gradients, decoder loss (CFM or MSE) + codebook + beta * commitment, update,
// then codebook maintenance.  A non-finite loss stops training and restores
// the parameters of the last completed epoch (written to `checkpoint_path`
// when one is given).
template <class T>
TokenizerTrainingReport train_tokenizer(const LatentDataset& data, TokenizerModel<T>& model,
                                        const std::string& checkpoint_path = {}) {
  const auto& cfg = model.config();
  if (data.size() == 0) throw InvalidArgument("train_tokenizer: empty dataset");
  if (data.dim != cfg.latent_dim || data.steps > cfg.seq_len) {
    throw ShapeError("train_tokenizer: dataset frames " + std::to_string(data.steps) + "x" + std::to_string(data.dim) +
                     " do not fit model " + std::to_string(cfg.seq_len) + "x" + std::to_string(cfg.latent_dim));
  }
  TokenizerTrainingReport report;
  auto params = model.parameters();
  AdamW<T> opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = substream(cfg.seed, 0x7a11);
  auto last_good = io::snapshot(params);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per = data.frame_size();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    StepLosses sum;
    std::size_t n_steps = 0;
    std::vector<std::size_t> hist(cfg.codebook_size, 0);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps && step >= cfg.max_steps) break;
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<T> zv(count * per);
      for (std::size_t b = 0; b < count; ++b) {
        auto s = data.sample(order[start + b]);
        std::copy(s.begin(), s.end(), zv.begin() + static_cast<std::ptrdiff_t>(b * per));
      }
      Tensor<T> z({count, data.steps, data.dim}, std::move(zv));
      auto f = tokenizer_forward(model, z, rng);
      StepLosses l{static_cast<double>(f.total.item()), static_cast<double>(f.decoder_loss.item()),
                   static_cast<double>(f.quant.codebook_loss.item()), static_cast<double>(f.quant.commitment_loss.item())};
      if (!std::isfinite(l.total)) {
        io::restore(params, last_good, "last good state");
        if (!checkpoint_path.empty()) io::save_checkpoint(params, checkpoint_path);
        report.diverged = true;
        report.divergence_message = "loss became non-finite at step " + std::to_string(step);
        return report;
      }
      f.total.backward();
      opt.step();
      opt.zero_grad();
      report.restarts += codebook_maintenance(model.codebook(), std::span<const std::int32_t>(f.quant.indices),
                                              f.encoded.data(), rng)
                             .size();
      for (auto id : f.quant.indices) ++hist[static_cast<std::size_t>(id)];
      report.steps.push_back(l);
      sum.total += l.total;
      sum.decoder += l.decoder;
      sum.codebook += l.codebook;
      sum.commitment += l.commitment;
      ++n_steps;
      ++step;
    }
    if (n_steps == 0) break;
    const double inv = 1.0 / static_cast<double>(n_steps);
    report.metrics.add(step, "train", "loss", sum.total * inv);
    report.metrics.add(step, "train", "decoder_loss", sum.decoder * inv);
    report.metrics.add(step, "train", "codebook_loss", sum.codebook * inv);
    report.metrics.add(step, "train", "commitment_loss", sum.commitment * inv);
    report.metrics.add(step, "train", "perplexity", codebook_perplexity(hist));
    ++report.epochs_completed;
    last_good = io::snapshot(params);
    if (!checkpoint_path.empty()) io::save_checkpoint(params, checkpoint_path);
  }
  return report;
}

}  // namespace msn
