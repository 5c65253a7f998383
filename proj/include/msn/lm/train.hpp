#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include "msn/io/metrics.hpp"
#include "msn/lm/loss.hpp"
#include "msn/lm/model.hpp"
#include "msn/lm/sequence.hpp"
#include "msn/nn/adamw.hpp"

namespace msn {

// Next-token batch: inputs are ids[0..n-2], targets ids[1..n-1] with the
// target's weight.  Shorter sequences are padded with ignored targets.
struct LmBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  std::vector<float> weights;
};

inline LmBatch make_lm_batch(std::span<const FusionSequence* const> seqs) {
  LmBatch b;
  b.batch = seqs.size();
  for (const auto* s : seqs) {
    if (s->size() < 2) throw InvalidArgument("lm batch: sequences need at least two tokens");
    b.length = std::max(b.length, s->size() - 1);
  }
  b.inputs.assign(b.batch * b.length, 0);
  b.targets.assign(b.batch * b.length, kIgnoreTarget);
  b.weights.assign(b.batch * b.length, 0.0f);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& s = *seqs[i];
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      b.inputs[i * b.length + t] = s.ids[t];
      b.targets[i * b.length + t] = s.ids[t + 1];
      b.weights[i * b.length + t] = s.weights[t + 1];
    }
  }
  return b;
}

template <class T>
LossTerms<T> lm_loss(const LanguageModel<T>& model, const LmBatch& b, double c_z = kDefaultZLoss) {
  return weighted_ce_zloss(model.forward(b.inputs, b.batch), b.targets, b.weights, c_z);
}

struct LmTrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double c_z = kDefaultZLoss;
  std::uint64_t seed = 0;
};

struct LmTrainingReport {
  io::MetricsSink metrics;  // one row per epoch per metric
  std::vector<double> losses;
  std::size_t epochs_completed = 0;
};

// Builds training example `index`; the rng drives per-draw randomness such as
// the pretraining order swap.
using ExampleSource = std::function<FusionSequence(std::size_t index, Rng& rng)>;

template <class T>
LmTrainingReport train_lm(LanguageModel<T>& model, const ExampleSource& source, std::size_t n_examples,
                          const LmTrainConfig& cfg, const std::string& split = "train") {
  if (n_examples == 0) throw InvalidArgument("train_lm: no examples");
  if (cfg.batch_size == 0) throw InvalidArgument("train_lm: batch_size must be positive");
  auto params = model.parameters();
  ParameterRefs<T> trainable;
  for (auto& p : params) {
    if (p.param->trainable) trainable.push_back(p);
  }
  AdamW<T> opt(trainable, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = substream(cfg.seed, 0x1a11);
  std::vector<std::size_t> order(n_examples);
  std::iota(order.begin(), order.end(), 0);
  LmTrainingReport report;
  std::size_t step = 0, cursor = n_examples;
  double sum_loss = 0.0, sum_z = 0.0;
  std::size_t in_epoch = 0;
  auto flush = [&] {
    if (in_epoch == 0) return;
    report.metrics.add(step, split, "loss", sum_loss / static_cast<double>(in_epoch));
    report.metrics.add(step, split, "zloss", sum_z / static_cast<double>(in_epoch));
    ++report.epochs_completed;
    sum_loss = sum_z = 0.0;
    in_epoch = 0;
  };
  while (step < cfg.steps) {
    if (cursor >= n_examples) {
      flush();
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t count = std::min(cfg.batch_size, n_examples - cursor);
    std::vector<FusionSequence> seqs;
    for (std::size_t i = 0; i < count; ++i) seqs.push_back(source(order[cursor + i], rng));
    cursor += count;
    std::vector<const FusionSequence*> ptrs;
    for (auto& s : seqs) ptrs.push_back(&s);
    auto terms = lm_loss(model, make_lm_batch(ptrs), cfg.c_z);
    const double total = static_cast<double>(terms.total.item());
    if (!std::isfinite(total)) throw NumericFault("train_lm: loss became non-finite at step " + std::to_string(step));
    terms.total.backward();
    opt.step();
    opt.zero_grad();
    report.losses.push_back(total);
    sum_loss += static_cast<double>(terms.loss.item());
    sum_z += static_cast<double>(terms.zloss.item());
    ++in_epoch;
    ++step;
  }
  flush();
  return report;
}

// Fraction of weighted target positions whose argmax prediction is correct.
template <class T>
double next_token_accuracy(const LanguageModel<T>& model, const std::vector<FusionSequence>& seqs,
                           std::size_t batch_size = 16) {
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  for (std::size_t start = 0; start < seqs.size(); start += batch_size) {
    std::vector<const FusionSequence*> ptrs;
    for (std::size_t i = start; i < std::min(seqs.size(), start + batch_size); ++i) ptrs.push_back(&seqs[i]);
    auto b = make_lm_batch(ptrs);
    auto logits = model.forward(b.inputs, b.batch);
    const std::size_t v = logits.shape().back();
    const auto& x = logits.values();
    for (std::size_t r = 0; r < b.targets.size(); ++r) {
      if (b.targets[r] == kIgnoreTarget || b.weights[r] <= 0.0f) continue;
      const auto* row = x.data() + r * v;
      const auto arg = static_cast<std::int32_t>(std::max_element(row, row + v) - row);
      correct += arg == b.targets[r];
      ++total;
    }
  }
  if (total == 0) throw InvalidArgument("next_token_accuracy: no weighted targets");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace msn
