#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "msn/tensor/ops.hpp"

namespace msn {

inline constexpr std::int32_t kIgnoreTarget = -1;
inline constexpr double kDefaultZLoss = 1e-4;

template <class T>
struct LossTerms {
  Tensor<T> loss;   // sum_t w_t * nll_t / sum_t w_t
  Tensor<T> zloss;  // c_z * mean_t (log Z_t)^2
  Tensor<T> total;
};

namespace detail {

// log-sum-exp and softmax of one row, in double.
inline double row_logsumexp(const double* x, std::size_t n, double* p) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = std::exp(x[j] - mx);
    z += p[j];
  }
  for (std::size_t j = 0; j < n; ++j) p[j] /= z;
  return mx + std::log(z);
}

}  // namespace detail

// logits: [..., V] holding one row per target.  Targets equal to
// kIgnoreTarget contribute to neither term.  Rows are reduced in double.
template <class T>
LossTerms<T> weighted_ce_zloss(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                               std::span<const float> weights, double c_z = kDefaultZLoss) {
  const std::size_t v = logits.shape().back();
  const std::size_t rows = logits.numel() / v;
  if (targets.size() != rows || weights.size() != rows) {
    throw ShapeError("weighted_ce_zloss: " + std::to_string(rows) + " logit rows but " +
                     std::to_string(targets.size()) + " targets and " + std::to_string(weights.size()) + " weights");
  }
  std::vector<double> probs(rows * v), row(v);
  std::vector<double> lse(rows, 0.0);
  double wsum = 0.0, wnll = 0.0, zsum = 0.0;
  std::size_t counted = 0;
  const auto& x = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto tgt = targets[r];
    if (tgt == kIgnoreTarget) continue;
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= v) {
      throw InvalidArgument("weighted_ce_zloss: target " + std::to_string(tgt) + " outside vocabulary of " +
                            std::to_string(v));
    }
    if (!(weights[r] >= 0.0f)) throw InvalidArgument("weighted_ce_zloss: negative weight");
    for (std::size_t j = 0; j < v; ++j) row[j] = static_cast<double>(x[r * v + j]);
    lse[r] = detail::row_logsumexp(row.data(), v, probs.data() + r * v);
    const double w = weights[r];
    wsum += w;
    wnll += w * (lse[r] - row[static_cast<std::size_t>(tgt)]);
    zsum += lse[r] * lse[r];
    ++counted;
  }
  const double loss = wsum > 0.0 ? wnll / wsum : 0.0;
  const double zloss = counted ? c_z * zsum / static_cast<double>(counted) : 0.0;

  auto tg = std::vector<std::int32_t>(targets.begin(), targets.end());
  auto ws = std::vector<float>(weights.begin(), weights.end());
  auto shared_probs = std::make_shared<std::vector<double>>(std::move(probs));
  LossTerms<T> out;
  out.loss = detail::make_op<T>(OpKind::cross_entropy, {1}, {static_cast<T>(loss)}, {&logits},
                                [shared_probs, tg, ws, wsum, rows, v](detail::Node<T>& self) {
                                  auto* g = detail::grad_target(self, 0);
                                  if (!g || wsum <= 0.0) return;
                                  const double up = static_cast<double>(self.grad[0]) / wsum;
                                  for (std::size_t r = 0; r < rows; ++r) {
                                    if (tg[r] == kIgnoreTarget || ws[r] == 0.0f) continue;
                                    const double s = up * ws[r];
                                    const double* p = shared_probs->data() + r * v;
                                    T* gr = g->data() + r * v;
                                    for (std::size_t j = 0; j < v; ++j) gr[j] += static_cast<T>(s * p[j]);
                                    gr[tg[r]] -= static_cast<T>(s);
                                  }
                                });
  out.zloss = detail::make_op<T>(OpKind::cross_entropy, {1}, {static_cast<T>(zloss)}, {&logits},
                                 [shared_probs, tg, lse, c_z, counted, rows, v](detail::Node<T>& self) {
                                   auto* g = detail::grad_target(self, 0);
                                   if (!g || counted == 0) return;
                                   const double up = static_cast<double>(self.grad[0]) * c_z * 2.0 /
                                                     static_cast<double>(counted);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                     if (tg[r] == kIgnoreTarget) continue;
                                     const double s = up * lse[r];
                                     const double* p = shared_probs->data() + r * v;
                                     T* gr = g->data() + r * v;
                                     for (std::size_t j = 0; j < v; ++j) gr[j] += static_cast<T>(s * p[j]);
                                   }
                                 });
  out.total = add(out.loss, out.zloss);
  return out;
}

}  // namespace msn
