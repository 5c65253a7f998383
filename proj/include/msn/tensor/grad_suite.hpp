#pragma once

// Finite-difference checks for every differentiable op, plus a full
// transformer block, in double precision with a fixed seed.

#include <string>
#include <vector>

#include "msn/core/rng.hpp"
#include "msn/lm/loss.hpp"
#include "msn/nn/transformer.hpp"
#include "msn/tensor/grad_check.hpp"

namespace msn {

struct GradCase {
  std::string name;
  ScalarFn<double> fn;
  std::vector<Tensor<double>> inputs;
  double tolerance;
  double eps = 1e-5;
};

struct GradCaseResult {
  std::string name;
  double max_rel_error;
  double tolerance;
  bool passed() const { return max_rel_error < tolerance; }
};

namespace detail {

// sum(y * R) for a fixed random R.
inline Tensor<double> random_projection(const Tensor<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  auto r = Tensor<double>::zeros(y.shape());
  fill_normal<double>(r.mutable_data(), rng);
  return sum(mul(y, r));
}

}  // namespace detail

inline std::vector<GradCase> grad_suite(std::uint64_t seed = 1234) {
  Rng rng(seed);
  auto r = [&](Shape s) {
    auto t = Tensor<double>::zeros(std::move(s), true);
    fill_normal<double>(t.mutable_data(), rng);
    return t;
  };
  auto positive = [&](Shape s) {
    auto t = r(std::move(s));
    for (auto& v : t.mutable_data()) v = std::abs(v) + 0.5;
    return t;
  };
  auto proj = [](const Tensor<double>& y) { return detail::random_projection(y, 99); };
  const double op_tol = 1e-5;
  std::vector<std::int32_t> ids{2, 0, 3, 2, 1, 3};
  std::vector<GradCase> cases{
      {"add", [=](const auto& in) { return proj(add(in[0], in[1])); }, {r({2, 3, 4}), r({3, 4})}, op_tol},
      {"sub", [=](const auto& in) { return proj(sub(in[0], in[1])); }, {r({2, 3, 4}), r({4})}, op_tol},
      {"mul", [=](const auto& in) { return proj(mul(in[0], in[1])); }, {r({2, 3, 4}), r({3, 4})}, op_tol},
      {"scale", [=](const auto& in) { return proj(scale(in[0], -1.7)); }, {r({5})}, op_tol},
      {"gelu", [=](const auto& in) { return proj(gelu(in[0])); }, {r({2, 5})}, op_tol},
      {"exp", [=](const auto& in) { return proj(exp(in[0])); }, {r({2, 5})}, op_tol},
      {"log", [=](const auto& in) { return proj(log(in[0])); }, {positive({2, 5})}, op_tol},
      {"square", [=](const auto& in) { return proj(square(in[0])); }, {r({2, 5})}, op_tol},
      {"sum", [](const auto& in) { return scale(sum(in[0]), 0.3); }, {r({3, 2})}, op_tol},
      {"mean", [](const auto& in) { return mean(square(in[0])); }, {r({3, 2})}, op_tol},
      {"matmul", [=](const auto& in) { return proj(matmul(in[0], in[1])); }, {r({2, 3, 4}), r({4, 5})}, op_tol},
      {"matmul_bt", [=](const auto& in) { return proj(matmul(in[0], in[1], true)); }, {r({2, 3, 4}), r({5, 4})}, op_tol},
      {"matmul_batched", [=](const auto& in) { return proj(matmul(in[0], in[1])); }, {r({2, 3, 4}), r({2, 4, 3})}, op_tol},
      {"matmul_batched_bt", [=](const auto& in) { return proj(matmul(in[0], in[1], true)); },
       {r({2, 2, 3, 4}), r({2, 2, 5, 4})}, op_tol},
      {"reshape", [=](const auto& in) { return proj(reshape(in[0], {6, 2})); }, {r({3, 4})}, op_tol},
      {"softmax", [=](const auto& in) { return proj(softmax(in[0])); }, {r({2, 5})}, op_tol},
      {"softmax_causal", [=](const auto& in) { return proj(softmax(in[0], true)); }, {r({2, 4, 4})}, op_tol},
      {"layer_norm", [=](const auto& in) { return proj(layer_norm(in[0], in[1], in[2])); }, {r({2, 3, 6}), r({6}), r({6})},
       op_tol},
      {"embedding", [=](const auto& in) { return proj(embedding(in[0], std::span<const std::int32_t>(ids), {2, 3})); },
       {r({4, 3})}, op_tol},
      {"concat", [=](const auto& in) { return proj(concat_last(in[0], in[1])); }, {r({2, 3, 2}), r({2, 3, 4})}, op_tol},
      {"broadcast_steps", [=](const auto& in) { return proj(broadcast_steps(in[0], 3)); }, {r({2, 4})}, op_tol},
      {"split_heads", [=](const auto& in) { return proj(split_heads(in[0], 2)); }, {r({2, 3, 4})}, op_tol},
      {"merge_heads", [=](const auto& in) { return proj(merge_heads(in[0])); }, {r({2, 2, 3, 2})}, op_tol},
  };
  {
    std::vector<std::int32_t> targets{1, 4, kIgnoreTarget, 0, 2, 3};
    std::vector<float> weights{1.0f, 10.0f, 1.0f, 0.0f, 10.0f, 1.0f};
    cases.push_back({"weighted_ce_zloss",
                     [=](const auto& in) {
                       // A large z-loss coefficient so both terms matter at this tolerance.
                       return weighted_ce_zloss(in[0], targets, weights, 0.1).total;
                     },
                     {r({2, 3, 5})},
                     op_tol});
  }
  {
    TransformerConfig tc{1, 8, 4, true, 2, 8};
    Rng init_rng = substream(seed, 7);
    Init init{&init_rng, false};
    auto block = std::make_shared<TransformerBlock<double>>(tc, init);
    ParameterRefs<double> params;
    block->collect(params, "block");
    std::vector<Tensor<double>> inputs{r({2, 3, 8})};
    for (auto& p : params) {
      // Perturb the unit/zero layer-norm and bias initialisation so every
      // path carries a generic gradient.
      for (auto& v : p.param->value.mutable_data()) v += 0.1 * std::normal_distribution<double>()(rng);
      inputs.push_back(p.param->value);
    }
    cases.push_back({"transformer_block", [block](const auto& in) { return detail::random_projection((*block)(in[0], true), 99); },
                     std::move(inputs), 1e-4});
  }
  return cases;
}

inline std::vector<GradCaseResult> run_grad_suite(std::uint64_t seed = 1234) {
  std::vector<GradCaseResult> out;
  for (auto& c : grad_suite(seed)) out.push_back({c.name, grad_check<double>(c.fn, c.inputs, c.eps), c.tolerance});
  return out;
}

}  // namespace msn
