#pragma once

// Central finite differences against backward(). Shared by the unit tests and
// the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "serda/autodiff.hpp"
#include "serda/losses.hpp"

namespace serda::oracle {

using Builder = std::function<ad::Var(const std::vector<ad::Var>&)>;

inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1.0}); }

// Max relative error over every input element.
inline double gradcheck(const Builder& f, const std::vector<Tensor>& inputs, double step = 1e-5) {
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(ad::Var::leaf(t));
  const ad::Var root = f(leaves);
  const ad::Gradients grads = ad::backward(root);

  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<ad::Var> cs;
    for (const auto& t : xs) cs.push_back(ad::Var::constant(t));
    return f(cs).item();
  };
  double worst = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor* g = grads.find(leaves[i]);
    for (std::size_t k = 0; k < xs[i].numel(); ++k) {
      const double orig = xs[i][k];
      xs[i][k] = orig + step;
      const double up = eval(xs);
      xs[i][k] = orig - step;
      const double down = eval(xs);
      xs[i][k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = g ? (*g)[k] : 0.0;
      worst = std::max(worst, rel_err(analytic, numeric));
    }
  }
  return worst;
}

inline Tensor random_tensor(std::mt19937_64& gen, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(gen);
  return t;
}

// Random linear functional of a non-scalar output, so every output element
// contributes to the checked gradient.
inline ad::Var contract(const ad::Var& y, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return ad::sum(ad::mul(y, ad::Var::constant(random_tensor(gen, y.shape()))));
}

struct GradCase {
  std::string name;
  std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
  Builder f;
};

// Every differentiable op and every loss.
inline std::vector<GradCase> grad_cases() {
  using V = std::vector<ad::Var>;
  using T = std::vector<Tensor>;
  std::vector<GradCase> c;
  auto one = [](Shape s, double lo = -2.0, double hi = 2.0) {
    return [s, lo, hi](std::mt19937_64& g) { return T{random_tensor(g, s, lo, hi)}; };
  };

  c.push_back({"matmul", [](auto& g) { return T{random_tensor(g, {3, 4}), random_tensor(g, {4, 2})}; },
               [](const V& x) { return contract(ad::matmul(x[0], x[1]), 1); }});
  c.push_back({"transpose", one({3, 2}), [](const V& x) { return contract(ad::transpose(x[0]), 2); }});
  c.push_back({"add", [](auto& g) { return T{random_tensor(g, {2, 3}), random_tensor(g, {2, 3})}; },
               [](const V& x) { return contract(ad::add(x[0], x[1]), 3); }});
  c.push_back({"sub", [](auto& g) { return T{random_tensor(g, {2, 3}), random_tensor(g, {2, 3})}; },
               [](const V& x) { return contract(ad::sub(x[0], x[1]), 4); }});
  c.push_back({"mul", [](auto& g) { return T{random_tensor(g, {2, 3}), random_tensor(g, {2, 3})}; },
               [](const V& x) { return contract(ad::mul(x[0], x[1]), 5); }});
  c.push_back({"mul_shared_leaf", one({4}), [](const V& x) { return ad::sum(ad::mul(x[0], x[0])); }});
  c.push_back({"scale", one({5}), [](const V& x) { return contract(ad::scale(x[0], -1.7), 6); }});
  c.push_back({"add_row_bias", [](auto& g) { return T{random_tensor(g, {3, 4}), random_tensor(g, {4})}; },
               [](const V& x) { return contract(ad::add_row_bias(x[0], x[1]), 7); }});
  c.push_back({"relu", one({3, 4}), [](const V& x) { return contract(ad::relu(x[0]), 8); }});
  c.push_back({"gelu", one({3, 4}), [](const V& x) { return contract(ad::gelu(x[0]), 9); }});
  c.push_back({"exp", one({6}), [](const V& x) { return contract(ad::exp(x[0]), 10); }});
  c.push_back({"log", one({6}, 0.1, 2.0), [](const V& x) { return contract(ad::log(x[0]), 11); }});
  c.push_back({"log_clamped", one({6}, 0.1, 2.0), [](const V& x) { return contract(ad::log_clamped(x[0], 1e-12), 12); }});
  c.push_back({"sum", one({2, 3}), [](const V& x) { return ad::scale(ad::sum(x[0]), 0.3); }});
  c.push_back({"sum_axis0", one({3, 4}), [](const V& x) { return contract(ad::sum(x[0], 0), 13); }});
  c.push_back({"sum_axis1", one({3, 4}), [](const V& x) { return contract(ad::sum(x[0], 1), 14); }});
  c.push_back({"mean", one({2, 3}), [](const V& x) { return ad::mul(ad::mean(x[0]), ad::mean(x[0])); }});
  c.push_back({"mean_axis0", one({3, 4}), [](const V& x) { return contract(ad::mean(x[0], 0), 15); }});
  c.push_back({"mean_axis1", one({3, 4}), [](const V& x) { return contract(ad::mean(x[0], 1), 16); }});
  c.push_back({"softmax", one({3, 5}), [](const V& x) { return contract(ad::softmax(x[0]), 17); }});
  c.push_back({"log_softmax", one({3, 5}), [](const V& x) { return contract(ad::log_softmax(x[0]), 18); }});
  c.push_back({"l2_normalize", one({3, 4}), [](const V& x) { return contract(ad::l2_normalize(x[0]), 19); }});
  c.push_back({"reshape", one({2, 6}), [](const V& x) { return contract(ad::reshape(x[0], {3, 4}), 20); }});
  c.push_back({"slice_cols", one({3, 5}), [](const V& x) { return contract(ad::slice_cols(x[0], 1, 4), 21); }});
  c.push_back({"concat_cols", [](auto& g) { return T{random_tensor(g, {3, 2}), random_tensor(g, {3, 3})}; },
               [](const V& x) { return contract(ad::concat_cols(x), 22); }});
  c.push_back({"stack_rows", [](auto& g) { return T{random_tensor(g, {4}), random_tensor(g, {4})}; },
               [](const V& x) { return contract(ad::stack_rows(x), 23); }});
  c.push_back({"concat_rows", [](auto& g) { return T{random_tensor(g, {2, 3}), random_tensor(g, {1, 3})}; },
               [](const V& x) { return contract(ad::concat_rows(x), 24); }});
  c.push_back({"pick", one({4, 3}), [](const V& x) {
                 const int idx[] = {2, 0, 1, 2};
                 return contract(ad::pick(x[0], idx), 25);
               }});
  c.push_back({"layer_norm",
               [](auto& g) { return T{random_tensor(g, {3, 5}), random_tensor(g, {5}), random_tensor(g, {5})}; },
               [](const V& x) { return contract(ad::layer_norm(x[0], x[1], x[2]), 26); }});
  c.push_back({"frames", one({11, 2}), [](const V& x) { return contract(ad::frames(x[0], 3, 2), 27); }});
  c.push_back({"mix",
               [](auto& g) { return T{random_tensor(g, {2, 3}), random_tensor(g, {2, 3}), random_tensor(g, {2})}; },
               [](const V& x) {
                 const ad::Var states[] = {x[0], x[1]};
                 return contract(ad::mix(states, x[2]), 28);
               }});

  // losses
  c.push_back({"emotion_ce", one({6, 2}), [](const V& x) {
                 const int labels[] = {0, 1, 1, 0, 1, 0};
                 return losses::emotion_ce(x[0], labels);
               }});
  c.push_back({"aug_ce", one({8, 5}), [](const V& x) {
                 const int labels[] = {0, 1, 2, 3, 4, 4, 2, 0};
                 return losses::aug_ce(x[0], labels);
               }});
  c.push_back({"info_nce_cross_view", [](auto& g) { return T{random_tensor(g, {4, 3}), random_tensor(g, {4, 3})}; },
               [](const V& x) { return losses::info_nce(x[0], x[1]); }});
  c.push_back({"info_nce_one_direction",
               [](auto& g) { return T{random_tensor(g, {4, 3}), random_tensor(g, {4, 3})}; },
               [](const V& x) { return losses::info_nce(x[0], x[1], {0.3, false, losses::NceDenominator::CrossView}); }});
  c.push_back({"info_nce_all_views", [](auto& g) { return T{random_tensor(g, {4, 3}), random_tensor(g, {4, 3})}; },
               [](const V& x) { return losses::info_nce(x[0], x[1], {0.5, true, losses::NceDenominator::AllViews}); }});
  c.push_back({"im_loss", one({6, 2}), [](const V& x) { return losses::im_loss(x[0]); }});
  c.push_back({"im_loss_c4", one({5, 4}), [](const V& x) { return losses::im_loss(x[0]); }});
  c.push_back({"total_loss",
               [](auto& g) { return T{random_tensor(g, {4, 2}), random_tensor(g, {4, 5}), random_tensor(g, {2, 3}),
                                      random_tensor(g, {2, 3})}; },
               [](const V& x) {
                 const int emo[] = {0, 1, 1, 0};
                 const int aug[] = {4, 1, 0, 3};
                 losses::LossParts p;
                 p.emo = losses::emotion_ce(x[0], emo);
                 p.aug = losses::aug_ce(x[1], aug);
                 p.cont = losses::info_nce(x[2], x[3]);
                 p.im = losses::im_loss(x[0]);
                 return losses::total_loss(p, {}, true);
               }});
  return c;
}

}  // namespace serda::oracle
