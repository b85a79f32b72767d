#include "serda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "serda/error.hpp"

namespace serda::ad {

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> parents, BackwardRule rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->rule = std::move(rule);
  }
  return Var(std::move(node));
}

const Tensor* Gradients::find(const Var& v) const {
  auto it = grads_.find(v.node());
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::at(const Var& v) const {
  const Tensor* g = find(v);
  if (!g) throw ContractError("no gradient recorded for this variable");
  return *g;
}

Gradients backward(const Var& root) {
  if (!root.defined() || root.value().numel() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " +
                        (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  Gradients result;
  if (!root.requires_grad()) return result;

  // Iterative post-order DFS over nodes that need gradients.
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root_node = root.node_ptr().get();
  stack.emplace_back(root_node, 0);
  visited.insert(root_node);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, Tensor> grads;
  grads.emplace(root_node, Tensor(root.shape(), 1.0));
  std::vector<Tensor*> accumulators;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto git = grads.find(node);
    if (git == grads.end()) continue;
    if (node->parents.empty()) {
      result.grads_.emplace(node, std::move(git->second));
      grads.erase(git);
      continue;
    }
    accumulators.clear();
    for (auto& parent : node->parents) {
      if (!parent->requires_grad) {
        accumulators.push_back(nullptr);
        continue;
      }
      auto [pit, inserted] = grads.try_emplace(parent.get(), parent->value.shape(), 0.0);
      accumulators.push_back(&pit->second);
    }
    node->rule(*node, git->second, accumulators);
    grads.erase(node);
  }
  return result;
}

namespace {

void require_rank2(const Var& x, const char* op) {
  if (x.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(x.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Applies f elementwise; df(x, y) is the local derivative given input and output.
template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return Var::make(std::move(out), {x}, [df](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    const auto xin = self.parents[0]->value.data();
    const auto y = self.value.data();
    const auto gd = g.data();
    auto a = acc[0]->data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += gd[i] * df(xin[i], y[i]);
  });
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  kernels::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  return Var::make(std::move(out), {a, b}, [m, k, n](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (acc[0]) kernels::gemm_nt(g.data(), bv.data(), acc[0]->data(), m, n, k, true);
    if (acc[1]) kernels::gemm_tn(av.data(), g.data(), acc[1]->data(), k, m, n, true);
  });
}

Var transpose(const Var& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  const auto in = a.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return Var::make(std::move(out), {a}, [m, n](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_inplace(b.value());
  return Var::make(std::move(out), {a, b}, [](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (acc[0]) acc[0]->add_inplace(g);
    if (acc[1]) acc[1]->add_inplace(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return Var::make(std::move(out), {a, b}, [](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (acc[0]) acc[0]->add_inplace(g);
    if (acc[1]) {
      auto d = acc[1]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return Var::make(std::move(out), {a, b}, [](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    const auto av = self.parents[0]->value.data();
    const auto bv = self.parents[1]->value.data();
    if (acc[0]) {
      auto d = acc[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (acc[1]) {
      auto d = acc[1]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return Var::make(std::move(out), {a}, [factor](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_row_bias(const Var& x, const Var& bias) {
  require_rank2(x, "add_row_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.value().rank() != 1 || bias.shape()[0] != n) {
    throw DimensionError("add_row_bias shape mismatch: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  }
  Tensor out = x.value();
  const auto bd = bias.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  return Var::make(std::move(out), {x, bias}, [m, n](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (acc[0]) acc[0]->add_inplace(g);
    if (acc[1]) {
      auto d = acc[1]->data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  constexpr double inv_sqrt_2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Var exp(const Var& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  const auto d = x.value().data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw DomainError("log of nonpositive value " + std::to_string(d[i]) + " at index " + std::to_string(i));
    }
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var log_clamped(const Var& x, double eps) {
  return unary(
      x, [eps](double v) { return std::log(std::max(v, eps)); },
      [eps](double v, double) { return v > eps ? 1.0 / v : 0.0; });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return Var::make(Tensor::scalar(total), {x}, [](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    const double gv = g.item();
    for (auto& d : acc[0]->data()) d += gv;
  });
}

Var sum(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (xv.rank() == 1 && axis == 0) return sum(x);
  require_rank2(x, "sum(axis)");
  if (axis > 1) throw DimensionError("sum axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  Tensor out(Shape{axis == 0 ? n : m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += xv[i * n + j];
  return Var::make(std::move(out), {x}, [m, n, axis](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[axis == 0 ? j : i];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var mean(const Var& x, std::size_t axis) {
  const std::size_t count = x.value().rank() == 1 ? x.value().numel() : x.value().dim(axis);
  return scale(sum(x, axis), 1.0 / static_cast<double>(count));
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv), m = xv.numel() / n;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return Var::make(std::move(out), {x}, [m, n](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    const auto y = self.value.data();
    auto d = acc[0]->data();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var log_softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv), m = xv.numel() / n;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  return Var::make(std::move(out), {x}, [m, n](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    const auto y = self.value.data();
    auto d = acc[0]->data();
    for (std::size_t r = 0; r < m; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gsum;
    }
  });
}

Var l2_normalize(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv), m = xv.numel() / n;
  Tensor out(xv.shape());
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[r * n + j] * xv[r * n + j];
    if (ss == 0.0) throw DomainError("l2_normalize: zero-norm row " + std::to_string(r));
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] / norms[r];
  }
  return Var::make(std::move(out), {x},
                   [m, n, norms = std::move(norms)](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
                     if (!acc[0]) return;
                     const auto y = self.value.data();
                     auto d = acc[0]->data();
                     for (std::size_t r = 0; r < m; ++r) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
                       for (std::size_t j = 0; j < n; ++j) {
                         d[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norms[r];
                       }
                     }
                   });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::make(std::move(out), {x}, [](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                         shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.value()[i * n + begin + j];
  return Var::make(std::move(out), {x}, [m, n, w, begin](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) d[i * n + begin + j] += g[i * w + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape()[0] != m) {
      throw DimensionError("concat_cols row mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = pv[i * widths[k] + j];
    offset += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return Var::make(std::move(out), std::move(parents),
                   [m, total, widths](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
                     std::size_t off = 0;
                     for (std::size_t k = 0; k < widths.size(); ++k) {
                       if (acc[k]) {
                         auto d = acc[k]->data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < widths[k]; ++j) d[i * widths[k] + j] += g[i * total + off + j];
                       }
                       off += widths[k];
                     }
                   });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows of zero tensors");
  const std::size_t n = rows[0].value().numel();
  for (const auto& r : rows) {
    const auto& v = r.value();
    const bool row_like = v.rank() == 1 || (v.rank() == 2 && v.shape()[0] == 1);
    if (!row_like || v.numel() != n) {
      throw DimensionError("stack_rows expects equal-width rows, got " + shape_str(rows[0].shape()) + " and " +
                           shape_str(r.shape()));
    }
  }
  std::vector<Var> parents(rows.begin(), rows.end());
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = rows[i].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return Var::make(std::move(out), std::move(parents), [n](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (!acc[i]) continue;
      auto d = acc[i]->data();
      for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.shape()[1] != n) {
      throw DimensionError("concat_rows column mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    m += p.shape()[0];
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return Var::make(std::move(out), std::move(parents), [](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < acc.size(); ++k) {
      const std::size_t len = self.parents[k]->value.numel();
      if (acc[k]) {
        auto d = acc[k]->data();
        for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
      }
      off += len;
    }
  });
}

Var pick(const Var& x, std::span<const int> index) {
  require_rank2(x, "pick");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (index.size() != m) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_str(x.shape()));
  }
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n) {
      throw DataError("pick: index " + std::to_string(index[i]) + " out of range [0, " + std::to_string(n) +
                      ") at row " + std::to_string(i));
    }
    out[i] = x.value()[i * n + static_cast<std::size_t>(index[i])];
  }
  std::vector<int> idx(index.begin(), index.end());
  return Var::make(std::move(out), {x}, [n, idx = std::move(idx)](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < idx.size(); ++i) d[i * n + static_cast<std::size_t>(idx[i])] += g[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = last_dim(xv), m = xv.numel() / n;
  if (gamma.value().rank() != 1 || gamma.shape()[0] != n || beta.shape() != gamma.shape()) {
    throw DimensionError("layer_norm parameter shape mismatch: x " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.numel());
  std::vector<double> rstd(m);
  const auto gd = gamma.value().data();
  const auto bd = beta.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * rstd[r];
      out[r * n + j] = gd[j] * xhat[r * n + j] + bd[j];
    }
  }
  return Var::make(std::move(out), {x, gamma, beta},
                   [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](const Node& self, const Tensor& g,
                                                                          std::span<Tensor* const> acc) {
                     const auto gam = self.parents[1]->value.data();
                     if (acc[1]) {
                       auto d = acc[1]->data();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j] * xhat[r * n + j];
                     }
                     if (acc[2]) {
                       auto d = acc[2]->data();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
                     }
                     if (acc[0]) {
                       auto d = acc[0]->data();
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t r = 0; r < m; ++r) {
                         double mean_dy = 0.0, mean_dy_xhat = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dy = g[r * n + j] * gam[j];
                           mean_dy += dy;
                           mean_dy_xhat += dy * xhat[r * n + j];
                         }
                         mean_dy *= inv_n;
                         mean_dy_xhat *= inv_n;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dy = g[r * n + j] * gam[j];
                           d[r * n + j] += rstd[r] * (dy - mean_dy - xhat[r * n + j] * mean_dy_xhat);
                         }
                       }
                     }
                   });
}

Var frames(const Var& x, std::size_t kernel, std::size_t stride) {
  require_rank2(x, "frames");
  const std::size_t t = x.shape()[0], c = x.shape()[1];
  if (kernel == 0 || stride == 0) throw DimensionError("frames: kernel and stride must be positive");
  if (t < kernel) {
    throw DimensionError("frames: input " + shape_str(x.shape()) + " shorter than kernel " + std::to_string(kernel));
  }
  const std::size_t t_out = (t - kernel) / stride + 1;
  const std::size_t width = kernel * c;
  Tensor out({t_out, width});
  const auto in = x.value().data();
  for (std::size_t i = 0; i < t_out; ++i) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i * stride * c), width,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return Var::make(std::move(out), {x}, [t_out, width, stride, c](const Node&, const Tensor& g, std::span<Tensor* const> acc) {
    if (!acc[0]) return;
    auto d = acc[0]->data();
    for (std::size_t i = 0; i < t_out; ++i) {
      double* dst = d.data() + i * stride * c;
      const double* src = g.data().data() + i * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

Var mix(std::span<const Var> states, const Var& weights) {
  if (states.empty()) throw DimensionError("mix of zero states");
  if (weights.value().rank() != 1 || weights.shape()[0] != states.size()) {
    throw DimensionError("mix: weights " + shape_str(weights.shape()) + " for " + std::to_string(states.size()) +
                         " states");
  }
  for (const auto& s : states) {
    if (s.shape() != states[0].shape()) {
      throw DimensionError("mix: state shape mismatch " + shape_str(states[0].shape()) + " vs " + shape_str(s.shape()));
    }
  }
  Tensor out(states[0].shape());
  const auto w = weights.value().data();
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto sv = states[k].value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += w[k] * sv[i];
  }
  std::vector<Var> parents(states.begin(), states.end());
  parents.push_back(weights);
  const std::size_t count = states.size();
  return Var::make(std::move(out), std::move(parents), [count](const Node& self, const Tensor& g, std::span<Tensor* const> acc) {
    const auto w = self.parents[count]->value.data();
    for (std::size_t k = 0; k < count; ++k) {
      const auto sv = self.parents[k]->value.data();
      if (acc[k]) {
        auto d = acc[k]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += w[k] * g[i];
      }
      if (acc[count]) {
        double dot = 0.0;
        for (std::size_t i = 0; i < sv.size(); ++i) dot += sv[i] * g[i];
        (*acc[count])[k] += dot;
      }
    }
  });
}

}  // namespace serda::ad
