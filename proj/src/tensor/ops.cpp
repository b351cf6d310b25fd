// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fgd/errors.hpp"

namespace fgd::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, std::vector<double> data, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  return Tensor(std::move(node));
}

void attach(Tensor& out, std::function<void(Node&)> backward) {
  const NodePtr& node = out.node();
  node->requires_grad = true;
  node->backward = std::move(backward);
  active_tape()->record(node);
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " +
                       shape_to_string(a.shape()) + " vs " +
                       shape_to_string(b.shape()));
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_to_string(a.shape()));
  }
}

// Size of the broadcast block of b over a, or throws.
std::size_t broadcast_block(const char* op, const Tensor& a, const Tensor& b) {
  if (b.numel() == 1) return 1;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.begin(), sb.end(), sa.end() - sb.size())) {
    mismatch(op, a, b);
  }
  return b.numel();
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  Tensor result = make_output(a.shape(), std::move(out), op);
  if (tracking({&a})) {
    attach(result, [an = a.node(), deriv](Node& self) {
      if (!an->requires_grad) return;
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * deriv(an->data[i], self.data[i]);
      }
    });
  }
  return result;
}

void require_finite(const char* op, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DomainError(std::string(op) + ": non-finite result at element " +
                        std::to_string(i));
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t block = broadcast_block("add", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i % block];
  Tensor result = make_output(a.shape(), std::move(out), "add");
  if (tracking({&a, &b})) {
    attach(result, [an = a.node(), bn = b.node(), block](Node& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          g[i % block] += self.grad[i];
        }
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (b.numel() != 1) broadcast_block("sub", a, b);
  return add(a, neg(b));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t block = broadcast_block("mul", a, b);
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i % block];
  Tensor result = make_output(a.shape(), std::move(out), "mul");
  if (tracking({&a, &b})) {
    attach(result, [an = a.node(), bn = b.node(), block](Node& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * bn->data[i % block];
        }
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          g[i % block] += self.grad[i] * an->data[i];
        }
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    mismatch("matmul", a, b);
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m);
  MutMap(out.data(), n, m).noalias() =
      ConstMap(a.data().data(), n, k) * ConstMap(b.data().data(), k, m);
  Tensor result = make_output({n, m}, std::move(out), "matmul");
  if (tracking({&a, &b})) {
    attach(result, [an = a.node(), bn = b.node(), n, k, m](Node& self) {
      ConstMap dc(self.grad.data(), n, m);
      if (an->requires_grad) {
        MutMap(an->ensure_grad().data(), n, k).noalias() +=
            dc * ConstMap(bn->data.data(), k, m).transpose();
      }
      if (bn->requires_grad) {
        MutMap(bn->ensure_grad().data(), k, m).noalias() +=
            ConstMap(an->data.data(), n, k).transpose() * dc;
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(n * m);
  MutMap(out.data(), m, n) = ConstMap(a.data().data(), n, m).transpose();
  Tensor result = make_output({m, n}, std::move(out), "transpose");
  if (tracking({&a})) {
    attach(result, [an = a.node(), n, m](Node& self) {
      if (!an->requires_grad) return;
      MutMap(an->ensure_grad().data(), n, m) +=
          ConstMap(self.grad.data(), m, n).transpose();
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) +
                         " as " + shape_to_string(shape));
  }
  Tensor result = make_output(std::move(shape), a.to_vector(), "reshape");
  if (tracking({&a})) {
    attach(result, [an = a.node()](Node& self) {
      if (!an->requires_grad) return;
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  const AxisSplit base = split_axis("concat", first, axis);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) mismatch("concat", parts[0], p);
    total += s[axis];
  }
  out_shape[axis] = total;
  std::vector<double> out(shape_numel(out_shape));
  const std::size_t out_row = total * base.inner;
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.dim(axis) * base.inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk,
                  out.begin() + o * out_row + offset);
    }
    offsets.push_back(offset);
    offset += chunk;
  }
  Tensor result = make_output(std::move(out_shape), std::move(out), "concat");
  bool any = false;
  if (active_tape() != nullptr) {
    for (const Tensor& p : parts) any = any || p.requires_grad();
  }
  if (any) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    attach(result, [nodes = std::move(nodes), offsets = std::move(offsets),
                    outer = base.outer, inner = base.inner, axis,
                    out_row](Node& self) {
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        Node& in = *nodes[p];
        if (!in.requires_grad) continue;
        auto& g = in.ensure_grad();
        const std::size_t chunk = in.shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * out_row + offsets[p];
          double* dst = g.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  const AxisSplit s = split_axis("slice", a.shape(), axis);
  if (begin >= end || end > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for axis " +
                         std::to_string(axis) + " of shape " +
                         shape_to_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  const std::size_t row = s.extent * s.inner;
  const std::size_t skip = begin * s.inner;
  std::vector<double> out(s.outer * chunk);
  const auto src = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.begin() + o * row + skip, chunk, out.begin() + o * chunk);
  }
  Tensor result = make_output(std::move(out_shape), std::move(out), "slice");
  if (tracking({&a})) {
    attach(result, [an = a.node(), outer = s.outer, chunk, row,
                    skip](Node& self) {
      if (!an->requires_grad) return;
      auto& g = an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < chunk; ++i) {
          g[o * row + skip + i] += self.grad[o * chunk + i];
        }
      }
    });
  }
  return result;
}

Tensor pick(const Tensor& a, std::size_t index) {
  if (index >= a.numel()) {
    throw IndexError("pick: index " + std::to_string(index) +
                     " out of range for shape " + shape_to_string(a.shape()));
  }
  Tensor result = make_output({1}, {a[index]}, "pick");
  if (tracking({&a})) {
    attach(result, [an = a.node(), index](Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad()[index] += self.grad[0];
    });
  }
  return result;
}

Tensor stack_scalars(std::span<const Tensor> scalars) {
  for (const Tensor& s : scalars) {
    if (s.numel() != 1) {
      throw DimensionError("stack_scalars: element of shape " +
                           shape_to_string(s.shape()) + " is not a scalar");
    }
  }
  std::vector<Tensor> flat(scalars.begin(), scalars.end());
  for (Tensor& t : flat) {
    if (t.rank() != 1) t = reshape(t, {1});
  }
  return concat(flat, 0);
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis("sum", a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = x.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Tensor result = make_output(std::move(out_shape), std::move(out), "sum");
  if (tracking({&a})) {
    attach(result, [an = a.node(), s](Node& self) {
      if (!an->requires_grad) return;
      auto& g = an->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
          double* dst = g.data() + (o * s.extent + e) * s.inner;
          const double* src = self.grad.data() + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor sum_all(const Tensor& a) {
  return sum(reshape(a, {a.numel()}), 0);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) mismatch("dot", a, b);
  const auto x = a.data();
  const auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  Tensor result = make_output({1}, {acc}, "dot");
  if (tracking({&a, &b})) {
    attach(result, [an = a.node(), bn = b.node()](Node& self) {
      const double g = self.grad[0];
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->data[i];
      }
    });
  }
  return result;
}

Tensor exp(const Tensor& a) {
  Tensor result = unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
  for (std::size_t i = 0; i < result.numel(); ++i) {
    if (!std::isfinite(result[i])) {
      throw DomainError("exp: overflow at element " + std::to_string(i));
    }
  }
  return result;
}

Tensor log(const Tensor& a) {
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive value " + std::to_string(x[i]) +
                        " at element " + std::to_string(i));
    }
  }
  return unary(
      a, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  return unary(
      a, "gelu",
      [](double x) {
        return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
      },
      [](double x, double) {
        const double t = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + t) +
               0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t width = x.shape().back();
  if (gamma.numel() != width) mismatch("layer_norm", x, gamma);
  if (beta.numel() != width) mismatch("layer_norm", x, beta);
  const std::size_t rows = x.numel() / width;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  const auto in = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double mean = 0.0;
    for (std::size_t i = 0; i < width; ++i) mean += row[i];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      const double d = row[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(width);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < width; ++i) {
      const double h = (row[i] - mean) * rstd[r];
      xhat[r * width + i] = h;
      out[r * width + i] = h * g[i] + b[i];
    }
  }
  Tensor result = make_output(x.shape(), std::move(out), "layer_norm");
  if (tracking({&x, &gamma, &beta})) {
    attach(result, [xn = x.node(), gn = gamma.node(), bn = beta.node(),
                    xhat = std::move(xhat), rstd = std::move(rstd), rows,
                    width](Node& self) {
      const auto& dy = self.grad;
      if (gn->requires_grad) {
        auto& gg = gn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < width; ++i) {
            gg[i] += dy[r * width + i] * xhat[r * width + i];
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < width; ++i) gb[i] += dy[r * width + i];
        }
      }
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        const double inv_w = 1.0 / static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t i = 0; i < width; ++i) {
            const double d = dy[r * width + i] * gn->data[i];
            mean_d += d;
            mean_dx += d * xhat[r * width + i];
          }
          mean_d *= inv_w;
          mean_dx *= inv_w;
          for (std::size_t i = 0; i < width; ++i) {
            const double d = dy[r * width + i] * gn->data[i];
            gx[r * width + i] +=
                rstd[r] * (d - mean_d - xhat[r * width + i] * mean_dx);
          }
        }
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor& logits, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", logits.shape(), axis);
  std::vector<double> out(logits.numel());
  const auto x = logits.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) {
        mx = std::max(mx, x[base + e * s.inner]);
      }
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(x[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[base + e * s.inner] /= total;
      }
    }
  }
  require_finite("softmax", out);
  Tensor result = make_output(logits.shape(), std::move(out), "softmax");
  if (tracking({&logits})) {
    attach(result, [xn = logits.node(), s](Node& self) {
      if (!xn->requires_grad) return;
      auto& g = xn->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double inner_prod = 0.0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t at = base + e * s.inner;
            inner_prod += self.grad[at] * self.data[at];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t at = base + e * s.inner;
            g[at] += self.data[at] * (self.grad[at] - inner_prod);
          }
        }
      }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& logits, std::size_t axis) {
  const AxisSplit s = split_axis("log_softmax", logits.shape(), axis);
  std::vector<double> out(logits.numel());
  const auto x = logits.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) {
        mx = std::max(mx, x[base + e * s.inner]);
      }
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        total += std::exp(x[base + e * s.inner] - mx);
      }
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[base + e * s.inner] = x[base + e * s.inner] - lse;
      }
    }
  }
  require_finite("log_softmax", out);
  Tensor result = make_output(logits.shape(), std::move(out), "log_softmax");
  if (tracking({&logits})) {
    attach(result, [xn = logits.node(), s](Node& self) {
      if (!xn->requires_grad) return;
      auto& g = xn->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double total = 0.0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            total += self.grad[base + e * s.inner];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t at = base + e * s.inner;
            g[at] += self.grad[at] - std::exp(self.data[at]) * total;
          }
        }
      }
    });
  }
  return result;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank("embedding", table, 2);
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<double> out(ids.size() * width);
  const auto src = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[r]) +
                       " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(src.begin() + static_cast<std::size_t>(ids[r]) * width, width,
                out.begin() + r * width);
  }
  Tensor result = make_output({ids.size(), width}, std::move(out), "embedding");
  if (tracking({&table})) {
    attach(result, [tn = table.node(), rows = std::vector<int>(ids.begin(),
                                                                ids.end()),
                    width](Node& self) {
      auto& g = tn->ensure_grad();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double* dst = g.data() + static_cast<std::size_t>(rows[r]) * width;
        const double* gsrc = self.grad.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) dst[i] += gsrc[i];
      }
    });
  }
  return result;
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.numel() != q.numel()) mismatch("kl_divergence", p, q);
  const auto pv = p.data();
  const auto qv = q.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] == 0.0) continue;
    total += pv[i] * (std::log(std::max(pv[i], kKlFloor)) -
                      std::log(std::max(qv[i], kKlFloor)));
  }
  if (!std::isfinite(total)) {
    throw DomainError("kl_divergence: non-finite result");
  }
  Tensor result = make_output({1}, {total}, "kl_divergence");
  if (tracking({&p, &q})) {
    attach(result, [pn = p.node(), qn = q.node()](Node& self) {
      const double g = self.grad[0];
      const std::size_t n = pn->data.size();
      if (pn->requires_grad) {
        auto& gp = pn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const double pi = pn->data[i];
          const double d = std::log(std::max(pi, kKlFloor)) -
                           std::log(std::max(qn->data[i], kKlFloor)) +
                           (pi > kKlFloor ? 1.0 : 0.0);
          gp[i] += g * d;
        }
      }
      if (qn->requires_grad) {
        auto& gq = qn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const double qi = qn->data[i];
          if (qi > kKlFloor) gq[i] -= g * pn->data[i] / qi;
        }
      }
    });
  }
  return result;
}

}  // namespace fgd::ops
