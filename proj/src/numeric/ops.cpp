#include "plaus/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "plaus/errors.hpp"
#include "plaus/numeric/kernels.hpp"

namespace plaus::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using BackFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   BackFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(fn);
  }
  return Tensor(std::move(n));
}

// Parent i's gradient buffer, or nullptr when it does not need one.
std::vector<double>* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

const std::vector<double>& pdata(Node& self, std::size_t i) { return self.parents[i]->data; }

void require_2d(const Tensor& a, const char* op) {
  if (a.dim() != 1 && a.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 1-D or 2-D tensor, got " +
                         shape_str(a.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

Shape shape2(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm_nn(a.data(), b.data(), out, m, k, n, false);
  return make_result(shape2(m, n), std::move(out), {a, b}, [m, k, n](Node& self) {
    if (auto* ga = pgrad(self, 0)) kernels::gemm_nt(self.grad, pdata(self, 1), *ga, m, n, k, true);
    if (auto* gb = pgrad(self, 1)) kernels::gemm_tn(pdata(self, 0), self.grad, *gb, k, m, n, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto d = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return make_result(shape2(c, r), std::move(out), {a}, [r, c](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = pgrad(self, p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = pgrad(self, 0)) {
      const auto& y = pdata(self, 1);
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    }
    if (auto* g = pgrad(self, 1)) {
      const auto& x = pdata(self, 0);
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_bias");
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.size() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b[j];
  return make_result(a.shape(), std::move(out), {a, bias}, [r, c](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j];
  });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto* g = pgrad(self, 0);
    const auto& x = pdata(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double v = x[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      (*g)[i] += self.grad[i] * d;
    }
  });
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(a, "layernorm");
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layernorm: affine params must have " + std::to_string(c) + " entries");
  }
  std::vector<double> out(r * c), xhat(r * c), rstd(r);
  const auto x = a.data(), g = gain.data(), b = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[i * c + j] - mu) * rstd[i];
      out[i * c + j] = xhat[i * c + j] * g[j] + b[j];
    }
  }
  return make_result(a.shape(), std::move(out), {a, gain, bias},
                     [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       const auto& g = pdata(self, 1);
                       if (auto* gx = pgrad(self, 0)) {
                         for (std::size_t i = 0; i < r; ++i) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dxh = self.grad[i * c + j] * g[j];
                             m1 += dxh;
                             m2 += dxh * xhat[i * c + j];
                           }
                           m1 /= static_cast<double>(c);
                           m2 /= static_cast<double>(c);
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dxh = self.grad[i * c + j] * g[j];
                             (*gx)[i * c + j] += rstd[i] * (dxh - m1 - xhat[i * c + j] * m2);
                           }
                         }
                       }
                       if (auto* gg = pgrad(self, 1))
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             (*gg)[j] += self.grad[i * c + j] * xhat[i * c + j];
                       if (auto* gb = pgrad(self, 2))
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) (*gb)[j] += self.grad[i * c + j];
                     });
}

namespace {

// Softmax over the first `width(i)` entries of each row; the rest are zero.
template <typename Width>
Tensor softmax_impl(const Tensor& a, Width width, const char* op) {
  require_2d(a, op);
  require_finite(a.data(), op);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c, 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t w = width(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w; ++j) mx = std::max(mx, x[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      out[i * c + j] = std::exp(x[i * c + j] - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < w; ++j) out[i * c + j] /= s;
  }
  auto y = out;
  return make_result(a.shape(), std::move(out), {a}, [r, c, y = std::move(y)](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
  const std::size_t c = a.cols();
  return softmax_impl(a, [c](std::size_t) { return c; }, "softmax_rows");
}

Tensor causal_softmax_rows(const Tensor& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("causal_softmax_rows: expected a square matrix, got " +
                         shape_str(a.shape()));
  }
  return softmax_impl(a, [](std::size_t i) { return i + 1; }, "causal_softmax_rows");
}

Tensor log_softmax_rows(const Tensor& a) {
  require_2d(a, "log_softmax_rows");
  require_finite(a.data(), "log_softmax_rows");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c), sm(r * c);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x[i * c + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = x[i * c + j] - lse;
      sm[i * c + j] = std::exp(out[i * c + j]);
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [r, c, sm = std::move(sm)](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] - sm[i * c + j] * s;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t offset, std::size_t width) {
  require_2d(a, "slice_cols");
  const std::size_t r = a.rows(), c = a.cols();
  if (offset + width > c) {
    throw DimensionError("slice_cols: [" + std::to_string(offset) + ", " +
                         std::to_string(offset + width) + ") outside " + shape_str(a.shape()));
  }
  std::vector<double> out(r * width);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * c + offset), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  return make_result(shape2(r, width), std::move(out), {a}, [r, c, offset, width](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < width; ++j) (*g)[i * c + offset + j] += self.grad[i * width + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto x = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = x[i * widths[k] + j];
    off += widths[k];
  }
  return make_result(shape2(r, total), std::move(out), parts,
                     [r, total, widths](Node& self) {
                       std::size_t o = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (auto* g = pgrad(self, k))
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               (*g)[i * widths[k] + j] += self.grad[i * total + o + j];
                         o += widths[k];
                       }
                     });
}

Tensor select_row(const Tensor& a, std::size_t row) {
  require_2d(a, "select_row");
  const std::size_t c = a.cols();
  if (row >= a.rows()) {
    throw DimensionError("select_row: row " + std::to_string(row) + " outside " +
                         shape_str(a.shape()));
  }
  const auto x = a.data();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(row * c),
                          x.begin() + static_cast<std::ptrdiff_t>((row + 1) * c));
  return make_result(shape2(1, c), std::move(out), {a}, [row, c](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t j = 0; j < c; ++j) (*g)[row * c + j] += self.grad[j];
  });
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> cols) {
  require_2d(a, "gather_cols");
  const std::size_t r = a.rows(), c = a.cols(), w = cols.size();
  for (auto j : cols) {
    if (j >= c) throw DimensionError("gather_cols: column " + std::to_string(j) + " outside " +
                                     shape_str(a.shape()));
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  std::vector<double> out(r * w);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < w; ++k) out[i * w + k] = x[i * c + idx[k]];
  return make_result(shape2(r, w), std::move(out), {a}, [r, c, w, idx](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < w; ++k) (*g)[i * c + idx[k]] += self.grad[i * w + k];
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols(), t = ids.size();
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(t * d);
  const auto x = table.data();
  for (std::size_t i = 0; i < t; ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= v) {
      throw DimensionError("embedding: id " + std::to_string(rows[i]) + " outside vocabulary of " +
                           std::to_string(v));
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(rows[i]) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return make_result(shape2(t, d), std::move(out), {table}, [d, rows](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        (*g)[static_cast<std::size_t>(rows[i]) * d + j] += self.grad[i * d + j];
  });
}

Tensor add_to_row(const Tensor& a, const Tensor& v, std::size_t row) {
  require_2d(a, "add_to_row");
  const std::size_t c = a.cols();
  if (row >= a.rows() || v.size() != c) {
    throw DimensionError("add_to_row: cannot add " + shape_str(v.shape()) + " to row " +
                         std::to_string(row) + " of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = v.data();
  for (std::size_t j = 0; j < c; ++j) out[row * c + j] += y[j];
  return make_result(a.shape(), std::move(out), {a, v}, [row, c](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[row * c + j];
  });
}

Tensor replace_row(const Tensor& a, const Tensor& v, std::size_t row) {
  require_2d(a, "replace_row");
  const std::size_t c = a.cols();
  if (row >= a.rows() || v.size() != c) {
    throw DimensionError("replace_row: cannot place " + shape_str(v.shape()) + " in row " +
                         std::to_string(row) + " of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<std::ptrdiff_t>(row * c));
  return make_result(a.shape(), std::move(out), {a, v}, [row, c](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i)
        if (i / c != row) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[row * c + j];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_result({1}, {s}, {a}, [](Node& self) {
    auto* g = pgrad(self, 0);
    for (auto& x : *g) x += self.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_2d(logits, "cross_entropy");
  require_finite(logits.data(), "cross_entropy");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_str(logits.shape()));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> sm(r * c);
  const auto x = logits.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (tg[i] < 0 || static_cast<std::size_t>(tg[i]) >= c) {
      throw DimensionError("cross_entropy: target " + std::to_string(tg[i]) + " outside " +
                           std::to_string(c) + " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      sm[i * c + j] = std::exp(x[i * c + j] - mx);
      s += sm[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) sm[i * c + j] /= s;
    loss += (mx + std::log(s)) - x[i * c + static_cast<std::size_t>(tg[i])];
  }
  loss /= static_cast<double>(r);
  return make_result({1}, {loss}, {logits},
                     [r, c, tg = std::move(tg), sm = std::move(sm)](Node& self) {
                       auto* g = pgrad(self, 0);
                       const double s = self.grad[0] / static_cast<double>(r);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<std::size_t>(tg[i]) == j ? 1.0 : 0.0;
                           (*g)[i * c + j] += s * (sm[i * c + j] - onehot);
                         }
                     });
}

}  // namespace plaus::ops
