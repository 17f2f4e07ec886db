#include "lassode/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lassode::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) {
  return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
Map view(Tensor& t) {
  return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

Tensor like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

bool wants(const NodePtr& n) { return n->requires_grad; }

// Elementwise op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Var pointwise(const char* op, const Var& a, F f, D dfdx) {
  Tensor out = like(a.value());
  const double* x = a.value().data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) y[i] = f(x[i]);
  return make_op(op, std::move(out), {a}, [dfdx](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    const double* x = in.value.data();
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * dfdx(x[i], y[i]);
    accumulate(in, d);
  });
}

}  // namespace

Var constant(Tensor value) { return Var(std::move(value), false); }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Tensor out(a.rows(), b.cols());
  view(out).noalias() = view(a.value()) * view(b.value());
  return make_op("matmul", std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& w = *self.inputs[1];
    if (x.requires_grad) {
      Tensor dx = like(x.value);
      view(dx).noalias() = view(self.grad) * view(w.value).transpose();
      accumulate(x, dx);
    }
    if (w.requires_grad) {
      Tensor dw = like(w.value);
      view(dw).noalias() = view(x.value).transpose() * view(self.grad);
      accumulate(w, dw);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a.value(), b.value());
  Tensor out(a.rows(), b.rows());
  view(out).noalias() = view(a.value()) * view(b.value()).transpose();
  return make_op("matmul_nt", std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor dx = like(x.value);
      view(dx).noalias() = view(self.grad) * view(y.value);
      accumulate(x, dx);
    }
    if (y.requires_grad) {
      Tensor dy = like(y.value);
      view(dy).noalias() = view(self.grad).transpose() * view(x.value);
      accumulate(y, dy);
    }
  });
}

Var transpose(const Var& a) {
  Tensor out(a.cols(), a.rows());
  view(out) = view(a.value()).transpose();
  return make_op("transpose", std::move(out), {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    Tensor dx = like(x.value);
    view(dx) = view(self.grad).transpose();
    accumulate(x, dx);
  });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows()) shape_fail("affine", x.value(), weight.value());
  if (bias.rows() != 1 || bias.cols() != weight.cols()) {
    shape_fail("affine(bias)", weight.value(), bias.value());
  }
  Tensor out(x.rows(), weight.cols());
  auto o = view(out);
  o.noalias() = view(x.value()) * view(weight.value());
  o.rowwise() += view(bias.value()).row(0);
  return make_op("affine", std::move(out), {x, weight, bias}, [](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node& b = *self.inputs[2];
    if (in.requires_grad) {
      Tensor d = like(in.value);
      view(d).noalias() = view(self.grad) * view(w.value).transpose();
      accumulate(in, d);
    }
    if (w.requires_grad) {
      Tensor d = like(w.value);
      view(d).noalias() = view(in.value).transpose() * view(self.grad);
      accumulate(w, d);
    }
    if (b.requires_grad) {
      Tensor d = like(b.value);
      view(d).row(0) = view(self.grad).colwise().sum();
      accumulate(b, d);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) shape_fail("add", a.value(), b.value());
  Tensor out = a.value();
  view(out) += view(b.value());
  return make_op("add", std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) shape_fail("sub", a.value(), b.value());
  Tensor out = a.value();
  view(out) -= view(b.value());
  return make_op("sub", std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    if (wants(self.inputs[1])) {
      Tensor d = self.grad;
      view(d) *= -1.0;
      accumulate(*self.inputs[1], d);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) shape_fail("mul", a.value(), b.value());
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  return make_op("mul", std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor d = self.grad;
      view(d).array() *= view(y.value).array();
      accumulate(x, d);
    }
    if (y.requires_grad) {
      Tensor d = self.grad;
      view(d).array() *= view(x.value).array();
      accumulate(y, d);
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a.value(), row.value());
  Tensor out = a.value();
  view(out).rowwise() += view(row.value()).row(0);
  return make_op("add_row", std::move(out), {a, row}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    if (wants(self.inputs[1])) {
      Tensor d = like(self.inputs[1]->value);
      view(d).row(0) = view(self.grad).colwise().sum();
      accumulate(*self.inputs[1], d);
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("mul_row", a.value(), row.value());
  Tensor out = a.value();
  view(out).array().rowwise() *= view(row.value()).array().row(0);
  return make_op("mul_row", std::move(out), {a, row}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& r = *self.inputs[1];
    if (x.requires_grad) {
      Tensor d = self.grad;
      view(d).array().rowwise() *= view(r.value).array().row(0);
      accumulate(x, d);
    }
    if (r.requires_grad) {
      Tensor d = like(r.value);
      view(d).row(0) = (view(self.grad).array() * view(x.value).array()).colwise().sum().matrix();
      accumulate(r, d);
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_fail("mul_col", a.value(), col.value());
  Tensor out = a.value();
  view(out).array().colwise() *= view(col.value()).array().col(0);
  return make_op("mul_col", std::move(out), {a, col}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& c = *self.inputs[1];
    if (x.requires_grad) {
      Tensor d = self.grad;
      view(d).array().colwise() *= view(c.value).array().col(0);
      accumulate(x, d);
    }
    if (c.requires_grad) {
      Tensor d = like(c.value);
      view(d).col(0) = (view(self.grad).array() * view(x.value).array()).rowwise().sum().matrix();
      accumulate(c, d);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  view(out) *= s;
  return make_op("scale", std::move(out), {a}, [s](Node& self) {
    Tensor d = self.grad;
    view(d) *= s;
    accumulate(*self.inputs[0], d);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  view(out).array() += s;
  return make_op("add_scalar", std::move(out), {a},
                 [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Var square(const Var& a) {
  return pointwise(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
  return pointwise(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return pointwise(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return pointwise(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var exp(const Var& a) {
  return pointwise(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return pointwise(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return pointwise(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var softmax_rows(const Var& a) {
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return make_op("softmax_rows", std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    for (std::size_t r = 0; r < d.rows(); ++r) {
      auto y = self.value.row_span(r);
      auto g = self.grad.row_span(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < y.size(); ++c) dot += y[c] * g[c];
      auto dr = d.row_span(r);
      for (std::size_t c = 0; c < y.size(); ++c) dr[c] = y[c] * (g[c] - dot);
    }
    accumulate(in, d);
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const std::size_t rows = a.rows();
  const std::size_t n = a.cols();
  if (gain && (gain.rows() != 1 || gain.cols() != n)) {
    shape_fail("layer_norm(gain)", a.value(), gain.value());
  }
  if (bias && (bias.rows() != 1 || bias.cols() != n)) {
    shape_fail("layer_norm(bias)", a.value(), bias.value());
  }
  // xhat and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<Tensor>(rows, n);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    auto x = a.value().row_span(r);
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (x[c] - mu) * is;
      (*xhat)(r, c) = h;
      double y = h;
      if (gain) y *= gain.value()[c];
      if (bias) y += bias.value()[c];
      out(r, c) = y;
    }
  }
  std::vector<Var> inputs{a};
  const bool has_gain = static_cast<bool>(gain);
  const bool has_bias = static_cast<bool>(bias);
  if (has_gain) inputs.push_back(gain);
  if (has_bias) inputs.push_back(bias);
  return make_op("layer_norm", std::move(out), inputs,
                 [xhat, inv_std, has_gain, has_bias](Node& self) {
                   Node& in = *self.inputs[0];
                   const std::size_t rows = self.value.rows();
                   const std::size_t n = self.value.cols();
                   const Node* g = has_gain ? self.inputs[1].get() : nullptr;
                   if (has_gain && self.inputs[1]->requires_grad) {
                     Tensor dg(1, n);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < n; ++c) dg[c] += self.grad(r, c) * (*xhat)(r, c);
                     accumulate(*self.inputs[1], dg);
                   }
                   if (has_bias) {
                     Node& b = *self.inputs[has_gain ? 2 : 1];
                     if (b.requires_grad) {
                       Tensor db(1, n);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < n; ++c) db[c] += self.grad(r, c);
                       accumulate(b, db);
                     }
                   }
                   if (!in.requires_grad) return;
                   Tensor d(rows, n);
                   std::vector<double> gh(n);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double mean_gh = 0.0;
                     double mean_ghx = 0.0;
                     for (std::size_t c = 0; c < n; ++c) {
                       gh[c] = self.grad(r, c) * (g ? g->value[c] : 1.0);
                       mean_gh += gh[c];
                       mean_ghx += gh[c] * (*xhat)(r, c);
                     }
                     mean_gh /= static_cast<double>(n);
                     mean_ghx /= static_cast<double>(n);
                     for (std::size_t c = 0; c < n; ++c) {
                       d(r, c) = (*inv_std)[r] * (gh[c] - mean_gh - (*xhat)(r, c) * mean_ghx);
                     }
                   }
                   accumulate(in, d);
                 });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return make_op("concat_rows", std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t len = in->value.size();
      if (in->requires_grad) {
        Tensor d = like(in->value);
        std::copy(self.grad.data() + offset, self.grad.data() + offset + len, d.data());
        accumulate(*in, d);
      }
      offset += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    view(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols())) =
        view(p.value());
    offset += p.cols();
  }
  return make_op("concat_cols", std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t c = in->value.cols();
      if (in->requires_grad) {
        Tensor d = like(in->value);
        view(d) = view(self.grad).middleCols(static_cast<Eigen::Index>(offset),
                                             static_cast<Eigen::Index>(c));
        accumulate(*in, d);
      }
      offset += c;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + a.value().shape_string());
  }
  const std::size_t cols = a.cols();
  Tensor out(end - begin, cols);
  std::copy(a.value().data() + begin * cols, a.value().data() + end * cols, out.data());
  return make_op("slice_rows", std::move(out), {a}, [begin, cols](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    std::copy(self.grad.data(), self.grad.data() + self.grad.size(), d.data() + begin * cols);
    accumulate(in, d);
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + a.value().shape_string());
  }
  Tensor out(a.rows(), end - begin);
  view(out) = view(a.value()).middleCols(static_cast<Eigen::Index>(begin),
                                         static_cast<Eigen::Index>(end - begin));
  return make_op("slice_cols", std::move(out), {a}, [begin](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    view(d).middleCols(static_cast<Eigen::Index>(begin),
                       static_cast<Eigen::Index>(self.value.cols())) = view(self.grad);
    accumulate(in, d);
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
  const std::size_t cols = a.cols();
  Tensor out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of " +
                       a.value().shape_string());
    }
    std::copy_n(a.value().data() + indices[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_op("gather_rows", std::move(out), {a}, [idx = std::move(idx), cols](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) d(idx[i], c) += self.grad(i, c);
    }
    accumulate(in, d);
  });
}

Var scatter_rows(const Var& a, std::span<const std::size_t> indices, std::size_t rows) {
  if (indices.size() != a.rows()) {
    throw ShapeError("scatter_rows: " + std::to_string(indices.size()) + " indices for " +
                     a.value().shape_string());
  }
  const std::size_t cols = a.cols();
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("scatter_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out(indices[i], c) += a.value()(i, c);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_op("scatter_rows", std::move(out), {a}, [idx = std::move(idx), cols](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(self.grad.data() + idx[i] * cols, cols, d.data() + i * cols);
    }
    accumulate(in, d);
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + a.value().shape_string() + " as [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Tensor out({rows, cols}, {a.value().data(), a.value().data() + a.value().size()});
  return make_op("reshape", std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d(in.value.shape(), {self.grad.data(), self.grad.data() + self.grad.size()});
    accumulate(in, d);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op("sum", Tensor(1, 1, s), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    d.fill(self.grad[0]);
    accumulate(in, d);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op("mean", Tensor(1, 1, s / n), {a}, [n](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    d.fill(self.grad[0] / n);
    accumulate(in, d);
  });
}

std::vector<std::vector<std::size_t>> topk_indices(const Tensor& logits, std::size_t k) {
  const std::size_t n = logits.cols();
  if (k == 0 || k > n) {
    throw ShapeError("topk: k=" + std::to_string(k) + " invalid for " + std::to_string(n) +
                     " experts");
  }
  std::vector<std::vector<std::size_t>> out(logits.rows());
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row_span(r);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return row[i] > row[j]; });
    out[r].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

Var topk_softmax(const Var& logits, std::size_t k) {
  const auto selected = topk_indices(logits.value(), k);
  Tensor out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto& sel = selected[r];
    const double m = logits.value()(r, sel.front());
    double z = 0.0;
    for (std::size_t e : sel) {
      out(r, e) = std::exp(logits.value()(r, e) - m);
      z += out(r, e);
    }
    for (std::size_t e : sel) out(r, e) /= z;
  }
  return make_op("topk_softmax", std::move(out), {logits}, [selected](Node& self) {
    Node& in = *self.inputs[0];
    Tensor d = like(in.value);
    for (std::size_t r = 0; r < d.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t e : selected[r]) dot += self.value(r, e) * self.grad(r, e);
      for (std::size_t e : selected[r]) d(r, e) = self.value(r, e) * (self.grad(r, e) - dot);
    }
    accumulate(in, d);
  });
}

}  // namespace lassode::ad
