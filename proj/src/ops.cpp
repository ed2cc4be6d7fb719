#include "backdrop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace backdrop {

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1 && b.rank() == 0) return a.shape();
  if (a.numel() == 1 && a.rank() == 0) return b.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}

// Suffix broadcasting in row-major order reduces to a modulo on the flat index.
template <typename Forward, typename GradA, typename GradB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Forward f, GradA da, GradB db) {
  Shape out_shape = broadcast_shape(op, a, b);
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  return Tape::current().record(
      op, {a, b}, Tensor(std::move(out_shape), std::move(out)),
      [a, b, da, db](std::span<const double> g, GradSinks sinks) {
        auto av = a.data();
        auto bv = b.data();
        const std::size_t na = av.size();
        const std::size_t nb = bv.size();
        if (!sinks[0].empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i % na] += g[i] * da(av[i % na], bv[i % nb]);
        }
        if (!sinks[1].empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) sinks[1][i % nb] += g[i] * db(av[i % na], bv[i % nb]);
        }
      });
}

template <typename Forward, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Forward f, Deriv d) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tensor result(a.shape(), std::move(out));
  // The derivative may use either the input or the output value.
  return Tape::current().record(op, {a}, result,
                                [a, result, d](std::span<const double> g, GradSinks sinks) {
                                  auto av = a.data();
                                  auto yv = result.data();
                                  for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i] += g[i] * d(av[i], yv[i]);
                                });
}

void check_axis(const char* op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(a.shape()));
  }
}

// (outer, extent, inner) view of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double s) {
  return unary(
      "mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor power(const Tensor& a, double exponent) {
  return unary(
      "power", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        if (exponent == 2.0) return 2.0 * x;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tape::current().record("sum", {a}, Tensor::scalar(total),
                                [](std::span<const double> g, GradSinks sinks) {
                                  for (double& s : sinks[0]) s += g[0];
                                });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  check_axis("sum", a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto av = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += av[(o * s.extent + e) * s.inner + i];
  return Tape::current().record("sum_axis", {a}, Tensor(std::move(out_shape), std::move(out)),
                                [s](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t o = 0; o < s.outer; ++o)
                                    for (std::size_t e = 0; e < s.extent; ++e)
                                      for (std::size_t i = 0; i < s.inner; ++i)
                                        sinks[0][(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
                                });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean(const Tensor& a, std::size_t axis) {
  check_axis("mean", a, axis);
  if (a.dim(axis) == 0) throw ShapeError("mean: empty axis");
  return mul(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> copy(a.data().begin(), a.data().end());
  return Tape::current().record("reshape", {a}, Tensor(std::move(shape), std::move(copy)),
                                [](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t i = 0; i < g.size(); ++i) sinks[0][i] += g[i];
                                });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end) {
  check_axis("slice", a, axis);
  if (start > end || end > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of shape " + shape_str(a.shape()));
  }
  const AxisSplit s = split_at(a.shape(), axis);
  const std::size_t len = end - start;
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  auto av = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < len; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[(o * len + e) * s.inner + i] = av[(o * s.extent + start + e) * s.inner + i];
  return Tape::current().record("slice", {a}, Tensor(std::move(out_shape), std::move(out)),
                                [s, start, len](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t o = 0; o < s.outer; ++o)
                                    for (std::size_t e = 0; e < len; ++e)
                                      for (std::size_t i = 0; i < s.inner; ++i)
                                        sinks[0][(o * s.extent + start + e) * s.inner + i] +=
                                            g[(o * len + e) * s.inner + i];
                                });
}

Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concatenate: no inputs");
  check_axis("concatenate", parts[0], axis);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) {
      throw ShapeError("concatenate: rank mismatch between " + shape_str(parts[0].shape()) + " and " +
                       shape_str(p.shape()));
    }
    probe[axis] = 0;
    Shape ref = parts[0].shape();
    ref[axis] = 0;
    if (probe != ref) {
      throw ShapeError("concatenate: shapes " + shape_str(parts[0].shape()) + " and " +
                       shape_str(p.shape()) + " differ off axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit total = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.dim(axis);
    auto pv = p.data();
    for (std::size_t o = 0; o < total.outer; ++o)
      for (std::size_t e = 0; e < ext; ++e)
        for (std::size_t i = 0; i < total.inner; ++i)
          out[(o * total.extent + offset + e) * total.inner + i] = pv[(o * ext + e) * total.inner + i];
    offset += ext;
  }
  std::vector<std::size_t> extents;
  for (const auto& p : parts) extents.push_back(p.dim(axis));
  return Tape::current().record(
      "concatenate", parts, Tensor(std::move(out_shape), std::move(out)),
      [total, offsets, extents](std::span<const double> g, GradSinks sinks) {
        for (std::size_t k = 0; k < sinks.size(); ++k) {
          if (sinks[k].empty()) continue;
          for (std::size_t o = 0; o < total.outer; ++o)
            for (std::size_t e = 0; e < extents[k]; ++e)
              for (std::size_t i = 0; i < total.inner; ++i)
                sinks[k][(o * extents[k] + e) * total.inner + i] +=
                    g[(o * total.extent + offsets[k] + e) * total.inner + i];
        }
      });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.rank() > shape.size()) {
    throw ShapeError("broadcast_to: cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  const std::size_t lead = shape.size() - a.rank();
  // Source stride per output axis (0 where the axis is expanded).
  std::vector<std::size_t> src_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = a.rank(); k-- > 0;) {
    const std::size_t out_axis = k + lead;
    if (a.dim(k) == shape[out_axis]) {
      src_stride[out_axis] = stride;
    } else if (a.dim(k) != 1) {
      throw ShapeError("broadcast_to: cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    stride *= a.dim(k);
  }
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) src += idx[d] * src_stride[d];
    source[flat] = src;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[source[i]];
  return Tape::current().record("broadcast_to", {a}, Tensor(shape, std::move(out)),
                                [source = std::move(source)](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t i = 0; i < g.size(); ++i) sinks[0][source[i]] += g[i];
                                });
}

Tensor index_select(const Tensor& a, const std::vector<std::size_t>& rows) {
  if (a.rank() == 0) throw ShapeError("index_select: scalar input");
  const std::size_t row_size = a.numel() / std::max<std::size_t>(a.dim(0), 1);
  for (auto r : rows) {
    if (r >= a.dim(0)) {
      throw ShapeError("index_select: row " + std::to_string(r) + " out of range for shape " +
                       shape_str(a.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * row_size);
  auto av = a.data();
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(rows[k] * row_size), row_size,
                out.begin() + static_cast<std::ptrdiff_t>(k * row_size));
  return Tape::current().record("index_select", {a}, Tensor(std::move(out_shape), std::move(out)),
                                [rows, row_size](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t k = 0; k < rows.size(); ++k)
                                    for (std::size_t i = 0; i < row_size; ++i)
                                      sinks[0][rows[k] * row_size + i] += g[k * row_size + i];
                                });
}

}  // namespace backdrop
