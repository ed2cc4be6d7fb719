#pragma once

#include <cstddef>
#include <vector>

#include "backdrop/tensor.hpp"

namespace backdrop {

// Elementwise binary ops. Operands must have equal shapes, or one must be a
// scalar or match a trailing suffix of the other's shape (repeated over the
// leading dimensions).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor power(const Tensor& a, double exponent);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
// Half-open range [start, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end);
Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis);
// NumPy-style broadcast; size-1 or missing leading dims expand.
Tensor broadcast_to(const Tensor& a, const Shape& shape);
// Rows of `a` (axis 0) picked by index, duplicates allowed.
Tensor index_select(const Tensor& a, const std::vector<std::size_t>& rows);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace backdrop
