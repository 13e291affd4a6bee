#pragma once

// Tensor-product application of a 1D operator along one axis of an
// (n x n x n) x-fastest nodal block. Templated on the scalar so the same
// contraction serves double and forward-mode dual numbers.

#include <cstddef>
#include <span>

#include "sem/reference_element.hpp"

namespace sem {

inline constexpr std::size_t node_index(std::size_t i, std::size_t j, std::size_t k,
                                        std::size_t n) {
  return i + n * (j + n * k);
}

/// out = (A along axis) in. axis 0 = xi, 1 = eta, 2 = zeta.
template <class T>
void apply_along_axis(const DenseMatrix& a, std::span<const T> in, std::span<T> out, int axis) {
  const std::size_t n = a.rows();
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? n : n * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = node_index(i, j, k, n);
        const std::size_t row = axis == 0 ? i : (axis == 1 ? j : k);
        const std::size_t base = idx - row * stride;
        T s{};
        for (std::size_t m = 0; m < n; ++m) s += a(row, m) * in[base + m * stride];
        out[idx] = s;
      }
}

}  // namespace sem
