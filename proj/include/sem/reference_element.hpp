#pragma once

// One-dimensional Gauss-Lobatto-Legendre operators. Every 3D operator in the
// engine is a tensor product of the matrices built here.

#include <cstddef>
#include <span>
#include <vector>

namespace sem {

/// Small dense row-major matrix. Sizes here never exceed (p+1) x (p+1).
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }

  std::vector<double> apply(std::span<const double> x) const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);

/// Inverse by Gaussian elimination with partial pivoting. Throws on a singular matrix.
DenseMatrix invert(const DenseMatrix& a);

struct LobattoRule {
  std::vector<double> points;
  std::vector<double> weights;
};

/// p+1 Gauss-Lobatto-Legendre nodes (ascending, endpoints +-1) and weights.
LobattoRule lobatto_points(int order);

/// Legendre polynomial P_k(x) via the three-term recurrence.
double legendre(int k, double x);

/// Derivative P_k'(x).
double legendre_derivative(int k, double x);

/// Lagrange cardinal polynomial psi_i(xi) on the given nodes.
double lagrange_eval(std::span<const double> points, std::size_t i, double xi);

/// D(i, m) = psi_m'(xi_i).
DenseMatrix diff_matrix(std::span<const double> points);

struct Vandermonde {
  DenseMatrix v;      // v(i, k) = P_k(xi_i)
  DenseMatrix v_inv;  // nodal values -> Legendre coefficients
};

Vandermonde legendre_vandermonde(std::span<const double> points);

/// Boyd-Vandeven erf-log damping for mode k; 0 at the cutoff, 1 at the top mode.
double boyd_vandeven_damping(int k, int order, int cutoff, double filter_order);

/// Default cutoff mode ceil(2(p+1)/3).
int default_filter_cutoff(int order);

/// Nodal filter F = V diag(sigma) V^-1 with sigma_k = 1 - strength * damping(k) for k >= cutoff.
DenseMatrix filter_matrix(std::span<const double> points, double strength, double filter_order,
                          int cutoff);

/// Modal transfer factors sigma_0..sigma_p used by filter_matrix.
std::vector<double> filter_transfer(int order, double strength, double filter_order, int cutoff);

struct FilterParams {
  double strength = 0.05;
  double filter_order = 12.0;
  int cutoff = -1;  // negative selects default_filter_cutoff
};

/// Immutable bundle of 1D operators for polynomial order p.
class ReferenceElement {
public:
  explicit ReferenceElement(int order, FilterParams filter = {});

  int order() const noexcept { return order_; }
  std::size_t points_1d() const noexcept { return points_.size(); }
  std::size_t nodes_per_element() const noexcept {
    return points_.size() * points_.size() * points_.size();
  }

  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> weights() const noexcept { return weights_; }
  const DenseMatrix& diff() const noexcept { return diff_; }
  const DenseMatrix& filter() const noexcept { return filter_; }
  const FilterParams& filter_params() const noexcept { return filter_params_; }

  /// w_i w_j w_k in x-fastest node order.
  std::span<const double> weights_3d() const noexcept { return weights_3d_; }

private:
  int order_;
  FilterParams filter_params_;
  std::vector<double> points_;
  std::vector<double> weights_;
  std::vector<double> weights_3d_;
  DenseMatrix diff_;
  DenseMatrix filter_;
};

}  // namespace sem
