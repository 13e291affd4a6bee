#include "sem/reference_element.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sem/error.hpp"

namespace sem {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols_) throw InvalidArgument("DenseMatrix::apply: size mismatch");
  std::vector<double> y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matrix product: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

DenseMatrix invert(const DenseMatrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw InvalidArgument("invert: matrix is not square");
  DenseMatrix lu = a;
  DenseMatrix inv = DenseMatrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    if (lu(pivot, col) == 0.0) throw Error("invert: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(lu(pivot, j), lu(col, j));
        std::swap(inv(pivot, j), inv(col, j));
      }
    }
    const double d = lu(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      lu(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = lu(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        lu(r, j) -= f * lu(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

double legendre(int k, double x) {
  if (k == 0) return 1.0;
  double p0 = 1.0;
  double p1 = x;
  for (int n = 2; n <= k; ++n) {
    const double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

double legendre_derivative(int k, double x) {
  // P_k' = sum over j = k-1, k-3, ... of (2j + 1) P_j; avoids the 1/(1-x^2) singularity.
  double d = 0.0;
  for (int j = k - 1; j >= 0; j -= 2) d += (2.0 * j + 1.0) * legendre(j, x);
  return d;
}

namespace {

double legendre_second_derivative(int k, double x) {
  double d = 0.0;
  for (int j = k - 1; j >= 0; j -= 2) d += (2.0 * j + 1.0) * legendre_derivative(j, x);
  return d;
}

}  // namespace

LobattoRule lobatto_points(int order) {
  if (order < 1) throw InvalidArgument("lobatto_points: polynomial order must be >= 1");
  const int n = order + 1;
  std::vector<double> x(n);
  x.front() = -1.0;
  x.back() = 1.0;
  // Interior nodes are the roots of P_p'. Newton on (1 - xi^2) P_p' shares those roots;
  // Chebyshev-Gauss-Lobatto points are the initial guesses.
  for (int i = 1; i < order; ++i) {
    double xi = -std::cos(std::numbers::pi * i / order);
    for (int it = 0; it < 100; ++it) {
      const double f = (1.0 - xi * xi) * legendre_derivative(order, xi);
      const double df = -2.0 * xi * legendre_derivative(order, xi) +
                        (1.0 - xi * xi) * legendre_second_derivative(order, xi);
      const double step = f / df;
      xi -= step;
      if (std::abs(step) < 1e-15) break;
    }
    x[i] = xi;
  }
  for (int i = 0; i < n / 2; ++i) {
    const double sym = 0.5 * (x[n - 1 - i] - x[i]);
    x[i] = -sym;
    x[n - 1 - i] = sym;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;

  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double pk = legendre(order, x[i]);
    w[i] = 2.0 / (order * (order + 1.0) * pk * pk);
  }
  return {std::move(x), std::move(w)};
}

double lagrange_eval(std::span<const double> points, std::size_t i, double xi) {
  if (i >= points.size()) throw InvalidArgument("lagrange_eval: node index out of range");
  double v = 1.0;
  for (std::size_t m = 0; m < points.size(); ++m) {
    if (m == i) continue;
    v *= (xi - points[m]) / (points[i] - points[m]);
  }
  return v;
}

DenseMatrix diff_matrix(std::span<const double> points) {
  const std::size_t n = points.size();
  if (n < 2) throw InvalidArgument("diff_matrix: need at least two points");
  // Barycentric form: D(i,m) = (b_m / b_i) / (xi_i - xi_m), diagonal from zero row sums.
  std::vector<double> bary(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < n; ++m)
      if (m != i) bary[i] /= (points[i] - points[m]);
  DenseMatrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      if (m == i) continue;
      d(i, m) = (bary[m] / bary[i]) / (points[i] - points[m]);
      row += d(i, m);
    }
    d(i, i) = -row;
  }
  return d;
}

Vandermonde legendre_vandermonde(std::span<const double> points) {
  const std::size_t n = points.size();
  DenseMatrix v(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) v(i, k) = legendre(static_cast<int>(k), points[i]);
  return {v, invert(v)};
}

int default_filter_cutoff(int order) { return std::min(order, (2 * (order + 1) + 2) / 3); }

double boyd_vandeven_damping(int k, int order, int cutoff, double filter_order) {
  if (k < cutoff) return 0.0;
  const double theta =
      order > cutoff ? static_cast<double>(k - cutoff) / static_cast<double>(order - cutoff) : 1.0;
  if (theta <= 0.0) return 0.0;
  if (theta >= 1.0) return 1.0;
  const double x = theta - 0.5;
  double chi = 1.0;
  if (std::abs(x) > 1e-8) chi = std::sqrt(-std::log(1.0 - 4.0 * x * x) / (4.0 * x * x));
  const double transfer = 0.5 * std::erfc(2.0 * std::sqrt(filter_order) * x * chi);
  return 1.0 - transfer;
}

std::vector<double> filter_transfer(int order, double strength, double filter_order, int cutoff) {
  if (strength < 0.0 || strength > 1.0)
    throw InvalidArgument("filter: strength must lie in [0, 1]");
  if (cutoff < 0 || cutoff > order) throw InvalidArgument("filter: cutoff must lie in [0, p]");
  if (filter_order < 1.0) throw InvalidArgument("filter: filter order must be >= 1");
  std::vector<double> sigma(order + 1, 1.0);
  for (int k = std::max(cutoff, 1); k <= order; ++k)
    sigma[k] = 1.0 - strength * boyd_vandeven_damping(k, order, cutoff, filter_order);
  return sigma;
}

DenseMatrix filter_matrix(std::span<const double> points, double strength, double filter_order,
                          int cutoff) {
  const int order = static_cast<int>(points.size()) - 1;
  const auto sigma = filter_transfer(order, strength, filter_order, cutoff);
  const std::size_t n = points.size();
  if (strength == 0.0) return DenseMatrix::identity(n);
  const auto [v, v_inv] = legendre_vandermonde(points);
  DenseMatrix scaled = v;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) scaled(i, k) *= sigma[k];
  return scaled * v_inv;
}

ReferenceElement::ReferenceElement(int order, FilterParams filter)
    : order_(order), filter_params_(filter) {
  auto rule = lobatto_points(order);
  points_ = std::move(rule.points);
  weights_ = std::move(rule.weights);
  if (filter_params_.cutoff < 0) filter_params_.cutoff = default_filter_cutoff(order);
  diff_ = diff_matrix(points_);
  filter_ = filter_matrix(points_, filter_params_.strength, filter_params_.filter_order,
                          filter_params_.cutoff);
  const std::size_t n = points_.size();
  weights_3d_.resize(n * n * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        weights_3d_[i + n * (j + n * k)] = weights_[i] * weights_[j] * weights_[k];
}

}  // namespace sem
