#pragma once

// Explicit multistage Runge-Kutta in Shu-Osher form with the stage loop of
// the model: rhs (with DSS and exchange) and update per stage, filter after.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sem/dynamics.hpp"

namespace sem {

/// u(i) = sum_{j<i} alpha[i][j] u(j) + dt beta[i][j] F(u(j)), i = 1..s; u(0) = u_n, u_{n+1} = u(s).
struct RkScheme {
  std::string name;
  int stages = 0;
  int order = 0;
  std::vector<std::vector<double>> alpha;  // (s+1) rows, row i has i entries
  std::vector<std::vector<double>> beta;

  /// Five-stage third-order strong-stability-preserving scheme.
  static RkScheme ssp53();
  /// Three-stage third-order SSP scheme (Shu-Osher).
  static RkScheme ssp33();
  static RkScheme forward_euler();
};

struct ButcherTableau {
  std::vector<std::vector<double>> a;  // s x s, strictly lower triangular
  std::vector<double> b;
  std::vector<double> c;
};

ButcherTableau to_butcher(const RkScheme& scheme);

struct OrderReport {
  double consistency = 0.0;  // max_i |sum_j alpha_ij - 1|
  double order1 = 0.0;       // sum b - 1
  double order2 = 0.0;       // sum b c - 1/2
  double order3a = 0.0;      // sum b c^2 - 1/3
  double order3b = 0.0;      // sum b A c - 1/6

  /// Largest residual among the conditions up to the given order.
  double max_residual(int order) const;
  bool satisfies(int order, double tol = 1e-13) const { return max_residual(order) < tol; }
};

OrderReport verify_order_conditions(const RkScheme& scheme);

/// Throws InvalidArgument when the scheme misses its declared order.
void require_order_conditions(const RkScheme& scheme, double tol = 1e-13);

using RhsFunction = std::function<void(std::span<const double>, std::span<double>)>;
using StateHook = std::function<void(std::span<double>)>;

struct StepHooks {
  StateHook boundary;  // after every stage and after the filter
  StateHook filter;    // once per step, after the stage loop
  StateHook imex;      // vertical implicit correction; left empty (explicit only)
};

class RkIntegrator {
public:
  RkIntegrator(RkScheme scheme, std::size_t size);

  const RkScheme& scheme() const noexcept { return scheme_; }

  void step(std::span<double> u, double dt, const RhsFunction& rhs, const StepHooks& hooks = {});

private:
  RkScheme scheme_;
  std::size_t size_;
  std::vector<std::vector<double>> stage_u_;
  std::vector<std::vector<double>> stage_f_;
};

struct TimestepControl {
  double courant_h = 0.7;
  double courant_v = 0.7;
  double dt = 0.0;
  long steps = 0;
  double end_time = 0.0;
};

/// min over nodes and directions of C_d * gap_d / (|u_d| + c).
double compute_dt(const StateCG& state, const Model& m, const TimestepControl& control);

}  // namespace sem
