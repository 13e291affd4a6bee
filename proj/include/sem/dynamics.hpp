#pragma once

// Strong-form compressible Euler right-hand side in perturbation form,
// element-batched: fluxes for a whole element, 45 tensor contractions,
// metric combination, gravity source, then DSS.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sem/error.hpp"
#include "sem/mesh.hpp"
#include "sem/storage.hpp"
#include "sem/tensor.hpp"

namespace sem {

struct GasConstants {
  double r = 287.0;
  double cp = 1004.5;
  double cv = 717.5;
  double p0 = 1.0e5;
  double g = 9.81;

  double gamma() const noexcept { return cp / cv; }
  void validate() const;
};

/// Forward-mode dual number carrying one directional derivative.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value, double deriv = 0.0) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual pow(Dual a, double e) {
  const double pv = std::pow(a.v, e);
  return {pv, e * std::pow(a.v, e - 1.0) * a.d};
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

/// P = p0 (R Theta / p0)^gamma for scalar or dual arguments; no validation.
template <class T>
T pressure_unchecked(const T& theta, const GasConstants& gas) {
  using std::pow;
  return T(gas.p0) * pow(T(gas.r / gas.p0) * theta, gas.gamma());
}

/// Validated equation of state.
double pressure(double rho, double theta, const GasConstants& gas);

double sound_speed(double rho, double theta, const GasConstants& gas);

/// 5 x 3 flux tensor [v][c] for one node in perturbation form.
struct FluxTensor {
  double f[5][3] = {};
};

FluxTensor flux(std::span<const double, 5> q, double p_background, const GasConstants& gas);

/// Everything the element kernel needs; non-owning.
struct Model {
  const ColumnMesh* mesh = nullptr;
  const ReferenceElement* ref = nullptr;
  const MetricTerms* metrics = nullptr;
  const CgNumbering* numbering = nullptr;
  const ReferenceAtmosphereField* background = nullptr;
  GasConstants gas;
};

/// Per-element scratch, allocated once and reused.
template <class T>
struct RhsWorkspace {
  std::vector<T> flux;  // [(v * 3 + c) * N + n]
  std::vector<T> tmp;
  std::vector<T> div;   // [v * N + n]

  explicit RhsWorkspace(std::size_t nodes_per_element = 0)
      : flux(15 * nodes_per_element), tmp(nodes_per_element), div(kNumVars * nodes_per_element) {}
};

/// d f / d x_c at every node of element e (three D applications weighted by metrics).
std::vector<double> local_derivative(std::span<const double> values, const MetricTerms& metrics,
                                     std::size_t e, const ReferenceElement& ref, int c);

/// q and out are [v * N + n] for element e. out = -J w (div F - S).
template <class T>
void element_rhs(const Model& m, std::size_t e, std::span<const T> q, std::span<T> out,
                 RhsWorkspace<T>& ws) {
  const auto& ref = *m.ref;
  const auto& met = *m.metrics;
  const auto& bg = *m.background;
  const std::size_t nn = ref.nodes_per_element();
  const auto w3 = ref.weights_3d();

  for (std::size_t n = 0; n < nn; ++n) {
    const T& rho = q[kRho * nn + n];
    const T& th = q[kTheta * nn + n];
    const double rv = value_of(rho);
    const double tv = value_of(th);
    if (!(rv > 0.0) || !(tv > 0.0) || !std::isfinite(rv) || !std::isfinite(tv))
      throw DivergedStateError("non-physical density or potential temperature",
                               static_cast<std::ptrdiff_t>(e));
    const std::size_t bi = bg.index(e, n, *m.numbering);
    const T u[3] = {q[kRhoU * nn + n] / rho, q[kRhoV * nn + n] / rho, q[kRhoW * nn + n] / rho};
    const T pp = pressure_unchecked(th, m.gas) - T(bg.pressure[bi]);
    for (int c = 0; c < 3; ++c) {
      ws.flux[(0 * 3 + c) * nn + n] = q[(kRhoU + c) * nn + n];
      for (int i = 0; i < 3; ++i) {
        T f = q[(kRhoU + i) * nn + n] * u[c];
        if (i == c) f += pp;
        ws.flux[((1 + i) * 3 + c) * nn + n] = f;
      }
      ws.flux[(4 * 3 + c) * nn + n] = th * u[c];
    }
  }

  std::fill(ws.div.begin(), ws.div.end(), T{});
  for (std::size_t v = 0; v < kNumVars; ++v)
    for (int c = 0; c < 3; ++c) {
      std::span<const T> f(ws.flux.data() + (v * 3 + c) * nn, nn);
      for (int d = 0; d < 3; ++d) {
        apply_along_axis<T>(ref.diff(), f, ws.tmp, d);
        for (std::size_t n = 0; n < nn; ++n)
          ws.div[v * nn + n] += T(met.dxi(e, d, c, n)) * ws.tmp[n];
      }
    }

  for (std::size_t n = 0; n < nn; ++n) {
    const double jw = met.jac(e, n) * w3[n];
    const std::size_t bi = bg.index(e, n, *m.numbering);
    for (std::size_t v = 0; v < kNumVars; ++v) {
      T s = ws.div[v * nn + n];
      if (v == kRhoW) s += (q[kRho * nn + n] - T(bg.rho[bi])) * T(m.gas.g);
      out[v * nn + n] = T(-jw) * s;
      if (!std::isfinite(value_of(out[v * nn + n])))
        throw DivergedStateError("non-finite right-hand side", static_cast<std::ptrdiff_t>(e));
    }
  }
}

/// RHS dq/dt with the state read through the CG numbering.
StateCG create_rhs(const StateCG& state, const Model& m);

/// Same RHS with the state read from duplicated element storage.
StateCG create_rhs(const StateDG& state, const Model& m);

/// Directional derivative of create_rhs at state along direction (dual-number kernel).
StateCG create_rhs_jvp(const StateCG& state, const StateCG& direction, const Model& m);

/// Element batches in which no two elements share a global node.
struct ElementSchedule {
  std::vector<std::vector<std::size_t>> batches;
};

ElementSchedule color_elements(const CgNumbering& numbering, std::size_t element_count);

/// Fused variant: threads accumulate element contributions directly into the
/// CG result, one color batch at a time. Summation order differs from DSS.
StateCG create_rhs_scheduled(const StateCG& state, const Model& m, const ElementSchedule& schedule,
                             int threads);

/// F (x) F (x) F on the perturbation from the background, mass-weighted DSS,
/// background added back. strength 0 returns the state unchanged.
StateCG apply_filter(const StateCG& state, const Model& m);

/// Zero the wall-normal momentum at wall nodes.
void apply_boundary(StateCG& state, const CgNumbering& numbering);

/// Wall-normal momentum projection for one node's values.
void project_wall_momentum(std::span<double> node_values, std::uint8_t walls);

/// Partition-local operator used by each worker. State layout is local CG
/// ([ln * 5 + v]) for the CG and hybrid schemes and local DG
/// ([(le * 5 + v) * N + n]) for the DG scheme.
class LocalOperator {
public:
  LocalOperator(const Model& m, const LocalDomain& domain, StorageScheme scheme,
                HaloExchanger* exchanger);

  std::size_t state_size() const noexcept;
  StorageScheme scheme() const noexcept { return scheme_; }

  /// Copies this partition's slice from a global CG state.
  void load(const StateCG& global, std::span<double> u) const;
  /// Writes owned nodes of u into the global CG state.
  void store(std::span<const double> u, StateCG& global) const;

  void rhs(std::span<const double> u, std::span<double> f);
  void filter(std::span<double> u);
  void apply_boundary(std::span<double> u) const;

  double kernel_seconds = 0.0;
  double dss_seconds = 0.0;
  double filter_seconds = 0.0;

private:
  void element_values(std::span<const double> u, std::size_t le, std::span<double> q) const;
  void scatter_local(std::span<const double> cg, std::span<double> u) const;

  const Model& m_;
  const LocalDomain& domain_;
  StorageScheme scheme_;
  HaloExchanger* exchanger_;
  RhsWorkspace<double> ws_;
  std::vector<double> q_;
  std::vector<double> contributions_;
  std::vector<double> assembled_;
  std::vector<double> background_node_;  // [ln * 5 + v] background state (zero momentum)
};

}  // namespace sem
