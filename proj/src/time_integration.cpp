#include "sem/time_integration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sem {

RkScheme RkScheme::ssp53() {
  // Radius of absolute monotonicity r; the first two stages are forward Euler
  // steps of size dt / r.
  const double r = 2.6506291914393976;
  const double b10 = 0.37726891533136705128;
  const double b32 = 0.23307808027665372;
  const double b43 = 0.25020794114022467321;
  const double b50 = 0.0095781130232417372468;
  const double b51 = 0.081901329095129834303;
  const double b54 = 0.28578947321299709757;
  RkScheme s;
  s.name = "ssp53";
  s.stages = 5;
  s.order = 3;
  s.alpha = {{}, {1.0}, {0.0, 1.0}, {1.0 - r * b32, 0.0, r * b32}, {1.0 - r * b43, 0.0, 0.0, r * b43},
             {0.0, r * b51, 0.0, 0.0, r * b54}};
  s.alpha[5][0] = 1.0 - s.alpha[5][1] - s.alpha[5][4];
  s.beta = {{}, {b10}, {0.0, b10}, {0.0, 0.0, b32}, {0.0, 0.0, 0.0, b43}, {b50, b51, 0.0, 0.0, b54}};
  return s;
}

RkScheme RkScheme::ssp33() {
  RkScheme s;
  s.name = "ssp33";
  s.stages = 3;
  s.order = 3;
  s.alpha = {{}, {1.0}, {0.75, 0.25}, {1.0 / 3.0, 0.0, 2.0 / 3.0}};
  s.beta = {{}, {1.0}, {0.0, 0.25}, {0.0, 0.0, 2.0 / 3.0}};
  return s;
}

RkScheme RkScheme::forward_euler() {
  RkScheme s;
  s.name = "euler";
  s.stages = 1;
  s.order = 1;
  s.alpha = {{}, {1.0}};
  s.beta = {{}, {1.0}};
  return s;
}

ButcherTableau to_butcher(const RkScheme& scheme) {
  const int s = scheme.stages;
  if (static_cast<int>(scheme.alpha.size()) != s + 1 || static_cast<int>(scheme.beta.size()) != s + 1)
    throw InvalidArgument("RkScheme: need stages + 1 coefficient rows");
  // coef[i][k]: weight of dt F(u(k)) in u(i) - u_n.
  std::vector<std::vector<double>> coef(s + 1, std::vector<double>(s, 0.0));
  for (int i = 1; i <= s; ++i) {
    if (static_cast<int>(scheme.alpha[i].size()) != i || static_cast<int>(scheme.beta[i].size()) != i)
      throw InvalidArgument("RkScheme: row i must have i entries");
    for (int j = 0; j < i; ++j) {
      for (int k = 0; k < s; ++k) coef[i][k] += scheme.alpha[i][j] * coef[j][k];
      coef[i][j] += scheme.beta[i][j];
    }
  }
  ButcherTableau t;
  t.a.assign(coef.begin(), coef.begin() + s);
  t.b = coef[s];
  for (const auto& row : t.a) {
    double c = 0.0;
    for (double v : row) c += v;
    t.c.push_back(c);
  }
  return t;
}

double OrderReport::max_residual(int order) const {
  double m = std::abs(consistency);
  if (order >= 1) m = std::max(m, std::abs(order1));
  if (order >= 2) m = std::max(m, std::abs(order2));
  if (order >= 3) m = std::max({m, std::abs(order3a), std::abs(order3b)});
  return m;
}

OrderReport verify_order_conditions(const RkScheme& scheme) {
  const auto t = to_butcher(scheme);
  OrderReport r;
  for (int i = 1; i <= scheme.stages; ++i) {
    double s = 0.0;
    for (double a : scheme.alpha[i]) s += a;
    r.consistency = std::max(r.consistency, std::abs(s - 1.0));
  }
  const std::size_t n = t.b.size();
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += t.b[i];
    s2 += t.b[i] * t.c[i];
    s3 += t.b[i] * t.c[i] * t.c[i];
    double ac = 0.0;
    for (std::size_t j = 0; j < n; ++j) ac += t.a[i][j] * t.c[j];
    s4 += t.b[i] * ac;
  }
  r.order1 = s1 - 1.0;
  r.order2 = s2 - 0.5;
  r.order3a = s3 - 1.0 / 3.0;
  r.order3b = s4 - 1.0 / 6.0;
  return r;
}

void require_order_conditions(const RkScheme& scheme, double tol) {
  const auto r = verify_order_conditions(scheme);
  if (!r.satisfies(scheme.order, tol))
    throw InvalidArgument("RK scheme '" + scheme.name + "' violates its order conditions (residual " +
                          std::to_string(r.max_residual(scheme.order)) + ")");
}

RkIntegrator::RkIntegrator(RkScheme scheme, std::size_t size)
    : scheme_(std::move(scheme)), size_(size) {
  require_order_conditions(scheme_);
  const int s = scheme_.stages;
  stage_u_.assign(s, std::vector<double>(size));
  stage_f_.assign(s, std::vector<double>(size));
}

void RkIntegrator::step(std::span<double> u, double dt, const RhsFunction& rhs,
                        const StepHooks& hooks) {
  if (u.size() != size_) throw InvalidArgument("RkIntegrator::step: state size mismatch");
  const int s = scheme_.stages;
  std::copy(u.begin(), u.end(), stage_u_[0].begin());
  for (int i = 1; i <= s; ++i) {
    rhs(stage_u_[i - 1], stage_f_[i - 1]);
    std::span<double> out = i < s ? std::span<double>(stage_u_[i]) : u;
    const auto& a = scheme_.alpha[i];
    const auto& b = scheme_.beta[i];
    for (std::size_t k = 0; k < size_; ++k) {
      double v = 0.0;
      for (int j = 0; j < i; ++j) {
        if (a[j] != 0.0) v += a[j] * stage_u_[j][k];
        if (b[j] != 0.0) v += dt * b[j] * stage_f_[j][k];
      }
      out[k] = v;
    }
    if (hooks.boundary) hooks.boundary(out);
    if (hooks.imex) hooks.imex(out);
  }
  if (hooks.filter) {
    hooks.filter(u);
    if (hooks.boundary) hooks.boundary(u);
  }
}

double compute_dt(const StateCG& state, const Model& m, const TimestepControl& control) {
  if (!(control.courant_h > 0.0) || !(control.courant_v > 0.0))
    throw InvalidArgument("compute_dt: Courant numbers must be positive");
  const auto& ref = *m.ref;
  const auto& met = *m.metrics;
  const std::size_t n1 = ref.points_1d();
  double dt = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < m.mesh->element_count(); ++e)
    for (std::size_t k = 0; k < n1; ++k)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t i = 0; i < n1; ++i) {
          const std::size_t n = node_index(i, j, k, n1);
          const auto g = m.numbering->id(e, n);
          const double rho = state.at(g, kRho);
          const double c = sound_speed(rho, state.at(g, kTheta), m.gas);
          if (!std::isfinite(c)) throw DivergedStateError("compute_dt: non-finite wave speed", e);
          const std::size_t idx[3] = {i, j, k};
          for (int d = 0; d < 3; ++d) {
            // Gap to the nearer neighbor along reference axis d.
            double gap = std::numeric_limits<double>::infinity();
            for (int side : {-1, 1}) {
              const long nb = static_cast<long>(idx[d]) + side;
              if (nb < 0 || nb >= static_cast<long>(n1)) continue;
              std::size_t o[3] = {i, j, k};
              o[d] = static_cast<std::size_t>(nb);
              const std::size_t n2 = node_index(o[0], o[1], o[2], n1);
              double dist2 = 0.0;
              for (int cc = 0; cc < 3; ++cc) {
                const double dx = met.coord(e, cc, n2) - met.coord(e, cc, n);
                dist2 += dx * dx;
              }
              gap = std::min(gap, std::sqrt(dist2));
            }
            const double speed = std::abs(state.at(g, kRhoU + d) / rho) + c;
            const double courant = d == 2 ? control.courant_v : control.courant_h;
            dt = std::min(dt, courant * gap / speed);
          }
        }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("compute_dt: non-positive timestep");
  return dt;
}

}  // namespace sem
