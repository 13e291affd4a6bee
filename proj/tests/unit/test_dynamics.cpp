#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "sem/error.hpp"
#include "sem/tensor.hpp"
#include "sem/time_integration.hpp"

using namespace sem;
using semtest::max_abs;
using semtest::max_abs_diff;
using semtest::Setup;

namespace {

GasConstants no_gravity() {
  GasConstants g;
  g.g = 0.0;
  return g;
}

// Uniform background for g = 0 runs.
void uniform_background(Setup& s, FieldLayout layout, double rho, double theta0) {
  const double p = pressure(rho, rho * theta0, s.model.gas);
  s.set_background(layout, [&](const Vec3&) { return BackgroundPoint{rho, p, rho * theta0}; });
}

BoxSpec curved(int nx, int ny, int nz) {
  BoxSpec spec{nx, ny, nz, 1000.0, 1000.0, 1000.0};
  spec.mapping = [](const Vec3& x) {
    const double s = std::sin(M_PI * x.x / 1000.0) * std::sin(M_PI * x.y / 1000.0);
    return Vec3{x.x + 15.0 * std::sin(M_PI * x.z / 1000.0), x.y, x.z + 30.0 * s};
  };
  return spec;
}

StateCG through_local_operator(const Setup& s, const StateCG& state, StorageScheme scheme) {
  auto ps = partition_columns(s.mesh, 1);
  attach_halos(ps, s.mesh, s.num);
  LocalDomain d(ps, 0, s.num);
  LocalOperator op(s.model, d, scheme, nullptr);
  std::vector<double> u(op.state_size()), f(op.state_size());
  op.load(state, u);
  op.rhs(u, f);
  StateCG out(s.num.unique_count);
  op.store(f, out);
  return out;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("gas constants") {
  GasConstants g;
  CHECK(g.cp == g.cv + g.r);
  CHECK(g.gamma() == doctest::Approx(1.4).epsilon(1e-15));
  GasConstants bad;
  bad.cv = 700.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("equation of state") {
  GasConstants g;
  CHECK(pressure(1.0, g.p0 / g.r, g) == doctest::Approx(g.p0).epsilon(1e-15));
  const double theta = 300.0;
  const double expect = 1e5 * std::pow(0.861, 1.4);
  const double log_form = std::exp(std::log(1e5) + 1.4 * std::log(287.0 * theta / 1e5));
  CHECK(pressure(1.0, theta, g) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(pressure(1.0, theta, g) == doctest::Approx(log_form).epsilon(1e-14));
  const double t0 = g.p0 / g.r;
  const double h = 1e-4 * t0;
  const double fd = (pressure(1.0, t0 + h, g) - pressure(1.0, t0 - h, g)) / (2.0 * h);
  CHECK(std::abs(fd - g.gamma() * g.r) < 1e-6 * g.gamma() * g.r);
  // Dual-number derivative of the same closure.
  const auto d = pressure_unchecked(Dual{t0, 1.0}, g);
  CHECK(d.d == doctest::Approx(g.gamma() * g.r).epsilon(1e-13));
  CHECK_THROWS_AS(pressure(0.0, 300.0, g), DivergedStateError);
  CHECK_THROWS_AS(pressure(1.0, -1.0, g), DivergedStateError);
  // c^2 = gamma P / rho = gamma R T with T = P / (rho R).
  const double rho = 1.1, th = rho * 305.0;
  const double p = pressure(rho, th, g);
  CHECK(sound_speed(rho, th, g) == doctest::Approx(std::sqrt(g.gamma() * g.r * p / (rho * g.r))));
}

TEST_CASE("flux tensor") {
  GasConstants g;
  const double q0[5] = {1.0, 0.0, 0.0, 0.0, 300.0};
  auto f0 = flux(std::span<const double, 5>(q0), pressure(1.0, 300.0, g), g);
  for (auto& row : f0.f)
    for (double x : row) CHECK(x == 0.0);

  const double q1[5] = {1.0, 1.0, 0.0, 0.0, 300.0};
  auto f1 = flux(std::span<const double, 5>(q1), pressure(1.0, 300.0, g), g);
  CHECK(f1.f[0][0] == 1.0);
  CHECK(f1.f[0][1] == 0.0);
  CHECK(f1.f[1][0] == 1.0);
  CHECK(f1.f[2][2] == 0.0);
  CHECK(f1.f[4][0] == 300.0);
  CHECK(f1.f[4][1] == 0.0);

  const double a[5] = {1.2, 0.3, -0.7, 1.9, 350.0};
  const double b[5] = {1.2, 0.3, 1.9, -0.7, 350.0};
  const double pb = 0.9e5;
  auto fa = flux(std::span<const double, 5>(a), pb, g);
  auto fb = flux(std::span<const double, 5>(b), pb, g);
  const int perm[5] = {0, 1, 3, 2, 4};
  const int col[3] = {0, 2, 1};
  for (int v = 0; v < 5; ++v)
    for (int c = 0; c < 3; ++c) CHECK(fa.f[v][c] == doctest::Approx(fb.f[perm[v]][col[c]]));
}

TEST_CASE("local derivative on an affine element") {
  Setup s({1, 1, 1, 10.0, 20.0, 40.0}, 3);
  const std::size_t nn = s.nn();
  std::vector<double> c(nn, 7.0), x(nn), x2y(nn);
  for (std::size_t n = 0; n < nn; ++n) {
    const auto p = s.position(0, n);
    x[n] = p.x;
    x2y[n] = p.x * p.x * p.y;
  }
  for (int axis = 0; axis < 3; ++axis) CHECK(max_abs(local_derivative(c, s.metrics, 0, s.ref, axis)) < 1e-13);
  const auto dx = local_derivative(x, s.metrics, 0, s.ref, 0);
  const auto dy = local_derivative(x, s.metrics, 0, s.ref, 1);
  const auto d2 = local_derivative(x2y, s.metrics, 0, s.ref, 0);
  const auto d2y = local_derivative(x2y, s.metrics, 0, s.ref, 1);
  for (std::size_t n = 0; n < nn; ++n) {
    const auto p = s.position(0, n);
    CHECK(std::abs(dx[n] - 1.0) < 1e-12);
    CHECK(std::abs(dy[n]) < 1e-12);
    CHECK(std::abs(d2[n] - 2.0 * p.x * p.y) < 1e-12 * 400.0);
    CHECK(std::abs(d2y[n] - p.x * p.x) < 1e-12 * 100.0);
  }
}

TEST_CASE("hydrostatic rest state has zero tendency") {
  for (int p : {2, 3, 4}) {
    Setup s({2, 2, 4, 1000.0, 1000.0, 1000.0}, p);
    const auto rest = s.rest_state();
    const double tol = 1e-10 * 1.2 * s.model.gas.g;
    CHECK(max_abs(create_rhs(rest, s.model).values) < tol);
    s.set_hydrostatic(FieldLayout::DG, 300.0);
    CHECK(max_abs(create_rhs(s.rest_state(), s.model).values) < tol);
  }
  // Curved mesh: the background is evaluated at the mapped node heights.
  Setup c(curved(2, 2, 2), 3);
  CHECK(max_abs(create_rhs(c.rest_state(), c.model).values) < 1e-10 * 1.2 * 9.81);
}

TEST_CASE("hydrostatic balance survives many evaluations") {
  Setup s({1, 1, 2, 1000.0, 1000.0, 1000.0}, 3);
  auto state = s.rest_state();
  const auto initial = state;
  RkIntegrator rk(RkScheme::ssp53(), state.values.size());
  const RhsFunction rhs = [&](std::span<const double> u, std::span<double> f) {
    StateCG in(s.num.unique_count);
    std::copy(u.begin(), u.end(), in.values.begin());
    const auto out = create_rhs(in, s.model);
    std::copy(out.values.begin(), out.values.end(), f.begin());
  };
  StepHooks hooks;
  hooks.boundary = [&](std::span<double> u) {
    StateCG st(s.num.unique_count);
    std::copy(u.begin(), u.end(), st.values.begin());
    apply_boundary(st, s.num);
    std::copy(st.values.begin(), st.values.end(), u.begin());
  };
  for (int step = 0; step < 2000; ++step) rk.step(state.values, 0.5, rhs, hooks);  // 10^4 evaluations
  CHECK(max_abs_diff(state.values, initial.values) < 1e-10 * 1.2 * 9.81);
}

TEST_CASE("free stream is preserved") {
  for (bool bent : {false, true}) {
    CAPTURE(bent);
    Setup s(bent ? curved(2, 2, 2) : BoxSpec{2, 2, 2, 1000.0, 1000.0, 1000.0}, 3, {}, no_gravity());
    uniform_background(s, FieldLayout::CG, 1.1, 300.0);
    StateCG u(s.num.unique_count);
    for (std::size_t g = 0; g < u.nodes; ++g) {
      u.at(g, kRho) = 1.1;
      u.at(g, kRhoU) = 1.1 * 10.0;
      u.at(g, kRhoV) = -1.1 * 5.0;
      u.at(g, kRhoW) = 1.1 * 3.0;
      u.at(g, kTheta) = 1.1 * 300.0;
    }
    CHECK(max_abs(create_rhs(u, s.model).values) < (bent ? 1e-10 : 1e-12));
  }
}

TEST_CASE("linear momentum field against the analytic divergence") {
  Setup s({2, 2, 2, 1000.0, 1000.0, 1000.0}, 3);
  const double rho = 1.05, theta = 1.05 * 310.0, pbar = 0.93e5;
  s.set_background(FieldLayout::CG, [](const Vec3& x) {
    return BackgroundPoint{1.2 - 1e-4 * x.z, 0.93e5, 360.0};
  });
  const double a[3] = {2.0, -1.0, 0.5};
  const double b[3][3] = {{1e-3, 2e-3, -1e-3}, {-2e-3, 5e-4, 1e-3}, {3e-3, -1e-3, 2e-3}};
  auto mom = [&](const Vec3& x, int i) { return a[i] + b[i][0] * x.x + b[i][1] * x.y + b[i][2] * x.z; };
  StateCG u(s.num.unique_count);
  for (std::size_t g = 0; g < u.nodes; ++g) {
    const auto x = s.position(g);
    u.at(g, kRho) = rho;
    for (int i = 0; i < 3; ++i) u.at(g, kRhoU + i) = mom(x, i);
    u.at(g, kTheta) = theta;
  }
  (void)pbar;
  const auto r = create_rhs(u, s.model);
  const double div = b[0][0] + b[1][1] + b[2][2];
  double worst = 0.0;
  for (std::size_t g = 0; g < u.nodes; ++g) {
    const auto x = s.position(g);
    double m[3];
    for (int i = 0; i < 3; ++i) m[i] = mom(x, i);
    double expect[5];
    expect[0] = -div;
    for (int i = 0; i < 3; ++i) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += (b[i][c] * m[c] + m[i] * b[c][c]) / rho;
      expect[1 + i] = -d;
    }
    expect[3] -= (rho - (1.2 - 1e-4 * x.z)) * s.model.gas.g;
    expect[4] = -theta / rho * div;
    for (int v = 0; v < 5; ++v) worst = std::max(worst, std::abs(r.at(g, v) - expect[v]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("storage schemes produce the same tendency") {
  Setup s(curved(2, 2, 3), 3);
  const auto state = s.random_state(17);
  const auto cg = create_rhs(state, s.model);
  const auto via_dg = create_rhs(scatter(state, s.num), s.model);
  const double scale = max_abs(cg.values);
  CHECK(max_abs_diff(cg.values, via_dg.values) <= 1e-12 * scale);
  CHECK(max_abs_diff(cg.values, through_local_operator(s, state, StorageScheme::CG).values) <= 1e-12 * scale);

  s.set_hydrostatic(FieldLayout::DG, 300.0);
  const auto hybrid = through_local_operator(s, state, StorageScheme::Hybrid);
  const auto dg = through_local_operator(s, state, StorageScheme::DG);
  CHECK(max_abs_diff(cg.values, create_rhs(state, s.model).values) <= 1e-12 * scale);
  CHECK(max_abs_diff(cg.values, hybrid.values) <= 1e-12 * scale);
  CHECK(max_abs_diff(cg.values, dg.values) <= 1e-12 * scale);
}

TEST_CASE("directional derivative matches central differences") {
  Setup s(curved(2, 2, 2), 2);
  const auto state = s.random_state(23);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateCG dir(state.nodes);
  for (std::size_t i = 0; i < dir.values.size(); ++i) dir.values[i] = u(rng) * std::abs(state.values[i]) + u(rng);
  const double h = 1e-6;
  StateCG plus = state, minus = state;
  for (std::size_t i = 0; i < dir.values.size(); ++i) {
    plus.values[i] += h * dir.values[i];
    minus.values[i] -= h * dir.values[i];
  }
  const auto fp = create_rhs(plus, s.model);
  const auto fm = create_rhs(minus, s.model);
  const auto jvp = create_rhs_jvp(state, dir, s.model);
  const double scale = max_abs(jvp.values);
  double worst = 0.0;
  for (std::size_t i = 0; i < jvp.values.size(); ++i)
    worst = std::max(worst, std::abs((fp.values[i] - fm.values[i]) / (2.0 * h) - jvp.values[i]));
  CHECK(worst <= 1e-5 * scale);
}

TEST_CASE("no-flux walls: mass tendency is negligible") {
  Setup s({2, 2, 2, 1000.0, 1000.0, 1000.0}, 3);
  auto state = s.random_state(31);
  apply_boundary(state, s.num);
  const auto r = create_rhs(state, s.model);
  double dm = 0.0, mass = 0.0;
  for (std::size_t g = 0; g < state.nodes; ++g) {
    dm += s.num.mass[g] * r.at(g, kRho);
    mass += s.num.mass[g] * state.at(g, kRho);
  }
  const double frequency = 347.0 / 1000.0;
  CHECK(std::abs(dm) < 1e-8 * mass * frequency);
}

TEST_CASE("non-physical state names the element") {
  Setup s({2, 2, 2, 1000.0, 1000.0, 1000.0}, 3);
  auto state = s.rest_state();
  const std::size_t e = 5;
  const auto g = s.num.id(e, node_index(1, 1, 1, 4));
  state.at(g, kRho) = -1.0;
  try {
    create_rhs(state, s.model);
    FAIL("expected divergence");
  } catch (const DivergedStateError& err) {
    CHECK(err.element() == static_cast<std::ptrdiff_t>(e));
  }
  state.at(g, kRho) = std::nan("");
  CHECK_THROWS_AS(create_rhs(state, s.model), DivergedStateError);
}

TEST_CASE("neighbor-exclusion schedule") {
  Setup s({4, 4, 3, 1000.0, 1000.0, 1000.0}, 2);
  const auto sched = color_elements(s.num, s.ne());
  std::vector<int> seen(s.ne(), 0);
  for (const auto& batch : sched.batches) {
    std::set<std::int64_t> nodes;
    for (auto e : batch) {
      ++seen[e];
      for (std::size_t n = 0; n < s.nn(); ++n) CHECK(nodes.insert(s.num.id(e, n)).second);
    }
  }
  for (int c : seen) CHECK(c == 1);

  const auto state = s.random_state(8);
  const auto ref = create_rhs(state, s.model);
  for (int threads : {1, 3, 4}) {
    const auto out = create_rhs_scheduled(state, s.model, sched, threads);
    CHECK(max_abs_diff(ref.values, out.values) <= 1e-12 * max_abs(ref.values));
  }
  auto bad = state;
  bad.at(s.num.id(7, 0), kTheta) = -5.0;
  CHECK_THROWS_AS(create_rhs_scheduled(bad, s.model, sched, 4), DivergedStateError);
}

TEST_CASE("filter application") {
  Setup s({2, 2, 2, 1000.0, 1000.0, 1000.0}, 3, {0.0, 12.0, -1});
  const auto state = s.random_state(4);
  CHECK(apply_filter(state, s.model).values == state.values);

  Setup f({2, 2, 2, 1000.0, 1000.0, 1000.0}, 3, {}, no_gravity());
  uniform_background(f, FieldLayout::CG, 1.1, 300.0);
  StateCG c(f.num.unique_count);
  for (std::size_t g = 0; g < c.nodes; ++g) {
    const double q[5] = {1.3, 2.0, -1.0, 0.5, 400.0};
    for (int v = 0; v < 5; ++v) c.at(g, v) = q[v];
  }
  const auto fc = apply_filter(c, f.model);
  for (std::size_t i = 0; i < c.values.size(); ++i)
    CHECK(std::abs(fc.values[i] - c.values[i]) <= 1e-13 * std::abs(c.values[i]));

  // One element, P_3 along x: the top mode shrinks by sigma_3, nothing else moves.
  Setup one({1, 1, 1, 1000.0, 1000.0, 1000.0}, 3, {}, no_gravity());
  uniform_background(one, FieldLayout::CG, 1.1, 300.0);
  StateCG u(one.num.unique_count);
  const double amp = 0.01;
  for (std::size_t n = 0; n < one.nn(); ++n) {
    const auto g = one.num.id(0, n);
    const double xi = one.position(0, n).x / 500.0 - 1.0;
    u.at(g, kRho) = 1.1 + amp * legendre(3, xi);
    u.at(g, kTheta) = 1.1 * 300.0;
  }
  const auto fu = apply_filter(u, one.model);
  const double sigma3 = filter_transfer(3, 0.05, 12.0, 3)[3];
  CHECK(sigma3 == doctest::Approx(0.95));
  for (std::size_t g = 0; g < u.nodes; ++g) {
    const double before = u.at(g, kRho) - 1.1;
    CHECK(std::abs((fu.at(g, kRho) - 1.1) - sigma3 * before) < 1e-12 * amp);
    CHECK(std::abs(fu.at(g, kTheta) - u.at(g, kTheta)) < 1e-12 * 330.0);
  }
}

TEST_CASE("wall boundary projection") {
  double interior[5] = {1.0, 2.0, 3.0, 4.0, 5.0};
  project_wall_momentum(interior, 0);
  CHECK(std::vector<double>(interior, interior + 5) == std::vector<double>{1, 2, 3, 4, 5});
  double floor[5] = {1.0, 2.0, 3.0, 4.0, 5.0};
  project_wall_momentum(floor, kWallZMin);
  CHECK(std::vector<double>(floor, floor + 5) == std::vector<double>{1, 2, 3, 0, 5});
  double corner[5] = {1.0, 2.0, 3.0, 4.0, 5.0};
  project_wall_momentum(corner, kWallXMin | kWallZMin);
  CHECK(std::vector<double>(corner, corner + 5) == std::vector<double>{1, 0, 3, 0, 5});

  Setup s({2, 2, 2, 1000.0, 1000.0, 1000.0}, 2);
  const auto state = s.random_state(12);
  auto b = state;
  apply_boundary(b, s.num);
  for (std::size_t g = 0; g < b.nodes; ++g) {
    const auto w = s.num.walls[g];
    if (!w) {
      for (int v = 0; v < 5; ++v) CHECK(b.at(g, v) == state.at(g, v));
      continue;
    }
    CHECK((((w & (kWallXMin | kWallXMax)) != 0) ? b.at(g, kRhoU) == 0.0 : b.at(g, kRhoU) == state.at(g, kRhoU)));
    CHECK((((w & (kWallZMin | kWallZMax)) != 0) ? b.at(g, kRhoW) == 0.0 : b.at(g, kRhoW) == state.at(g, kRhoW)));
    CHECK(b.at(g, kRho) == state.at(g, kRho));
  }
}

}  // TEST_SUITE
