#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "sem/dynamics.hpp"
#include "sem/harness.hpp"

namespace semtest {

// Mesh + operators + a background, wired into a Model. Not copyable: the
// Model points into the members.
struct Setup {
  sem::ColumnMesh mesh;
  sem::ReferenceElement ref;
  sem::MetricTerms metrics;
  sem::CgNumbering num;
  sem::ReferenceAtmosphereField bg;
  sem::Model model;

  Setup(const sem::BoxSpec& spec, int order, sem::FilterParams filter = {},
        sem::GasConstants gas = {})
      : mesh(sem::build_box_mesh(spec)),
        ref(order, filter),
        metrics(sem::compute_metrics(mesh, ref)),
        num(sem::build_cg_numbering(mesh, ref, metrics)) {
    model.mesh = &mesh;
    model.ref = &ref;
    model.metrics = &metrics;
    model.numbering = &num;
    model.background = &bg;
    model.gas = gas;
    set_hydrostatic(sem::FieldLayout::CG, 300.0);
  }
  Setup(const Setup&) = delete;

  std::size_t nn() const { return ref.nodes_per_element(); }
  std::size_t ne() const { return mesh.element_count(); }

  sem::Vec3 position(std::size_t e, std::size_t n) const {
    return {metrics.coord(e, 0, n), metrics.coord(e, 1, n), metrics.coord(e, 2, n)};
  }
  sem::Vec3 position(std::size_t g) const {
    const auto r = num.incidence_offsets[g];
    return position(num.incidence_element[r], num.incidence_local[r]);
  }

  // Generic background from per-height values.
  template <class F>
  void set_background(sem::FieldLayout layout, F f) {
    bg.layout = layout;
    const std::size_t count = layout == sem::FieldLayout::CG ? num.unique_count : ne() * nn();
    bg.rho.assign(count, 0.0);
    bg.pressure.assign(count, 0.0);
    bg.theta.assign(count, 0.0);
    for (std::size_t e = 0; e < ne(); ++e)
      for (std::size_t n = 0; n < nn(); ++n) {
        const auto b = f(position(e, n));
        const auto i = bg.index(e, n, num);
        bg.rho[i] = b.rho;
        bg.pressure[i] = b.pressure;
        bg.theta[i] = b.theta;
      }
  }

  void set_hydrostatic(sem::FieldLayout layout, double theta0) {
    set_background(layout, [&](const sem::Vec3& x) { return sem::background_at(x.z, theta0, model.gas); });
  }

  sem::StateCG rest_state() const {
    sem::StateCG s(num.unique_count);
    for (std::size_t e = 0; e < ne(); ++e)
      for (std::size_t n = 0; n < nn(); ++n) {
        const auto g = num.id(e, n);
        const auto i = bg.index(e, n, num);
        s.at(g, sem::kRho) = bg.rho[i];
        s.at(g, sem::kTheta) = bg.theta[i];
      }
    return s;
  }

  // Rest state with random density, velocity and temperature perturbations.
  sem::StateCG random_state(std::uint32_t seed, double amplitude = 1.0) const {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto s = rest_state();
    for (std::size_t g = 0; g < s.nodes; ++g) {
      const double rho = s.at(g, sem::kRho) * (1.0 + 0.01 * amplitude * u(rng));
      const double theta = s.at(g, sem::kTheta) / s.at(g, sem::kRho) + amplitude * u(rng);
      s.at(g, sem::kRho) = rho;
      s.at(g, sem::kRhoU) = rho * 5.0 * amplitude * u(rng);
      s.at(g, sem::kRhoV) = rho * 5.0 * amplitude * u(rng);
      s.at(g, sem::kRhoW) = rho * 5.0 * amplitude * u(rng);
      s.at(g, sem::kTheta) = rho * theta;
    }
    return s;
  }
};

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace semtest
