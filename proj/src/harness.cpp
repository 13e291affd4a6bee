#include "sem/harness.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace sem {

namespace {

using Clock = std::chrono::steady_clock;

FieldLayout background_layout(StorageScheme s) {
  return s == StorageScheme::CG ? FieldLayout::CG : FieldLayout::DG;
}

}  // namespace

void BubbleConfig::validate() const {
  if (!(lx > 0.0) || !(ly > 0.0) || !(lz > 0.0)) throw ConfigError("domain extents must be positive");
  if (!(theta0 > 0.0)) throw ConfigError("theta0 must be positive");
  if (!(radius > 0.0)) throw ConfigError("bubble radius must be positive");
  if (center.x - radius < 0.0 || center.x + radius > lx || center.y - radius < 0.0 ||
      center.y + radius > ly || center.z - radius < 0.0 || center.z + radius > lz)
    throw ConfigError("bubble perturbation must lie inside the domain");
  if (order < 1) throw ConfigError("order must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (nx < 1 || ny < 1 || (nx & (nx - 1)) || (ny & (ny - 1)))
    throw ConfigError("nx and ny must be powers of two");
  if (!(courant_h > 0.0) || !(courant_v > 0.0)) throw ConfigError("Courant numbers must be positive");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (partitions < 1 || partitions > nx * ny)
    throw ConfigError("partitions must lie in [1, nx * ny]");
  if (filter.strength < 0.0 || filter.strength > 1.0) throw ConfigError("filter strength must lie in [0, 1]");
  if (snapshot_every < 0) throw ConfigError("snapshot interval must be >= 0");
  try {
    gas.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

BackgroundPoint background_at(double z, double theta0, const GasConstants& gas) {
  const double exner = 1.0 - gas.g * z / (gas.cp * theta0);
  if (!(exner > 0.0)) throw ConfigError("domain top exceeds the height of the neutral atmosphere");
  BackgroundPoint b;
  b.rho = gas.p0 * std::pow(exner, gas.cv / gas.r) / (gas.r * theta0);
  b.theta = b.rho * theta0;
  // Stored through the discrete equation of state so that P' vanishes exactly at rest.
  b.pressure = pressure(b.rho, b.theta, gas);
  return b;
}

double bubble_perturbation(const Vec3& x, const BubbleConfig& c) {
  const double dx = x.x - c.center.x;
  const double dy = x.y - c.center.y;
  const double dz = x.z - c.center.z;
  const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (r > c.radius) return 0.0;
  return 0.5 * c.theta_c * (1.0 + std::cos(std::numbers::pi * r / c.radius));
}

BubbleInit init_bubble(const BubbleConfig& config, const ColumnMesh& mesh,
                       const MetricTerms& metrics, const CgNumbering& numbering) {
  config.validate();
  const std::size_t nn = numbering.nodes_per_element;
  const std::size_t ne = mesh.element_count();
  BubbleInit out;
  out.state = StateCG(numbering.unique_count);
  auto& bg = out.background;
  bg.layout = background_layout(config.scheme);
  const std::size_t count = bg.layout == FieldLayout::CG ? numbering.unique_count : ne * nn;
  bg.rho.resize(count);
  bg.pressure.resize(count);
  bg.theta.resize(count);
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t n = 0; n < nn; ++n) {
      const Vec3 x{metrics.coord(e, 0, n), metrics.coord(e, 1, n), metrics.coord(e, 2, n)};
      const auto b = background_at(x.z, config.theta0, config.gas);
      const std::size_t bi = bg.index(e, n, numbering);
      bg.rho[bi] = b.rho;
      bg.pressure[bi] = b.pressure;
      bg.theta[bi] = b.theta;
      const auto g = numbering.id(e, n);
      // Theta and hence pressure stay at the background; the warm anomaly
      // is carried by a density deficit.
      const double theta = config.theta0 + bubble_perturbation(x, config);
      out.state.at(g, kRho) = b.theta / theta;
      out.state.at(g, kRhoU) = 0.0;
      out.state.at(g, kRhoV) = 0.0;
      out.state.at(g, kRhoW) = 0.0;
      out.state.at(g, kTheta) = b.theta;
    }
  return out;
}

Simulation::Simulation(const BubbleConfig& config)
    : config_((config.validate(), config)),
      mesh_(build_box_mesh(BoxSpec{config.nx, config.ny, config.layers, config.lx, config.ly,
                                   config.lz, 0.0, {}})),
      ref_(config.order, config.filter),
      metrics_(compute_metrics(mesh_, ref_)),
      numbering_(build_cg_numbering(mesh_, ref_, metrics_)) {
  background_ = init_bubble(config_, mesh_, metrics_, numbering_).background;
  model_.mesh = &mesh_;
  model_.ref = &ref_;
  model_.metrics = &metrics_;
  model_.numbering = &numbering_;
  model_.background = &background_;
  model_.gas = config_.gas;

  positions_.resize(numbering_.unique_count);
  theta_bar_.resize(numbering_.unique_count);
  for (std::size_t g = 0; g < numbering_.unique_count; ++g) {
    const auto r = numbering_.incidence_offsets[g];
    const auto e = numbering_.incidence_element[r];
    const auto n = numbering_.incidence_local[r];
    positions_[g] = {metrics_.coord(e, 0, n), metrics_.coord(e, 1, n), metrics_.coord(e, 2, n)};
    const auto bi = background_.index(e, n, numbering_);
    theta_bar_[g] = background_.theta[bi] / background_.rho[bi];
  }
}

StateCG Simulation::initial_state() const {
  return init_bubble(config_, mesh_, metrics_, numbering_).state;
}

Diagnostics diagnose(const Simulation& sim, const StateCG& s, long step, double time) {
  const auto& num = sim.numbering();
  Diagnostics d;
  d.step = step;
  d.time = time;
  d.theta_min = std::numeric_limits<double>::infinity();
  d.theta_max = -std::numeric_limits<double>::infinity();
  double weight = 0.0;
  double moment = 0.0;
  for (std::size_t g = 0; g < num.unique_count; ++g) {
    const double rho = s.at(g, kRho);
    const double m = num.mass[g];
    d.mass += m * rho;
    const double tp = s.at(g, kTheta) / rho - sim.background_theta()[g];
    d.theta_min = std::min(d.theta_min, tp);
    d.theta_max = std::max(d.theta_max, tp);
    const double u = s.at(g, kRhoU) / rho;
    const double v = s.at(g, kRhoV) / rho;
    const double w = s.at(g, kRhoW) / rho;
    d.max_speed = std::max(d.max_speed, std::sqrt(u * u + v * v + w * w));
    weight += m * tp;
    moment += m * tp * sim.node_positions()[g].z;
  }
  d.centroid_z = weight != 0.0 ? moment / weight : 0.0;
  return d;
}

RunReport run(const BubbleConfig& config) {
  const Simulation sim(config);
  return run(sim, config.partitions);
}

RunReport run(const Simulation& sim, int partitions) {
  const auto& cfg = sim.config();
  const auto& model = sim.model();
  if (partitions < 1 || static_cast<std::size_t>(partitions) > sim.mesh().columns().size())
    throw ConfigError("partition count must lie in [1, column count]");

  RunReport report;
  report.partitions = partitions;
  report.hardware_threads = std::thread::hardware_concurrency();
  report.oversubscribed = report.hardware_threads > 0 &&
                          static_cast<unsigned>(partitions) > report.hardware_threads;

  StateCG shared = sim.initial_state();
  TimestepControl control;
  control.courant_h = cfg.courant_h;
  control.courant_v = cfg.courant_v;
  report.dt = compute_dt(shared, model, control);
  const long steps =
      cfg.end_time > 0.0 ? static_cast<long>(std::ceil(cfg.end_time / report.dt - 1e-9)) : cfg.steps;
  report.steps_requested = steps;
  report.history.push_back(diagnose(sim, shared, 0, 0.0));

  auto parts = partition_columns(sim.mesh(), partitions);
  attach_halos(parts, sim.mesh(), sim.numbering());
  for (const auto& p : parts) report.elements_per_partition.push_back(p.element_count);
  HaloExchanger exchanger(parts);
  std::vector<std::unique_ptr<LocalDomain>> domains;
  std::vector<std::unique_ptr<LocalOperator>> ops;
  for (int k = 0; k < partitions; ++k) {
    domains.push_back(std::make_unique<LocalDomain>(parts, k, sim.numbering()));
    ops.push_back(std::make_unique<LocalOperator>(model, *domains.back(), cfg.scheme, &exchanger));
  }

  std::atomic<bool> failed{false};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  long completed = 0;
  std::vector<PhaseTimes> worker_times(partitions);

  auto on_step = [&]() noexcept {
    if (failed.load()) return;
    ++completed;
    try {
      report.history.push_back(diagnose(sim, shared, completed, completed * report.dt));
      if (cfg.snapshot_every > 0 && !cfg.out_dir.empty() && completed % cfg.snapshot_every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "snap_%06ld", completed);
        const auto base = std::filesystem::path(cfg.out_dir) / name;
        SnapshotHeader h;
        h.order = static_cast<std::uint32_t>(cfg.order);
        h.elements = sim.mesh().element_count();
        h.nodes = shared.nodes;
        h.time = completed * report.dt;
        write_snapshot(base.string() + ".bin", h, shared.values);
        if (cfg.theta_csv) {
          std::ofstream os(base.string() + ".csv");
          os << format_theta_csv(sim, shared);
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failed.exchange(true)) {
        failure = std::current_exception();
        report.failure_step = completed;
      }
    }
  };
  std::barrier sync(partitions, on_step);

  auto worker = [&](int k) {
    auto& op = *ops[k];
    std::vector<double> u(op.state_size());
    op.load(shared, u);
    RkIntegrator integ(RkScheme::ssp53(), u.size());
    const RhsFunction rhs = [&](std::span<const double> in, std::span<double> out) { op.rhs(in, out); };
    StepHooks hooks;
    hooks.boundary = [&](std::span<double> s) { op.apply_boundary(s); };
    hooks.filter = [&](std::span<double> s) { op.filter(s); };
    Clock::time_point t0 = Clock::now();
    long s = 0;
    try {
      for (; s < steps; ++s) {
        if (s == 1) {
          // First step is warm-up.
          op.kernel_seconds = op.dss_seconds = op.filter_seconds = 0.0;
          t0 = Clock::now();
        }
        integ.step(u, report.dt, rhs, hooks);
        op.store(u, shared);
        sync.arrive_and_wait();
        if (failed.load()) return;
      }
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failed.exchange(true)) {
          failure = std::current_exception();
          report.failure_step = s + 1;
        }
      }
      exchanger.abort();
      sync.arrive_and_drop();
      return;
    }
    if (steps > 1) {
      auto& t = worker_times[k];
      t.total = std::chrono::duration<double>(Clock::now() - t0).count();
      t.create_rhs = op.kernel_seconds;
      t.dss = op.dss_seconds;
      t.filter = op.filter_seconds;
      t.update = std::max(0.0, t.total - t.create_rhs - t.dss - t.filter);
    }
  };

  {
    std::vector<std::jthread> pool;
    for (int k = 1; k < partitions; ++k) pool.emplace_back(worker, k);
    worker(0);
  }

  report.steps_completed = completed;
  for (const auto& t : worker_times) {
    report.times.create_rhs = std::max(report.times.create_rhs, t.create_rhs);
    report.times.dss = std::max(report.times.dss, t.dss);
    report.times.filter = std::max(report.times.filter, t.filter);
    report.times.total = std::max(report.times.total, t.total);
  }
  report.times.update = std::max(0.0, report.times.total - report.times.create_rhs -
                                          report.times.dss - report.times.filter);
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const DivergedStateError& e) {
      report.diverged = true;
      report.failure = e.what();
    }
  }
  report.final_state = std::move(shared);
  return report;
}

double scaling_efficiency(double base_time, int base_workers, double time, int workers) {
  if (!(time > 0.0) || workers < 1) return 0.0;
  return base_time * base_workers / (time * workers);
}

std::vector<ScalingRow> scale_experiment(const Simulation& sim, const std::vector<int>& workers) {
  std::vector<ScalingRow> rows;
  for (int t : workers) {
    const auto r = run(sim, t);
    if (r.diverged) throw DivergedStateError("scaling run diverged: " + r.failure, -1);
    ScalingRow row;
    row.workers = t;
    row.times = r.times;
    row.oversubscribed = r.oversubscribed;
    rows.push_back(row);
  }
  if (rows.empty()) return rows;
  const auto& b = rows.front();
  for (auto& row : rows) {
    row.efficiency = scaling_efficiency(b.times.total, b.workers, row.times.total, row.workers);
    row.efficiency_create_rhs =
        scaling_efficiency(b.times.create_rhs, b.workers, row.times.create_rhs, row.workers);
    row.efficiency_dss = scaling_efficiency(b.times.dss, b.workers, row.times.dss, row.workers);
    row.efficiency_filter =
        scaling_efficiency(b.times.filter, b.workers, row.times.filter, row.workers);
  }
  return rows;
}

std::string format_diagnostics_csv(const std::vector<Diagnostics>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "step,time,mass,theta_min,theta_max,max_speed,centroid_z\n";
  for (const auto& d : history)
    os << d.step << ',' << d.time << ',' << d.mass << ',' << d.theta_min << ',' << d.theta_max
       << ',' << d.max_speed << ',' << d.centroid_z << '\n';
  return os.str();
}

std::string format_scaling_csv(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os << "workers,total_s,create_rhs_s,dss_s,filter_s,update_s,efficiency,eff_create_rhs,eff_dss,"
        "eff_filter,oversubscribed\n";
  for (const auto& r : rows)
    os << r.workers << ',' << r.times.total << ',' << r.times.create_rhs << ',' << r.times.dss << ','
       << r.times.filter << ',' << r.times.update << ',' << r.efficiency << ','
       << r.efficiency_create_rhs << ',' << r.efficiency_dss << ',' << r.efficiency_filter << ','
       << (r.oversubscribed ? 1 : 0) << '\n';
  return os.str();
}

std::string format_theta_csv(const Simulation& sim, const StateCG& state) {
  std::ostringstream os;
  os.precision(10);
  os << "x,y,z,theta_prime\n";
  for (std::size_t g = 0; g < state.nodes; ++g) {
    const auto& x = sim.node_positions()[g];
    os << x.x << ',' << x.y << ',' << x.z << ','
       << state.at(g, kTheta) / state.at(g, kRho) - sim.background_theta()[g] << '\n';
  }
  return os.str();
}

}  // namespace sem
