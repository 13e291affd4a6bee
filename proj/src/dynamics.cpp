#include "sem/dynamics.hpp"

#include <atomic>
#include <barrier>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

namespace sem {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Background (rho_bar, 0, 0, 0, Theta_bar) at element node.
void background_values(const Model& m, std::size_t e, std::size_t n, double out[5]) {
  const auto& bg = *m.background;
  const std::size_t bi = bg.index(e, n, *m.numbering);
  out[kRho] = bg.rho[bi];
  out[kRhoU] = out[kRhoV] = out[kRhoW] = 0.0;
  out[kTheta] = bg.theta[bi];
}

/// In-place F (x) F (x) F on each of the 5 variables of a [v * N + n] block.
void filter_element(const DenseMatrix& f, std::span<double> q, std::vector<double>& a,
                    std::vector<double>& b) {
  const std::size_t nn = a.size();
  for (std::size_t v = 0; v < kNumVars; ++v) {
    std::span<double> block(q.data() + v * nn, nn);
    apply_along_axis<double>(f, block, a, 0);
    apply_along_axis<double>(f, a, b, 1);
    apply_along_axis<double>(f, b, block, 2);
  }
}

}  // namespace

void GasConstants::validate() const {
  if (!(r > 0.0) || !(cv > 0.0) || !(cp > cv) || !(p0 > 0.0) || !(g >= 0.0))
    throw InvalidArgument("gas constants: need R, cv, p0 > 0, cp > cv, g >= 0");
  if (std::abs(cp - cv - r) > 1e-9 * cp)
    throw InvalidArgument("gas constants: cp must equal cv + R");
}

double pressure(double rho, double theta, const GasConstants& gas) {
  if (!(rho > 0.0) || !(theta > 0.0))
    throw DivergedStateError("pressure: non-positive density or potential temperature", -1);
  return pressure_unchecked(theta, gas);
}

double sound_speed(double rho, double theta, const GasConstants& gas) {
  return std::sqrt(gas.gamma() * pressure(rho, theta, gas) / rho);
}

FluxTensor flux(std::span<const double, 5> q, double p_background, const GasConstants& gas) {
  const double pp = pressure(q[kRho], q[kTheta], gas) - p_background;
  FluxTensor t;
  for (int c = 0; c < 3; ++c) {
    const double uc = q[kRhoU + c] / q[kRho];
    t.f[0][c] = q[kRhoU + c];
    for (int i = 0; i < 3; ++i) t.f[1 + i][c] = q[kRhoU + i] * uc + (i == c ? pp : 0.0);
    t.f[4][c] = q[kTheta] * uc;
  }
  return t;
}

std::vector<double> local_derivative(std::span<const double> values, const MetricTerms& metrics,
                                     std::size_t e, const ReferenceElement& ref, int c) {
  const std::size_t nn = ref.nodes_per_element();
  if (values.size() != nn) throw InvalidArgument("local_derivative: expected (p+1)^3 values");
  std::vector<double> out(nn, 0.0);
  std::vector<double> tmp(nn);
  for (int d = 0; d < 3; ++d) {
    apply_along_axis<double>(ref.diff(), values, tmp, d);
    for (std::size_t n = 0; n < nn; ++n) out[n] += metrics.dxi(e, d, c, n) * tmp[n];
  }
  return out;
}

StateCG create_rhs(const StateCG& state, const Model& m) {
  const std::size_t nn = m.ref->nodes_per_element();
  const std::size_t ne = m.mesh->element_count();
  StateDG contrib(ne, nn);
  RhsWorkspace<double> ws(nn);
  std::vector<double> q(kNumVars * nn);
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n) q[v * nn + n] = state.at(m.numbering->id(e, n), v);
    element_rhs<double>(m, e, q, contrib.element(e), ws);
  }
  return dss(contrib, *m.numbering);
}

StateCG create_rhs(const StateDG& state, const Model& m) {
  const std::size_t nn = m.ref->nodes_per_element();
  const std::size_t ne = m.mesh->element_count();
  StateDG contrib(ne, nn);
  RhsWorkspace<double> ws(nn);
  for (std::size_t e = 0; e < ne; ++e) element_rhs<double>(m, e, state.element(e), contrib.element(e), ws);
  return dss(contrib, *m.numbering);
}

StateCG create_rhs_jvp(const StateCG& state, const StateCG& direction, const Model& m) {
  const std::size_t nn = m.ref->nodes_per_element();
  const std::size_t ne = m.mesh->element_count();
  StateDG contrib(ne, nn);
  RhsWorkspace<Dual> ws(nn);
  std::vector<Dual> q(kNumVars * nn);
  std::vector<Dual> out(kNumVars * nn);
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n) {
        const auto g = m.numbering->id(e, n);
        q[v * nn + n] = Dual(state.at(g, v), direction.at(g, v));
      }
    element_rhs<Dual>(m, e, q, out, ws);
    auto dst = contrib.element(e);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = out[k].d;
  }
  return dss(contrib, *m.numbering);
}

ElementSchedule color_elements(const CgNumbering& numbering, std::size_t element_count) {
  const std::size_t nn = numbering.nodes_per_element;
  std::vector<int> color(element_count, -1);
  std::vector<int> mark;
  ElementSchedule s;
  for (std::size_t e = 0; e < element_count; ++e) {
    std::vector<bool> used;
    for (std::size_t n = 0; n < nn; ++n) {
      const auto g = numbering.id(e, n);
      for (std::size_t r = numbering.incidence_offsets[g]; r < numbering.incidence_offsets[g + 1]; ++r) {
        const int c = color[numbering.incidence_element[r]];
        if (c < 0) continue;
        if (used.size() <= static_cast<std::size_t>(c)) used.resize(c + 1, false);
        used[c] = true;
      }
    }
    int c = 0;
    while (static_cast<std::size_t>(c) < used.size() && used[c]) ++c;
    color[e] = c;
    if (s.batches.size() <= static_cast<std::size_t>(c)) s.batches.resize(c + 1);
    s.batches[c].push_back(e);
  }
  return s;
}

StateCG create_rhs_scheduled(const StateCG& state, const Model& m, const ElementSchedule& schedule,
                             int threads) {
  if (threads < 1) throw InvalidArgument("create_rhs_scheduled: need at least one thread");
  const std::size_t nn = m.ref->nodes_per_element();
  const auto& num = *m.numbering;
  StateCG acc(num.unique_count);
  std::barrier sync(threads);
  std::atomic<bool> failed{false};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto worker = [&](int t) {
    RhsWorkspace<double> ws(nn);
    std::vector<double> q(kNumVars * nn);
    std::vector<double> out(kNumVars * nn);
    for (const auto& batch : schedule.batches) {
      // A failed worker keeps arriving so the others are not stranded.
      try {
        for (std::size_t k = t; k < batch.size() && !failed.load(); k += threads) {
          const std::size_t e = batch[k];
          for (std::size_t v = 0; v < kNumVars; ++v)
            for (std::size_t n = 0; n < nn; ++n) q[v * nn + n] = state.at(num.id(e, n), v);
          element_rhs<double>(m, e, q, out, ws);
          for (std::size_t v = 0; v < kNumVars; ++v)
            for (std::size_t n = 0; n < nn; ++n) acc.at(num.id(e, n), v) += out[v * nn + n];
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failed.exchange(true)) failure = std::current_exception();
      }
      sync.arrive_and_wait();
    }
  };
  std::vector<std::jthread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  pool.clear();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t g = 0; g < num.unique_count; ++g)
    for (std::size_t v = 0; v < kNumVars; ++v) acc.at(g, v) /= num.mass[g];
  return acc;
}

StateCG apply_filter(const StateCG& state, const Model& m) {
  if (m.ref->filter_params().strength == 0.0) return state;
  const std::size_t nn = m.ref->nodes_per_element();
  const std::size_t ne = m.mesh->element_count();
  const auto& num = *m.numbering;
  const auto w3 = m.ref->weights_3d();
  StateDG contrib(ne, nn);
  std::vector<double> a(nn);
  std::vector<double> b(nn);
  double bgv[5];
  for (std::size_t e = 0; e < ne; ++e) {
    auto q = contrib.element(e);
    for (std::size_t n = 0; n < nn; ++n) {
      background_values(m, e, n, bgv);
      for (std::size_t v = 0; v < kNumVars; ++v) q[v * nn + n] = state.at(num.id(e, n), v) - bgv[v];
    }
    filter_element(m.ref->filter(), q, a, b);
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n) q[v * nn + n] *= m.metrics->jac(e, n) * w3[n];
  }
  StateCG out = dss(contrib, num);
  for (std::size_t g = 0; g < num.unique_count; ++g) {
    background_values(m, num.incidence_element[num.incidence_offsets[g]],
                      num.incidence_local[num.incidence_offsets[g]], bgv);
    for (std::size_t v = 0; v < kNumVars; ++v) out.at(g, v) += bgv[v];
  }
  return out;
}

void project_wall_momentum(std::span<double> node_values, std::uint8_t walls) {
  if (walls & (kWallXMin | kWallXMax)) node_values[kRhoU] = 0.0;
  if (walls & (kWallYMin | kWallYMax)) node_values[kRhoV] = 0.0;
  if (walls & (kWallZMin | kWallZMax)) node_values[kRhoW] = 0.0;
}

void apply_boundary(StateCG& state, const CgNumbering& numbering) {
  for (std::size_t g = 0; g < numbering.unique_count; ++g)
    if (numbering.walls[g])
      project_wall_momentum({state.values.data() + g * kNumVars, kNumVars}, numbering.walls[g]);
}

LocalOperator::LocalOperator(const Model& m, const LocalDomain& domain, StorageScheme scheme,
                             HaloExchanger* exchanger)
    : m_(m),
      domain_(domain),
      scheme_(scheme),
      exchanger_(exchanger),
      ws_(domain.nodes_per_element()),
      q_(kNumVars * domain.nodes_per_element()),
      contributions_(kNumVars * domain.nodes_per_element() * domain.element_count()),
      assembled_(kNumVars * domain.node_count()),
      background_node_(kNumVars * domain.node_count()) {
  const std::size_t nn = domain.nodes_per_element();
  double bgv[5];
  for (std::size_t le = 0; le < domain.element_count(); ++le)
    for (std::size_t n = 0; n < nn; ++n) {
      background_values(m, domain.first_element() + le, n, bgv);
      const auto ln = domain.local_id(le, n);
      for (std::size_t v = 0; v < kNumVars; ++v) background_node_[ln * kNumVars + v] = bgv[v];
    }
}

std::size_t LocalOperator::state_size() const noexcept {
  return scheme_ == StorageScheme::DG
             ? kNumVars * domain_.nodes_per_element() * domain_.element_count()
             : kNumVars * domain_.node_count();
}

void LocalOperator::scatter_local(std::span<const double> cg, std::span<double> u) const {
  const std::size_t nn = domain_.nodes_per_element();
  for (std::size_t le = 0; le < domain_.element_count(); ++le)
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n)
        u[(le * kNumVars + v) * nn + n] = cg[domain_.local_id(le, n) * kNumVars + v];
}

void LocalOperator::load(const StateCG& global, std::span<double> u) const {
  const auto ids = domain_.global_ids();
  if (scheme_ == StorageScheme::DG) {
    std::vector<double> cg(kNumVars * ids.size());
    for (std::size_t ln = 0; ln < ids.size(); ++ln)
      for (std::size_t v = 0; v < kNumVars; ++v) cg[ln * kNumVars + v] = global.at(ids[ln], v);
    scatter_local(cg, u);
    return;
  }
  for (std::size_t ln = 0; ln < ids.size(); ++ln)
    for (std::size_t v = 0; v < kNumVars; ++v) u[ln * kNumVars + v] = global.at(ids[ln], v);
}

void LocalOperator::store(std::span<const double> u, StateCG& global) const {
  const auto ids = domain_.global_ids();
  const std::size_t nn = domain_.nodes_per_element();
  if (scheme_ == StorageScheme::DG) {
    for (std::size_t le = 0; le < domain_.element_count(); ++le)
      for (std::size_t n = 0; n < nn; ++n) {
        const auto ln = domain_.local_id(le, n);
        if (!domain_.owns(ln)) continue;
        for (std::size_t v = 0; v < kNumVars; ++v)
          global.at(ids[ln], v) = u[(le * kNumVars + v) * nn + n];
      }
    return;
  }
  for (std::size_t ln = 0; ln < ids.size(); ++ln)
    if (domain_.owns(ln))
      for (std::size_t v = 0; v < kNumVars; ++v) global.at(ids[ln], v) = u[ln * kNumVars + v];
}

void LocalOperator::element_values(std::span<const double> u, std::size_t le,
                                   std::span<double> q) const {
  const std::size_t nn = domain_.nodes_per_element();
  if (scheme_ == StorageScheme::DG) {
    std::copy_n(u.begin() + le * kNumVars * nn, kNumVars * nn, q.begin());
    return;
  }
  for (std::size_t v = 0; v < kNumVars; ++v)
    for (std::size_t n = 0; n < nn; ++n) q[v * nn + n] = u[domain_.local_id(le, n) * kNumVars + v];
}

void LocalOperator::rhs(std::span<const double> u, std::span<double> f) {
  const std::size_t nn = domain_.nodes_per_element();
  auto t0 = Clock::now();
  for (std::size_t le = 0; le < domain_.element_count(); ++le) {
    element_values(u, le, q_);
    element_rhs<double>(m_, domain_.first_element() + le, q_,
                        std::span<double>(contributions_).subspan(le * kNumVars * nn, kNumVars * nn),
                        ws_);
  }
  kernel_seconds += seconds_since(t0);
  t0 = Clock::now();
  if (scheme_ == StorageScheme::DG) {
    domain_.assemble(contributions_, kNumVars, exchanger_, assembled_, true);
    scatter_local(assembled_, f);
  } else {
    domain_.assemble(contributions_, kNumVars, exchanger_, f, true);
  }
  dss_seconds += seconds_since(t0);
}

void LocalOperator::filter(std::span<double> u) {
  if (m_.ref->filter_params().strength == 0.0) return;
  const auto t0 = Clock::now();
  const std::size_t nn = domain_.nodes_per_element();
  const auto w3 = m_.ref->weights_3d();
  std::vector<double> a(nn);
  std::vector<double> b(nn);
  for (std::size_t le = 0; le < domain_.element_count(); ++le) {
    std::span<double> q(contributions_.data() + le * kNumVars * nn, kNumVars * nn);
    element_values(u, le, q);
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n)
        q[v * nn + n] -= background_node_[domain_.local_id(le, n) * kNumVars + v];
    filter_element(m_.ref->filter(), q, a, b);
    const std::size_t e = domain_.first_element() + le;
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n) q[v * nn + n] *= m_.metrics->jac(e, n) * w3[n];
  }
  domain_.assemble(contributions_, kNumVars, exchanger_, assembled_, true);
  for (std::size_t k = 0; k < assembled_.size(); ++k) assembled_[k] += background_node_[k];
  if (scheme_ == StorageScheme::DG)
    scatter_local(assembled_, u);
  else
    std::copy(assembled_.begin(), assembled_.end(), u.begin());
  filter_seconds += seconds_since(t0);
}

void LocalOperator::apply_boundary(std::span<double> u) const {
  const auto walls = domain_.walls();
  if (scheme_ == StorageScheme::DG) {
    const std::size_t nn = domain_.nodes_per_element();
    for (std::size_t le = 0; le < domain_.element_count(); ++le)
      for (std::size_t n = 0; n < nn; ++n) {
        const auto w = walls[domain_.local_id(le, n)];
        if (!w) continue;
        const std::size_t base = le * kNumVars * nn + n;
        if (w & (kWallXMin | kWallXMax)) u[base + kRhoU * nn] = 0.0;
        if (w & (kWallYMin | kWallYMax)) u[base + kRhoV * nn] = 0.0;
        if (w & (kWallZMin | kWallZMax)) u[base + kRhoW * nn] = 0.0;
      }
    return;
  }
  for (std::size_t ln = 0; ln < domain_.node_count(); ++ln)
    if (walls[ln]) project_wall_momentum(u.subspan(ln * kNumVars, kNumVars), walls[ln]);
}

}  // namespace sem
