#include "sem/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sem/error.hpp"
#include "sem/reference_element.hpp"

namespace sem::perf {

void MachineModel::validate() const {
  if (!(bandwidth > 0.0) || !(peak_flops > 0.0) || !(cache_line > 0.0) || !(l2_bytes > 0.0) ||
      !(word_bytes > 0.0))
    throw InvalidArgument("machine model: all parameters must be positive");
}

KernelCost& KernelCost::operator+=(const KernelCost& o) {
  flops += o.flops;
  read += o.read;
  write += o.write;
  gather_read += o.gather_read;
  gather_read_lines += o.gather_read_lines;
  return *this;
}

KernelCost KernelCost::scaled(double s) const {
  return {flops * s, read * s, write * s, gather_read * s, gather_read_lines * s};
}

KernelCost operator+(KernelCost a, const KernelCost& b) { return a += b; }

KernelCost CostLedger::total() const {
  KernelCost t;
  for (const auto& k : kernels) t += k;
  return t;
}

double SimConfig::nodes_per_element() const {
  const double n1 = order + 1.0;
  return n1 * n1 * n1;
}

double SimConfig::unique_nodes() const {
  return (order * nx + 1.0) * (order * ny + 1.0) * (order * nz + 1.0);
}

void SimConfig::validate() const {
  if (order < 1) throw InvalidArgument("perf config: order must be >= 1");
  if (!(nx > 0.0) || !(ny > 0.0) || !(nz > 0.0)) throw InvalidArgument("perf config: element counts must be positive");
  if (!(machines > 0.0) || steps < 0.0 || stages < 1)
    throw InvalidArgument("perf config: machines > 0, steps >= 0, stages >= 1 required");
  if (variables < 1 || reference_fields < 0 || metric_fields < 0 || update_arrays < 1.0)
    throw InvalidArgument("perf config: invalid field counts");
}

double contraction_flops(int order) {
  const double p1 = order + 1.0;
  return 2.0 * p1 * p1 * p1 * p1;
}

double line_rounded_bytes(double run_bytes, double count, const MachineModel& machine) {
  return count * std::ceil(run_bytes / machine.cache_line) * machine.cache_line;
}

CostLedger count_costs(const SimConfig& c, const MachineModel& machine) {
  c.validate();
  machine.validate();
  const double p1 = c.order + 1.0;
  const double e = c.elements();
  const double d = c.element_nodes();
  const double g = c.unique_nodes();
  const double w = machine.word_bytes;
  const double v = c.variables;
  const bool dg = c.scheme == StorageScheme::DG;
  const double x = dg ? d : g;

  // CG record of f fields per node read element by element: rows of p+1
  // consecutive nodes, (p+1)^2 rows per element.
  auto gather = [&](KernelCost& k, double f) {
    const double plain = g * f * w;
    k.read += plain;
    k.gather_read += plain;
    k.gather_read_lines += line_rounded_bytes(p1 * f * w, e * p1 * p1, machine);
  };

  CostLedger stage;
  auto& rhs = stage[Kernel::CreateRhs];
  // 5 variables x 3 flux directions x 3 reference axes.
  rhs.flops = 45.0 * contraction_flops(c.order) * e + d * (90.0 + 30.0 + c.pow_flops);
  if (dg)
    rhs.read += v * d * w;
  else
    gather(rhs, v);
  if (c.scheme == StorageScheme::CG)
    gather(rhs, c.reference_fields);
  else
    rhs.read += c.reference_fields * d * w;
  if (c.recompute_metrics) {
    rhs.flops += d * (54.0 * p1 + 32.0);
    rhs.read += 3.0 * g * w;
  } else {
    rhs.read += c.metric_fields * d * w;
  }
  if (dg) {
    rhs.write += v * d * w;
  } else {
    gather(rhs, v);  // read half of the accumulate into CG storage
    rhs.write += v * g * w;
  }

  auto& dss = stage[Kernel::Dss];
  dss.flops = dg ? 2.0 * v * d : v * d;
  dss.read = (v + 1.0) * x * w;
  dss.write = v * x * w;

  auto& upd = stage[Kernel::Update];
  upd.flops = (2.0 * c.update_arrays - 1.0) * v * x;
  upd.read = c.update_arrays * v * x * w;
  upd.write = v * x * w;

  KernelCost filt;
  filt.flops = v * d * (6.0 * p1 + 2.0) + 2.0 * v * x;
  if (dg) {
    filt.read = 2.0 * (v + 1.0) * d * w;
    filt.write = 2.0 * v * d * w;
  } else {
    gather(filt, v);
    filt.read += d * w;
    gather(filt, v);
    filt.read += (v + 1.0) * g * w;
    filt.write = 2.0 * v * g * w;
  }

  CostLedger out;
  const double per_stage = c.stages * c.steps / c.machines;
  for (std::size_t k = 0; k < kKernelCount; ++k) out.kernels[k] = stage.kernels[k].scaled(per_stage);
  out[Kernel::Filter] = filt.scaled(c.steps / c.machines);
  return out;
}

double working_set_bytes(const SimConfig& c, const MachineModel& machine) {
  const bool dg = c.scheme == StorageScheme::DG;
  const double x = dg ? c.element_nodes() : c.unique_nodes();
  const double ref = c.scheme == StorageScheme::CG ? c.unique_nodes() : c.element_nodes();
  return (2.0 * c.variables * x + c.metric_fields * c.element_nodes() + c.reference_fields * ref) *
         machine.word_bytes / c.machines;
}

CostLedger random_access_penalty(const CostLedger& ledger, const SimConfig& config,
                                 const MachineModel& machine) {
  if (working_set_bytes(config, machine) <= machine.l2_bytes) return ledger;
  CostLedger out = ledger;
  for (auto& k : out.kernels) {
    k.read += std::max(0.0, k.gather_read_lines - k.gather_read);
    k.gather_read = k.gather_read_lines;
  }
  return out;
}

CostLedger apply_calibration(const CostLedger& ledger, const Calibration& cal) {
  CostLedger out = ledger;
  for (std::size_t k = 0; k < kKernelCount; ++k) {
    out.kernels[k].flops *= cal.flops[k];
    out.kernels[k].read *= cal.read[k];
    out.kernels[k].write *= cal.write[k];
    out.kernels[k].gather_read *= cal.read[k];
    out.kernels[k].gather_read_lines *= cal.read[k];
  }
  return out;
}

CostLedger evaluate(const SimConfig& config, const MachineModel& machine) {
  CostLedger l = count_costs(config, machine);
  if (config.random_access_penalty) l = random_access_penalty(l, config, machine);
  return apply_calibration(l, config.calibration);
}

double roofline_time(const KernelCost& cost, const MachineModel& machine) {
  return std::max(cost.flops / machine.peak_flops, cost.bytes() / machine.bandwidth);
}

double percent_peak(const KernelCost& cost, double seconds, const MachineModel& machine) {
  if (!(seconds > 0.0)) throw InvalidArgument("percent_peak: time must be positive");
  return 100.0 * cost.flops / seconds / machine.peak_flops;
}

double percent_max(double attained_flops, double intensity, const MachineModel& machine) {
  if (!(intensity > 0.0)) throw InvalidArgument("percent_max: intensity must be positive");
  return 100.0 * attained_flops / std::min(machine.peak_flops, intensity * machine.bandwidth);
}

Calibration fit_calibration(const SimConfig& config, const MachineModel& machine,
                            const KernelCost& target, std::optional<double> create_rhs_flops) {
  SimConfig raw = config;
  raw.calibration = {};
  const CostLedger l = evaluate(raw, machine);
  const KernelCost t = l.total();
  Calibration cal;
  if (create_rhs_flops) {
    const double rhs = l[Kernel::CreateRhs].flops;
    const double rest = t.flops - rhs;
    cal.flops.fill((target.flops - *create_rhs_flops) / rest);
    cal.flops[static_cast<std::size_t>(Kernel::CreateRhs)] = *create_rhs_flops / rhs;
  } else {
    cal.flops.fill(target.flops / t.flops);
  }
  cal.read.fill(target.read / t.read);
  cal.write.fill(target.write / t.write);
  return cal;
}

TableRow derive_row(const std::string& name, const KernelCost& total, const MachineModel& machine) {
  TableRow r;
  r.name = name;
  r.gflops = total.flops / 1e9;
  r.read_gb = total.read / 1e9;
  r.write_gb = total.write / 1e9;
  r.intensity = total.intensity();
  r.runtime = roofline_time(total, machine);
  r.percent_peak = percent_peak(total, r.runtime, machine);
  return r;
}

std::vector<TableRow> published_inputs(int table) {
  switch (table) {
    case 1:
      return {{"CG", 3007.00, 2129.42, 661.83}, {"CG/DG", 3007.00, 2537.28, 688.34},
              {"DG", 4023.19, 3489.66, 1168.69}};
    case 2:
      return {{"CG", 3007.00, 3483.05, 853.44}, {"CG/DG", 3007.00, 3138.46, 879.95},
              {"DG", 4023.19, 3682.77, 1360.30}};
    case 3:
      return {{"CG", 61.96, 58.55, 22.48}, {"CG/DG", 61.96, 62.18, 22.48},
              {"DG", 83.00, 94.22, 36.69}};
    default:
      throw InvalidArgument("published_inputs: table must be 1, 2 or 3");
  }
}

std::vector<TableRow> reproduce_table(int table, const MachineModel& machine) {
  std::vector<TableRow> rows;
  for (const auto& in : published_inputs(table)) {
    KernelCost c;
    c.flops = in.gflops * 1e9;
    c.read = in.read_gb * 1e9;
    c.write = in.write_gb * 1e9;
    rows.push_back(derive_row(in.name, c, machine));
  }
  return rows;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string emit_table(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  const int label = 38;
  const int col = 12;
  auto pad = [](std::string s, int width, bool left) {
    if (static_cast<int>(s.size()) >= width) return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
  };
  os << pad("", label, true);
  for (const auto& r : rows) os << pad(r.name, col, false);
  os << "\n";
  if (rows.empty()) return os.str();
  auto line = [&](const std::string& name, auto get) {
    os << pad(name, label, true);
    for (const auto& r : rows) os << pad(fixed2(get(r)), col, false);
    os << "\n";
  };
  line("GFlops per node", [](const TableRow& r) { return r.gflops; });
  line("read traffic in GB", [](const TableRow& r) { return r.read_gb; });
  line("write traffic in GB", [](const TableRow& r) { return r.write_gb; });
  line("arithmetic intensity in Flops/Bytes", [](const TableRow& r) { return r.intensity; });
  line("optimal runtime in seconds", [](const TableRow& r) { return r.runtime; });
  line("% of theoretical peak of processor", [](const TableRow& r) { return r.percent_peak; });
  return os.str();
}

std::string emit_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "scheme,gflops,read_gb,write_gb,intensity,runtime_s,percent_peak\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(),
                  r.gflops, r.read_gb, r.write_gb, r.intensity, r.runtime, r.percent_peak);
    os << buf;
  }
  return os.str();
}

std::vector<TableRow> parse_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::vector<TableRow> rows;
  if (!std::getline(is, line)) return rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw InvalidArgument("parse_csv: expected 7 columns");
    rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                    std::stod(f[5]), std::stod(f[6])});
  }
  return rows;
}

SimConfig preset_config(Preset preset, StorageScheme scheme) {
  SimConfig c;
  c.order = 3;
  c.scheme = scheme;
  if (preset == Preset::Bubble) {
    // 1000 m box at 1.30 m horizontal and 0.89 m vertical spacing, 768 machines, 690 steps.
    c.nx = c.ny = 256;
    c.nz = 375;
    c.machines = 768;
    c.steps = 690;
    c.random_access_penalty = true;
  } else {
    // 4.4e7 points with 31 points per column, 972 machines, 947 steps; L2-resident.
    c.nz = 10;
    const double horizontal_points = std::sqrt(4.4e7 / (3.0 * c.nz + 1.0));
    c.nx = c.ny = (horizontal_points - 1.0) / 3.0;
    c.machines = 972;
    c.steps = 947;
    c.random_access_penalty = false;
  }
  return c;
}

Calibration bubble_calibration(const MachineModel& machine) {
  SimConfig c = preset_config(Preset::Bubble, StorageScheme::Hybrid);
  KernelCost target;
  target.flops = 3007.00e9;
  target.read = 3138.46e9;
  target.write = 879.95e9;
  return fit_calibration(c, machine, target, 2503.4e9);
}

double effective_resolution(double length, double elements, int order) {
  return length / (order * elements);
}

std::vector<SweepPoint> order_sweep(const SimConfig& base, int p_min, int p_max,
                                    const MachineModel& machine) {
  if (p_min < 1 || p_max > 10 || p_min > p_max)
    throw InvalidArgument("order_sweep: p range must lie within [1, 10]");
  auto gap = [](int p) {
    const auto rule = lobatto_points(p);
    return p * (rule.points[1] - rule.points[0]);
  };
  const double base_gap = gap(base.order);
  std::vector<SweepPoint> out;
  for (int p = p_min; p <= p_max; ++p) {
    SimConfig c = base;
    c.order = p;
    c.nx = base.nx * base.order / p;
    c.ny = base.ny * base.order / p;
    c.nz = base.nz * base.order / p;
    c.steps = 1;
    const double tps = roofline_time(evaluate(c, machine).total(), machine);
    SweepPoint s;
    s.order = p;
    s.nx = c.nx;
    s.ny = c.ny;
    s.nz = c.nz;
    s.steps = base.steps * base_gap / gap(p);
    s.time_per_step = tps;
    s.time_to_solution = tps * s.steps;
    out.push_back(s);
  }
  return out;
}

}  // namespace sem::perf
