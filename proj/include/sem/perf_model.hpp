#pragma once

// Analytical flop/byte ledger for the CG, CG/DG hybrid and DG storage
// schemes, the random-access cache-line penalty, roofline timing, and the
// polynomial-order sweep.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sem/storage.hpp"

namespace sem::perf {

struct MachineModel {
  double bandwidth = 28.5e9;       // bytes/s
  double peak_flops = 204.8e9;     // flop/s
  double cache_line = 128.0;       // bytes
  double l2_bytes = 32.0 * 1024 * 1024;
  double word_bytes = 8.0;

  void validate() const;
  /// Arithmetic intensity where the roofline turns compute-bound.
  double ridge_point() const { return peak_flops / bandwidth; }
};

struct KernelCost {
  double flops = 0.0;
  double read = 0.0;   // bytes
  double write = 0.0;  // bytes
  // Element-context reads of CG-stored fields: bytes as counted and bytes
  // with every partial cache-line access rounded up to a full line.
  double gather_read = 0.0;
  double gather_read_lines = 0.0;

  double bytes() const { return read + write; }
  double intensity() const { return bytes() > 0.0 ? flops / bytes() : 0.0; }

  KernelCost& operator+=(const KernelCost& o);
  KernelCost scaled(double s) const;
};

KernelCost operator+(KernelCost a, const KernelCost& b);

enum class Kernel { CreateRhs = 0, Dss = 1, Update = 2, Filter = 3 };
inline constexpr std::size_t kKernelCount = 4;
inline constexpr std::array<const char*, kKernelCount> kKernelNames = {"create_rhs", "dss", "update",
                                                                      "filter"};

struct CostLedger {
  std::array<KernelCost, kKernelCount> kernels;

  KernelCost& operator[](Kernel k) { return kernels[static_cast<std::size_t>(k)]; }
  const KernelCost& operator[](Kernel k) const { return kernels[static_cast<std::size_t>(k)]; }
  KernelCost total() const;
};

/// Per-kernel multipliers on the raw counts (all 1 by default).
struct Calibration {
  std::array<double, kKernelCount> flops{1.0, 1.0, 1.0, 1.0};
  std::array<double, kKernelCount> read{1.0, 1.0, 1.0, 1.0};
  std::array<double, kKernelCount> write{1.0, 1.0, 1.0, 1.0};
};

struct SimConfig {
  int order = 3;
  double nx = 1;  // element counts may be fractional when a preset is sized from point counts
  double ny = 1;
  double nz = 1;
  double machines = 1;  // the ledger reports per-machine totals
  double steps = 1;
  int stages = 5;
  double update_arrays = 3.2;  // average state/rhs arrays combined per stage update
  StorageScheme scheme = StorageScheme::CG;
  int variables = 5;
  int reference_fields = 3;
  int metric_fields = 10;       // 9 inverse-metric entries + J, always element-stored
  double pow_flops = 10.0;      // flops charged for one pow() in the equation of state
  bool random_access_penalty = false;
  bool recompute_metrics = false;  // trade metric reads for per-stage recomputation
  Calibration calibration;

  double elements() const { return nx * ny * nz; }
  double nodes_per_element() const;
  double element_nodes() const { return elements() * nodes_per_element(); }
  double unique_nodes() const;
  void validate() const;
};

/// Multiply-add flops of one derivative of one field along one reference axis
/// over one element.
double contraction_flops(int order);

/// Bytes moved when `count` runs of `run_bytes` each are read at unknown alignment
/// and every touched line is charged in full.
double line_rounded_bytes(double run_bytes, double count, const MachineModel& machine);

/// Raw ledger summed over the simulation, divided by machine count. No
/// penalty, no calibration.
CostLedger count_costs(const SimConfig& config, const MachineModel& machine = {});

/// Per-step state + metric bytes per machine compared against L2.
double working_set_bytes(const SimConfig& config, const MachineModel& machine = {});

/// Replaces CG gather reads with their line-rounded size when the working set exceeds L2.
CostLedger random_access_penalty(const CostLedger& ledger, const SimConfig& config,
                                 const MachineModel& machine);

CostLedger apply_calibration(const CostLedger& ledger, const Calibration& calibration);

/// count_costs, then the penalty if enabled, then calibration.
CostLedger evaluate(const SimConfig& config, const MachineModel& machine = {});

double roofline_time(const KernelCost& cost, const MachineModel& machine);
double percent_peak(const KernelCost& cost, double seconds, const MachineModel& machine);
double percent_max(double attained_flops, double intensity, const MachineModel& machine);

/// Multipliers that make `config` reproduce `target` totals exactly, with the
/// create_rhs flop share pinned to `create_rhs_flops` when given.
Calibration fit_calibration(const SimConfig& config, const MachineModel& machine,
                            const KernelCost& target, std::optional<double> create_rhs_flops = {});

struct TableRow {
  std::string name;
  double gflops = 0.0;
  double read_gb = 0.0;
  double write_gb = 0.0;
  double intensity = 0.0;
  double runtime = 0.0;
  double percent_peak = 0.0;
};

/// Derived columns from a total cost (flops, bytes).
TableRow derive_row(const std::string& name, const KernelCost& total, const MachineModel& machine);

/// Published flop/traffic inputs for the three storage schemes (GF, GB per machine).
std::vector<TableRow> published_inputs(int table);

/// Derived columns recomputed from published_inputs(table).
std::vector<TableRow> reproduce_table(int table, const MachineModel& machine = {});

std::string emit_table(const std::vector<TableRow>& rows);
std::string emit_csv(const std::vector<TableRow>& rows);
std::vector<TableRow> parse_csv(const std::string& csv);

enum class Preset { Bubble, Baroclinic };

/// Preset geometry and step counts; `scheme` and penalty set per table.
SimConfig preset_config(Preset preset, StorageScheme scheme);

/// Bubble preset calibrated against the hybrid column of the penalized table.
Calibration bubble_calibration(const MachineModel& machine = {});

struct SweepPoint {
  int order = 0;
  double nx = 0.0;
  double ny = 0.0;
  double nz = 0.0;
  double steps = 0.0;
  double time_per_step = 0.0;
  double time_to_solution = 0.0;
};

/// Holds points per direction and Courant number fixed while varying p.
std::vector<SweepPoint> order_sweep(const SimConfig& base, int p_min, int p_max,
                                    const MachineModel& machine = {});

/// (domain length) / (points per direction - 1) for a length and element count.
double effective_resolution(double length, double elements, int order);

}  // namespace sem::perf
