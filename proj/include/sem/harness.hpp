#pragma once

// Rising thermal bubble driver: initialization, the partitioned time loop
// (one worker thread per partition), diagnostics and the scaling experiment.

#include <string>
#include <vector>

#include "sem/dynamics.hpp"
#include "sem/time_integration.hpp"

namespace sem {

struct BubbleConfig {
  double lx = 1000.0;
  double ly = 1000.0;
  double lz = 1000.0;
  double theta0 = 300.0;    // K
  double theta_c = 0.5;     // K
  double radius = 250.0;    // m
  Vec3 center{500.0, 500.0, 350.0};
  int nx = 8;
  int ny = 8;
  int layers = 10;
  int order = 3;
  double courant_h = 0.7;
  double courant_v = 0.7;
  long steps = 100;         // used when end_time <= 0
  double end_time = 0.0;    // s; overrides steps when positive
  FilterParams filter;
  GasConstants gas;
  StorageScheme scheme = StorageScheme::Hybrid;
  int partitions = 1;
  long snapshot_every = 0;  // 0 disables snapshots
  bool theta_csv = false;
  std::string out_dir;

  void validate() const;
};

/// Discretization built once per configuration; immutable and shared by workers.
class Simulation {
public:
  explicit Simulation(const BubbleConfig& config);
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const BubbleConfig& config() const noexcept { return config_; }
  const ColumnMesh& mesh() const noexcept { return mesh_; }
  const ReferenceElement& ref() const noexcept { return ref_; }
  const MetricTerms& metrics() const noexcept { return metrics_; }
  const CgNumbering& numbering() const noexcept { return numbering_; }
  const ReferenceAtmosphereField& background() const noexcept { return background_; }
  const Model& model() const noexcept { return model_; }

  /// Node position and background potential temperature per global id.
  const std::vector<Vec3>& node_positions() const noexcept { return positions_; }
  const std::vector<double>& background_theta() const noexcept { return theta_bar_; }

  StateCG initial_state() const;

private:
  BubbleConfig config_;
  ColumnMesh mesh_;
  ReferenceElement ref_;
  MetricTerms metrics_;
  CgNumbering numbering_;
  ReferenceAtmosphereField background_;
  Model model_;
  std::vector<Vec3> positions_;
  std::vector<double> theta_bar_;
};

/// Hydrostatic, neutrally stratified background at height z.
struct BackgroundPoint {
  double rho = 0.0;
  double pressure = 0.0;
  double theta = 0.0;  // Theta_bar = rho_bar theta0
};

BackgroundPoint background_at(double z, double theta0, const GasConstants& gas);

/// Cosine-bell potential temperature perturbation.
double bubble_perturbation(const Vec3& x, const BubbleConfig& config);

/// Background field in the layout the scheme keeps it in, plus the perturbed
/// state (pressure unchanged, density reduced inside the bubble, u = 0).
struct BubbleInit {
  StateCG state;
  ReferenceAtmosphereField background;
};

BubbleInit init_bubble(const BubbleConfig& config, const ColumnMesh& mesh,
                       const MetricTerms& metrics, const CgNumbering& numbering);

struct Diagnostics {
  long step = 0;
  double time = 0.0;
  double mass = 0.0;
  double theta_min = 0.0;  // of theta'
  double theta_max = 0.0;
  double max_speed = 0.0;
  double centroid_z = 0.0;  // theta'-weighted mean height
};

Diagnostics diagnose(const Simulation& sim, const StateCG& state, long step, double time);

struct PhaseTimes {
  double create_rhs = 0.0;
  double dss = 0.0;  // assembly including halo exchange
  double filter = 0.0;
  double update = 0.0;
  double total = 0.0;
};

struct RunReport {
  int partitions = 1;
  long steps_requested = 0;
  long steps_completed = 0;
  double dt = 0.0;
  PhaseTimes times;  // slowest worker per phase; warm-up step excluded
  std::vector<Diagnostics> history;
  std::vector<std::size_t> elements_per_partition;
  bool diverged = false;
  long failure_step = -1;
  std::string failure;
  unsigned hardware_threads = 0;
  bool oversubscribed = false;
  StateCG final_state;
};

/// Runs the configured bubble on `partitions` workers.
RunReport run(const Simulation& sim, int partitions);
RunReport run(const BubbleConfig& config);

struct ScalingRow {
  int workers = 0;
  PhaseTimes times;
  double efficiency = 0.0;  // t0 T0 / (t T)
  double efficiency_create_rhs = 0.0;
  double efficiency_dss = 0.0;
  double efficiency_filter = 0.0;
  bool oversubscribed = false;
};

double scaling_efficiency(double base_time, int base_workers, double time, int workers);

std::vector<ScalingRow> scale_experiment(const Simulation& sim, const std::vector<int>& workers);

std::string format_diagnostics_csv(const std::vector<Diagnostics>& history);
std::string format_scaling_csv(const std::vector<ScalingRow>& rows);

/// Nodal (x, y, z, theta') rows for plotting.
std::string format_theta_csv(const Simulation& sim, const StateCG& state);

}  // namespace sem
