// semcore: mesh reports, bubble runs, scaling sweeps and the performance model.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sem/config.hpp"
#include "sem/error.hpp"
#include "sem/harness.hpp"
#include "sem/perf_model.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDiverged = 3;

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream os(path);
  if (!os) throw sem::ConfigError("cannot write '" + path.string() + "'");
  os << text;
  std::cout << "wrote " << path.string() << '\n';
}

struct BubbleOverrides {
  std::optional<int> nx, ny, layers, order, partitions;
  std::optional<long> steps;
  std::optional<double> end_time;
  std::optional<std::string> scheme;

  void add(CLI::App* app) {
    app->add_option("--nx", nx, "columns along x");
    app->add_option("--ny", ny, "columns along y");
    app->add_option("--layers", layers, "elements per column");
    app->add_option("--order", order, "polynomial order");
    app->add_option("--steps", steps, "time steps");
    app->add_option("--end-time", end_time, "final model time [s]");
    app->add_option("--scheme", scheme, "reference atmosphere storage: cg, dg, hybrid");
  }

  void apply(sem::BubbleConfig& c) const {
    if (nx) c.nx = *nx;
    if (ny) c.ny = *ny;
    if (layers) c.layers = *layers;
    if (order) c.order = *order;
    if (partitions) c.partitions = *partitions;
    if (steps) c.steps = *steps;
    if (end_time) c.end_time = *end_time;
    if (scheme) c.scheme = sem::parse_storage_scheme(*scheme);
  }
};

sem::BubbleConfig load_bubble(const std::string& path, const BubbleOverrides& o, const std::string& out) {
  sem::BubbleConfig c;
  if (!path.empty()) sem::apply_bubble_config(sem::read_config_file(path), c);
  o.apply(c);
  if (!out.empty()) c.out_dir = out;
  c.validate();
  return c;
}

std::vector<std::string> scheme_names() { return {"CG", "CG/DG", "DG"}; }
std::vector<sem::StorageScheme> schemes() {
  return {sem::StorageScheme::CG, sem::StorageScheme::Hybrid, sem::StorageScheme::DG};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral element dynamical core: mesh, run, scale, perfmodel, sweep-order"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out", out_dir, "output directory for CSV and snapshots");

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "build and partition a box mesh and report it");
  int m_nx = 4, m_ny = 4, m_layers = 3, m_parts = 1, m_order = 3;
  mesh_cmd->add_option("--nx", m_nx, "columns along x");
  mesh_cmd->add_option("--ny", m_ny, "columns along y");
  mesh_cmd->add_option("--layers", m_layers, "elements per column");
  mesh_cmd->add_option("--parts", m_parts, "partition count");
  mesh_cmd->add_option("--order", m_order, "polynomial order");

  // run
  auto* run_cmd = app.add_subcommand("run", "run the rising thermal bubble");
  BubbleOverrides run_over;
  run_over.add(run_cmd);
  run_cmd->add_option("--partitions", run_over.partitions, "worker count");
  bool snapshot = false;
  run_cmd->add_flag("--snapshot", snapshot, "write the final state as a binary snapshot");
  run_cmd->footer("Config keys:\n" + sem::bubble_config_keys());

  // scale
  auto* scale_cmd = app.add_subcommand("scale", "strong-scaling thread sweep");
  BubbleOverrides scale_over;
  scale_over.add(scale_cmd);
  std::vector<int> threads{1, 2, 4, 8};
  scale_cmd->add_option("--threads", threads, "worker counts")->delimiter(',');

  // perfmodel
  auto* perf_cmd = app.add_subcommand("perfmodel", "flop/byte ledger and roofline tables");
  std::string preset;
  perf_cmd->add_option("--preset", preset,
                       "table1|table2|table3 (published inputs) or bubble|baroclinic (modeled)")
      ->check(CLI::IsMember({"table1", "table2", "table3", "bubble", "baroclinic"}));
  std::optional<bool> penalty;
  perf_cmd->add_option("--penalty", penalty, "override the random-access penalty for modeled presets");
  bool calibrate = false;
  perf_cmd->add_flag("--calibrate", calibrate, "apply the bubble calibration to modeled rows");
  sem::perf::MachineModel machine;
  perf_cmd->add_option("--bandwidth", machine.bandwidth, "bytes/s");
  perf_cmd->add_option("--peak", machine.peak_flops, "flop/s");
  perf_cmd->add_option("--cache-line", machine.cache_line, "bytes");
  perf_cmd->add_option("--l2", machine.l2_bytes, "bytes");
  perf_cmd->footer("Scenario config keys:\n" + sem::perf_config_keys());

  // sweep-order
  auto* sweep_cmd = app.add_subcommand("sweep-order", "time per step and time to solution versus p");
  int p_min = 1, p_max = 8;
  std::string sweep_scheme = "hybrid";
  bool sweep_penalty = false;
  sweep_cmd->add_option("--p-min", p_min, "lowest order");
  sweep_cmd->add_option("--p-max", p_max, "highest order");
  sweep_cmd->add_option("--scheme", sweep_scheme, "cg, dg or hybrid");
  sweep_cmd->add_flag("--penalty", sweep_penalty, "apply the random-access penalty");

  if (argc < 2) {
    std::cerr << app.help();
    return kConfigError;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*mesh_cmd) {
      sem::BubbleConfig c;
      if (!config_path.empty()) sem::apply_bubble_config(sem::read_config_file(config_path), c);
      if (mesh_cmd->count("--nx") || config_path.empty()) c.nx = m_nx;
      if (mesh_cmd->count("--ny") || config_path.empty()) c.ny = m_ny;
      if (mesh_cmd->count("--layers") || config_path.empty()) c.layers = m_layers;
      if (mesh_cmd->count("--order") || config_path.empty()) c.order = m_order;
      if (mesh_cmd->count("--parts") || config_path.empty()) c.partitions = m_parts;
      const auto mesh = sem::build_box_mesh({c.nx, c.ny, c.layers, c.lx, c.ly, c.lz, 0.0, {}});
      const sem::ReferenceElement ref(c.order);
      const auto metrics = sem::compute_metrics(mesh, ref);
      const auto numbering = sem::build_cg_numbering(mesh, ref, metrics);
      auto parts = sem::partition_columns(mesh, c.partitions);
      sem::attach_halos(parts, mesh, numbering);
      const auto text = sem::mesh_summary(mesh, numbering, parts, sem::partition_quality(parts, mesh));
      std::cout << text;
      write_file(out_dir, "mesh_summary.txt", text);
      return kOk;
    }

    if (*run_cmd) {
      const auto c = load_bubble(config_path, run_over, out_dir);
      const sem::Simulation sim(c);
      const auto r = sem::run(sim, c.partitions);
      const auto& last = r.history.back();
      std::printf("partitions %d  dt %.6g s  steps %ld/%ld\n", r.partitions, r.dt, r.steps_completed,
                  r.steps_requested);
      std::printf("mass %.15g -> %.15g (relative drift %.3e)\n", r.history.front().mass, last.mass,
                  (last.mass - r.history.front().mass) / r.history.front().mass);
      std::printf("theta' [%.6g, %.6g]  max|u| %.6g m/s  centroid z %.6g m\n", last.theta_min,
                  last.theta_max, last.max_speed, last.centroid_z);
      std::printf("times: create_rhs %.4f  dss %.4f  filter %.4f  update %.4f  total %.4f s%s\n",
                  r.times.create_rhs, r.times.dss, r.times.filter, r.times.update, r.times.total,
                  r.oversubscribed ? "  (oversubscribed)" : "");
      write_file(c.out_dir, "diagnostics.csv", sem::format_diagnostics_csv(r.history));
      if (snapshot && !c.out_dir.empty()) {
        sem::SnapshotHeader h;
        h.order = static_cast<std::uint32_t>(c.order);
        h.elements = sim.mesh().element_count();
        h.nodes = r.final_state.nodes;
        h.time = last.time;
        std::filesystem::create_directories(c.out_dir);
        const auto path = (std::filesystem::path(c.out_dir) / "final.bin").string();
        sem::write_snapshot(path, h, r.final_state.values);
        std::cout << "wrote " << path << '\n';
        write_file(c.out_dir, "final_theta.csv", sem::format_theta_csv(sim, r.final_state));
      }
      if (r.diverged) {
        std::fprintf(stderr, "diverged at step %ld: %s\n", r.failure_step, r.failure.c_str());
        return kDiverged;
      }
      return kOk;
    }

    if (*scale_cmd) {
      auto c = load_bubble(config_path, scale_over, out_dir);
      if (!scale_over.steps && config_path.empty()) c.steps = 10;
      for (int t : threads)
        if (t < 1 || t > c.nx * c.ny) throw sem::ConfigError("thread counts must lie in [1, columns]");
      const sem::Simulation sim(c);
      const auto rows = sem::scale_experiment(sim, threads);
      const auto csv = sem::format_scaling_csv(rows);
      std::cout << csv;
      write_file(c.out_dir, "scaling.csv", csv);
      return kOk;
    }

    if (*perf_cmd) {
      machine.validate();
      std::vector<sem::perf::TableRow> rows;
      if (preset.rfind("table", 0) == 0) {
        rows = sem::perf::reproduce_table(preset.back() - '0', machine);
      } else {
        std::vector<sem::perf::SimConfig> configs;
        if (!preset.empty()) {
          const auto p = preset == "bubble" ? sem::perf::Preset::Bubble : sem::perf::Preset::Baroclinic;
          for (auto s : schemes()) configs.push_back(sem::perf::preset_config(p, s));
        } else {
          sem::perf::SimConfig sc;
          if (!config_path.empty()) sem::apply_perf_config(sem::read_config_file(config_path), sc, machine);
          configs.push_back(sc);
        }
        const auto cal = calibrate ? sem::perf::bubble_calibration(machine) : sem::perf::Calibration{};
        for (auto& sc : configs) {
          if (penalty) sc.random_access_penalty = *penalty;
          sc.calibration = cal;
          sc.validate();
          const auto ledger = sem::perf::evaluate(sc, machine);
          if (configs.size() == 1) {
            for (std::size_t k = 0; k < sem::perf::kKernelCount; ++k)
              rows.push_back(sem::perf::derive_row(sem::perf::kKernelNames[k], ledger.kernels[k], machine));
            rows.push_back(sem::perf::derive_row("total", ledger.total(), machine));
          } else {
            rows.push_back(sem::perf::derive_row(sem::to_string(sc.scheme), ledger.total(), machine));
          }
        }
        if (configs.size() > 1)
          for (std::size_t i = 0; i < rows.size(); ++i) rows[i].name = scheme_names()[i];
      }
      std::cout << sem::perf::emit_table(rows);
      write_file(out_dir, "perf_table.csv", sem::perf::emit_csv(rows));
      return kOk;
    }

    if (*sweep_cmd) {
      sem::perf::MachineModel m;
      auto base = sem::perf::preset_config(sem::perf::Preset::Bubble, sem::parse_storage_scheme(sweep_scheme));
      base.random_access_penalty = sweep_penalty;
      const auto points = sem::perf::order_sweep(base, p_min, p_max, m);
      std::string csv = "order,nx,ny,nz,steps,time_per_step_s,time_to_solution_s\n";
      char buf[256];
      for (const auto& s : points) {
        std::snprintf(buf, sizeof buf, "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", s.order, s.nx, s.ny, s.nz,
                      s.steps, s.time_per_step, s.time_to_solution);
        csv += buf;
      }
      std::cout << csv;
      write_file(out_dir, "order_sweep.csv", csv);
      return kOk;
    }
  } catch (const sem::DivergedStateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const sem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const sem::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const sem::MeshError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
