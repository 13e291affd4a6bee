#include "sem/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sem/error.hpp"

namespace sem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long x = to_long(key, v);
  if (x < -2147483647L || x > 2147483647L) throw ConfigError("key '" + key + "': out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(const std::string&, const std::string&)>;

struct KeySpec {
  const char* name;
  const char* help;
  Setter set;
};

void apply_keys(const KeyValues& kv, const std::vector<KeySpec>& keys) {
  for (const auto& [k, v] : kv) {
    bool found = false;
    for (const auto& spec : keys)
      if (k == spec.name) {
        spec.set(k, v);
        found = true;
        break;
      }
    if (!found) throw ConfigError("unknown config key '" + k + "'");
  }
}

std::string describe(const std::vector<KeySpec>& keys) {
  std::ostringstream os;
  for (const auto& k : keys) os << "  " << k.name << "  " << k.help << '\n';
  return os.str();
}

std::vector<KeySpec> bubble_keys(BubbleConfig* c) {
  auto d = [](double* p) { return [p](const std::string& k, const std::string& v) { *p = to_double(k, v); }; };
  auto i = [](int* p) { return [p](const std::string& k, const std::string& v) { *p = to_int(k, v); }; };
  auto l = [](long* p) { return [p](const std::string& k, const std::string& v) { *p = to_long(k, v); }; };
  return {
      {"nx", "columns along x (power of two)", i(&c->nx)},
      {"ny", "columns along y (power of two)", i(&c->ny)},
      {"layers", "elements per column", i(&c->layers)},
      {"order", "polynomial order p", i(&c->order)},
      {"lx", "domain extent in x [m]", d(&c->lx)},
      {"ly", "domain extent in y [m]", d(&c->ly)},
      {"lz", "domain extent in z [m]", d(&c->lz)},
      {"theta0", "background potential temperature [K]", d(&c->theta0)},
      {"theta_c", "bubble amplitude [K]", d(&c->theta_c)},
      {"radius", "bubble radius [m]", d(&c->radius)},
      {"center_x", "bubble center x [m]", d(&c->center.x)},
      {"center_y", "bubble center y [m]", d(&c->center.y)},
      {"center_z", "bubble center z [m]", d(&c->center.z)},
      {"courant_h", "horizontal Courant number", d(&c->courant_h)},
      {"courant_v", "vertical Courant number", d(&c->courant_v)},
      {"steps", "time steps (when end_time <= 0)", l(&c->steps)},
      {"end_time", "final model time [s]; overrides steps when positive", d(&c->end_time)},
      {"filter_strength", "filter strength mu (0 disables)", d(&c->filter.strength)},
      {"filter_order", "filter order s", d(&c->filter.filter_order)},
      {"filter_cutoff", "filter cutoff mode k_c (-1 = default)", i(&c->filter.cutoff)},
      {"scheme", "reference atmosphere storage: cg, dg or hybrid",
       [c](const std::string&, const std::string& v) { c->scheme = parse_storage_scheme(v); }},
      {"partitions", "worker count", i(&c->partitions)},
      {"gas_r", "gas constant R [J/kg/K]", d(&c->gas.r)},
      {"gas_cp", "c_p [J/kg/K]", d(&c->gas.cp)},
      {"gas_cv", "c_v [J/kg/K]", d(&c->gas.cv)},
      {"gas_p0", "reference pressure [Pa]", d(&c->gas.p0)},
      {"gravity", "gravitational acceleration [m/s^2]", d(&c->gas.g)},
      {"snapshot_every", "snapshot cadence in steps (0 disables)", l(&c->snapshot_every)},
      {"theta_csv", "also write nodal theta' CSV with each snapshot",
       [c](const std::string& k, const std::string& v) { c->theta_csv = to_bool(k, v); }},
      {"out_dir", "output directory",
       [c](const std::string&, const std::string& v) { c->out_dir = v; }},
  };
}

std::vector<KeySpec> perf_keys(perf::SimConfig* c, perf::MachineModel* m) {
  auto d = [](double* p) { return [p](const std::string& k, const std::string& v) { *p = to_double(k, v); }; };
  auto i = [](int* p) { return [p](const std::string& k, const std::string& v) { *p = to_int(k, v); }; };
  auto b = [](bool* p) { return [p](const std::string& k, const std::string& v) { *p = to_bool(k, v); }; };
  return {
      {"order", "polynomial order p", i(&c->order)},
      {"nx", "elements along x", d(&c->nx)},
      {"ny", "elements along y", d(&c->ny)},
      {"nz", "elements along z", d(&c->nz)},
      {"machines", "machine count the totals are divided over", d(&c->machines)},
      {"steps", "time steps", d(&c->steps)},
      {"stages", "Runge-Kutta stages", i(&c->stages)},
      {"update_arrays", "arrays combined per stage update", d(&c->update_arrays)},
      {"scheme", "reference atmosphere storage: cg, dg or hybrid",
       [c](const std::string&, const std::string& v) { c->scheme = parse_storage_scheme(v); }},
      {"variables", "prognostic variables", i(&c->variables)},
      {"reference_fields", "reference atmosphere fields", i(&c->reference_fields)},
      {"metric_fields", "metric fields per node", i(&c->metric_fields)},
      {"pow_flops", "flops charged per pow()", d(&c->pow_flops)},
      {"random_access_penalty", "apply the cache-line rounding penalty", b(&c->random_access_penalty)},
      {"recompute_metrics", "recompute metric terms instead of reading them", b(&c->recompute_metrics)},
      {"bandwidth", "memory bandwidth [bytes/s]", d(&m->bandwidth)},
      {"peak_flops", "peak floating point rate [flop/s]", d(&m->peak_flops)},
      {"cache_line", "cache line [bytes]", d(&m->cache_line)},
      {"l2_bytes", "L2 capacity [bytes]", d(&m->l2_bytes)},
  };
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    out[key] = value;
  }
  return out;
}

KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_bubble_config(const KeyValues& kv, BubbleConfig& config) {
  apply_keys(kv, bubble_keys(&config));
}

void apply_perf_config(const KeyValues& kv, perf::SimConfig& config, perf::MachineModel& machine) {
  apply_keys(kv, perf_keys(&config, &machine));
}

std::string bubble_config_keys() {
  BubbleConfig c;
  return describe(bubble_keys(&c));
}

std::string perf_config_keys() {
  perf::SimConfig c;
  perf::MachineModel m;
  return describe(perf_keys(&c, &m));
}

}  // namespace sem
