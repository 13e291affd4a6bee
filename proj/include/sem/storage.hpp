#pragma once

// Field layouts (unique-node CG and element-duplicated DG), gather/scatter,
// direct stiffness summation, and the message-channel halo exchange used by
// partition workers.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sem/mesh.hpp"

namespace sem {

inline constexpr std::size_t kNumVars = 5;
enum Var : std::size_t { kRho = 0, kRhoU = 1, kRhoV = 2, kRhoW = 3, kTheta = 4 };

/// One value set (rho, rho u, rho v, rho w, Theta) per unique node, node-major.
struct StateCG {
  std::size_t nodes = 0;
  std::vector<double> values;  // [g * 5 + v]

  StateCG() = default;
  explicit StateCG(std::size_t n) : nodes(n), values(n * kNumVars, 0.0) {}
  double& at(std::size_t g, std::size_t v) { return values[g * kNumVars + v]; }
  double at(std::size_t g, std::size_t v) const { return values[g * kNumVars + v]; }
  std::size_t bytes() const noexcept { return values.size() * sizeof(double); }
};

/// (p+1)^3 x 5 values per element, element-major, variable-major inside, x-fastest.
struct StateDG {
  std::size_t elements = 0;
  std::size_t nodes_per_element = 0;
  std::vector<double> values;  // [(e * 5 + v) * N + n]

  StateDG() = default;
  StateDG(std::size_t e, std::size_t n)
      : elements(e), nodes_per_element(n), values(e * n * kNumVars, 0.0) {}
  double& at(std::size_t e, std::size_t v, std::size_t n) {
    return values[(e * kNumVars + v) * nodes_per_element + n];
  }
  double at(std::size_t e, std::size_t v, std::size_t n) const {
    return values[(e * kNumVars + v) * nodes_per_element + n];
  }
  std::span<double> element(std::size_t e) {
    return {values.data() + e * kNumVars * nodes_per_element, kNumVars * nodes_per_element};
  }
  std::span<const double> element(std::size_t e) const {
    return {values.data() + e * kNumVars * nodes_per_element, kNumVars * nodes_per_element};
  }
  std::size_t bytes() const noexcept { return values.size() * sizeof(double); }
};

StateDG scatter(const StateCG& cg, const CgNumbering& numbering);

/// Sum element contributions per global node in ascending element order, divide by mass.
StateCG dss(const StateDG& contributions, const CgNumbering& numbering);

/// Where the model keeps the prognostic state and the reference atmosphere.
enum class StorageScheme { CG, DG, Hybrid };

std::string to_string(StorageScheme s);
StorageScheme parse_storage_scheme(const std::string& name);

enum class FieldLayout : std::uint8_t { CG = 0, DG = 1 };

/// Hydrostatic background (rho_bar, p_bar, Theta_bar); CG-indexed by global id
/// or DG-indexed by e * N + n.
struct ReferenceAtmosphereField {
  FieldLayout layout = FieldLayout::CG;
  std::vector<double> rho;
  std::vector<double> pressure;
  std::vector<double> theta;

  std::size_t index(std::size_t e, std::size_t n, const CgNumbering& numbering) const {
    return layout == FieldLayout::CG
               ? static_cast<std::size_t>(numbering.id(e, n))
               : e * numbering.nodes_per_element + n;
  }
};

/// Blocking FIFO between two workers.
class Channel {
public:
  void send(std::vector<double> message);
  /// Blocks until a message arrives; throws ProtocolError once aborted.
  std::vector<double> receive();
  void abort();

private:
  bool aborted_ = false;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::vector<double>> queue_;
};

/// One channel per ordered partition pair that shares nodes.
class HaloExchanger {
public:
  explicit HaloExchanger(const std::vector<Partition>& partitions);

  void send(int from, int to, std::vector<double> message);
  std::vector<double> receive(int at, int from);
  /// Wakes every blocked receiver with an error; used when a worker fails.
  void abort();

private:
  std::map<std::pair<int, int>, std::unique_ptr<Channel>> channels_;
};

/// Partition-local numbering plus the plan that assembles element
/// contributions on the partition's nodes in canonical (ascending element) order.
class LocalDomain {
public:
  LocalDomain(const std::vector<Partition>& partitions, int id, const CgNumbering& numbering);

  int partition_id() const noexcept { return partition_id_; }
  std::size_t first_element() const noexcept { return first_element_; }
  std::size_t element_count() const noexcept { return element_count_; }
  std::size_t nodes_per_element() const noexcept { return nodes_per_element_; }
  std::size_t node_count() const noexcept { return global_of_local_.size(); }

  std::span<const std::int64_t> global_ids() const noexcept { return global_of_local_; }
  std::uint32_t local_id(std::size_t local_element, std::size_t n) const {
    return local_ids_[local_element * nodes_per_element_ + n];
  }
  std::span<const double> mass() const noexcept { return mass_; }
  std::span<const std::uint8_t> walls() const noexcept { return walls_; }
  /// True when this partition is the lowest-numbered one touching the node.
  bool owns(std::size_t local_node) const { return owned_[local_node] != 0; }

  /// contributions: [(le * nvars + v) * N + n] for local elements.
  /// out: [ln * nvars + v] for local nodes; divided by mass when requested.
  /// The exchanger may be null only when the partition has no neighbors.
  void assemble(std::span<const double> contributions, std::size_t nvars,
                HaloExchanger* exchanger, std::span<double> out, bool divide_by_mass) const;

private:
  struct Segment {
    int source;  // -1 local, otherwise index into neighbors_
    std::uint32_t offset;
    std::uint32_t count;
  };

  int partition_id_ = 0;
  std::size_t first_element_ = 0;
  std::size_t element_count_ = 0;
  std::size_t nodes_per_element_ = 0;
  std::vector<std::int64_t> global_of_local_;
  std::vector<std::uint32_t> local_ids_;
  std::vector<double> mass_;
  std::vector<std::uint8_t> walls_;
  std::vector<std::uint8_t> owned_;

  std::vector<std::uint32_t> self_element_;  // local element of each local incidence
  std::vector<std::uint32_t> self_node_;
  std::vector<std::size_t> segment_offsets_;
  std::vector<Segment> segments_;
  std::vector<int> neighbors_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> send_plan_;
  std::vector<std::size_t> receive_counts_;
};

struct SnapshotHeader {
  std::uint32_t version = 1;
  FieldLayout layout = FieldLayout::CG;
  std::uint32_t order = 0;
  std::uint64_t elements = 0;
  std::uint64_t nodes = 0;  // unique nodes (CG) or nodes per element (DG)
  double time = 0.0;
};

/// Header ("SEMSNAP1", version, layout, p, element count, node count, time)
/// followed by little-endian f64 values in the layout's storage order.
void write_snapshot(const std::string& path, const SnapshotHeader& header,
                    std::span<const double> values);
std::pair<SnapshotHeader, std::vector<double>> read_snapshot(const std::string& path);

}  // namespace sem
