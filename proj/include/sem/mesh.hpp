#pragma once

// Column-structured hexahedral mesh: one macro quad refined to a uniform
// quadtree level, leaves ordered along the Morton curve, each leaf carrying a
// bottom-to-top list of element layers.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sem/reference_element.hpp"

namespace sem {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int d) { return d == 0 ? x : (d == 1 ? y : z); }
  double operator[](int d) const { return d == 0 ? x : (d == 1 ? y : z); }
};

using CoordinateMap = std::function<Vec3(const Vec3&)>;

/// Bit-interleaved z-curve index; i occupies the even (least-significant) bits.
std::uint64_t morton_encode(std::uint32_t i, std::uint32_t j, int level);
std::pair<std::uint32_t, std::uint32_t> morton_decode(std::uint64_t index, int level);

struct Column {
  std::uint32_t macro_id = 0;
  std::uint64_t morton = 0;
  int i = 0;
  int j = 0;
  std::size_t first_element = 0;
  int layers = 0;
};

struct HexElement {
  std::array<Vec3, 8> vertices;  // corner c = a + 2b + 4c' with a,b,c' in {0,1}
  std::size_t column = 0;
  int layer = 0;
};

struct BoxSpec {
  int nx = 1;
  int ny = 1;
  int layers = 1;
  double lx = 1000.0;
  double ly = 1000.0;
  double lz = 1000.0;
  double z_min = 0.0;
  CoordinateMap mapping;  // optional smooth map applied to every node position
};

class ColumnMesh {
public:
  ColumnMesh() = default;
  ColumnMesh(BoxSpec spec, std::vector<Column> columns, std::vector<HexElement> elements);

  const BoxSpec& spec() const noexcept { return spec_; }
  int nx() const noexcept { return spec_.nx; }
  int ny() const noexcept { return spec_.ny; }
  int level() const noexcept { return level_; }
  double z_min() const noexcept { return spec_.z_min; }
  double z_max() const noexcept { return spec_.z_min + spec_.lz; }

  const std::vector<Column>& columns() const noexcept { return columns_; }
  const std::vector<HexElement>& elements() const noexcept { return elements_; }
  std::size_t element_count() const noexcept { return elements_.size(); }

  /// True when every column has the same number of layers.
  bool uniform_layers() const noexcept;

  /// Column index holding horizontal cell (i, j), or -1.
  std::ptrdiff_t column_at(int i, int j) const;

  /// Element at horizontal cell (i, j) and layer, or -1.
  std::ptrdiff_t element_at(int i, int j, int layer) const;

  /// Physical position of reference point (xi, eta, zeta) in element e.
  Vec3 map_point(std::size_t e, double xi, double eta, double zeta) const;

  double build_seconds() const noexcept { return build_seconds_; }
  void set_build_seconds(double s) noexcept { build_seconds_ = s; }

private:
  BoxSpec spec_;
  int level_ = 0;
  std::vector<Column> columns_;
  std::vector<HexElement> elements_;
  std::vector<std::ptrdiff_t> column_lookup_;  // (i + nx * j) -> column index
  double build_seconds_ = 0.0;
};

/// nx, ny powers of two; uniform layer count.
ColumnMesh build_box_mesh(const BoxSpec& spec);

/// Same box with per-column layer counts given in Morton column order.
ColumnMesh build_box_mesh(const BoxSpec& spec, const std::vector<int>& layers_per_column);

/// Per-node geometric factors. Layout: jacobian[e * N + n];
/// dxi_dx[(e * 9 + 3 * d + c) * N + n] = d xi_d / d x_c.
struct MetricTerms {
  std::size_t nodes_per_element = 0;
  std::vector<double> jacobian;
  std::vector<double> dxi_dx;
  std::vector<double> coordinates;  // [(e * 3 + c) * N + n]

  double jac(std::size_t e, std::size_t n) const { return jacobian[e * nodes_per_element + n]; }
  double dxi(std::size_t e, int d, int c, std::size_t n) const {
    return dxi_dx[(e * 9 + 3 * d + c) * nodes_per_element + n];
  }
  double coord(std::size_t e, int c, std::size_t n) const {
    return coordinates[(e * 3 + c) * nodes_per_element + n];
  }
};

/// Jacobians from the differentiated node positions; inverse metrics in
/// conservative curl form so the discrete metric identities hold.
MetricTerms compute_metrics(const ColumnMesh& mesh, const ReferenceElement& ref);

enum WallBit : std::uint8_t {
  kWallXMin = 1,
  kWallXMax = 2,
  kWallYMin = 4,
  kWallYMax = 8,
  kWallZMin = 16,
  kWallZMax = 32,
};

struct CgNumbering {
  std::size_t nodes_per_element = 0;
  std::size_t unique_count = 0;
  std::vector<std::int64_t> global_ids;  // [e * N + n]
  std::vector<double> mass;              // sum_e w J per global node
  std::vector<std::uint8_t> walls;       // WallBit mask per global node
  // Node -> incident (element, local node) pairs, ascending element id (CSR).
  std::vector<std::size_t> incidence_offsets;
  std::vector<std::uint32_t> incidence_element;
  std::vector<std::uint32_t> incidence_local;

  std::int64_t id(std::size_t e, std::size_t n) const { return global_ids[e * nodes_per_element + n]; }
};

CgNumbering build_cg_numbering(const ColumnMesh& mesh, const ReferenceElement& ref,
                               const MetricTerms& metrics);

struct Partition {
  int id = 0;
  std::size_t first_column = 0;
  std::size_t column_count = 0;
  std::size_t first_element = 0;
  std::size_t element_count = 0;
  std::vector<std::int64_t> nodes;                       // ascending global ids touched
  std::map<int, std::vector<std::int64_t>> halo;         // neighbor -> shared ids ascending
};

/// Contiguous Morton segments weighted by layer count (greedy prefix rule).
std::vector<Partition> partition_columns(const ColumnMesh& mesh, int parts);

/// Fills Partition::nodes and Partition::halo from the CG numbering.
void attach_halos(std::vector<Partition>& partitions, const ColumnMesh& mesh,
                  const CgNumbering& numbering);

struct PartitionQuality {
  std::vector<std::size_t> boundary_faces;
  std::vector<double> ratio;  // boundary faces / elements
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
};

PartitionQuality partition_quality(const std::vector<Partition>& partitions,
                                   const ColumnMesh& mesh);

/// Plain-text report consumed by the `mesh` subcommand.
std::string mesh_summary(const ColumnMesh& mesh, const CgNumbering& numbering,
                         const std::vector<Partition>& partitions, const PartitionQuality& quality);

}  // namespace sem
