#include "sem/mesh.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sem/error.hpp"
#include "sem/tensor.hpp"

namespace sem {

std::uint64_t morton_encode(std::uint32_t i, std::uint32_t j, int level) {
  if (level < 0 || level > 31) throw InvalidArgument("morton_encode: level must lie in [0, 31]");
  const std::uint64_t limit = std::uint64_t{1} << level;
  if (i >= limit || j >= limit) throw InvalidArgument("morton_encode: coordinate out of range");
  std::uint64_t index = 0;
  for (int b = 0; b < level; ++b) {
    index |= static_cast<std::uint64_t>((i >> b) & 1U) << (2 * b);
    index |= static_cast<std::uint64_t>((j >> b) & 1U) << (2 * b + 1);
  }
  return index;
}

std::pair<std::uint32_t, std::uint32_t> morton_decode(std::uint64_t index, int level) {
  if (level < 0 || level > 31) throw InvalidArgument("morton_decode: level must lie in [0, 31]");
  if (level < 32 && index >= (std::uint64_t{1} << (2 * level)))
    throw InvalidArgument("morton_decode: index out of range");
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  for (int b = 0; b < level; ++b) {
    i |= static_cast<std::uint32_t>((index >> (2 * b)) & 1U) << b;
    j |= static_cast<std::uint32_t>((index >> (2 * b + 1)) & 1U) << b;
  }
  return {i, j};
}

ColumnMesh::ColumnMesh(BoxSpec spec, std::vector<Column> columns, std::vector<HexElement> elements)
    : spec_(std::move(spec)), columns_(std::move(columns)), elements_(std::move(elements)) {
  level_ = std::bit_width(static_cast<unsigned>(std::max(spec_.nx, spec_.ny))) - 1;
  column_lookup_.assign(static_cast<std::size_t>(spec_.nx) * spec_.ny, -1);
  for (std::size_t c = 0; c < columns_.size(); ++c)
    column_lookup_[columns_[c].i + static_cast<std::size_t>(spec_.nx) * columns_[c].j] =
        static_cast<std::ptrdiff_t>(c);
}

bool ColumnMesh::uniform_layers() const noexcept {
  return std::all_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.layers == columns_.front().layers; });
}

std::ptrdiff_t ColumnMesh::column_at(int i, int j) const {
  if (i < 0 || j < 0 || i >= spec_.nx || j >= spec_.ny) return -1;
  return column_lookup_[i + static_cast<std::size_t>(spec_.nx) * j];
}

std::ptrdiff_t ColumnMesh::element_at(int i, int j, int layer) const {
  const auto c = column_at(i, j);
  if (c < 0 || layer < 0 || layer >= columns_[c].layers) return -1;
  return static_cast<std::ptrdiff_t>(columns_[c].first_element) + layer;
}

Vec3 ColumnMesh::map_point(std::size_t e, double xi, double eta, double zeta) const {
  const auto& v = elements_.at(e).vertices;
  const double s[3] = {xi, eta, zeta};
  Vec3 p;
  for (int c = 0; c < 8; ++c) {
    double w = 1.0;
    for (int d = 0; d < 3; ++d) {
      const int bit = (c >> d) & 1;
      w *= bit ? 0.5 * (1.0 + s[d]) : 0.5 * (1.0 - s[d]);
    }
    p.x += w * v[c].x;
    p.y += w * v[c].y;
    p.z += w * v[c].z;
  }
  return spec_.mapping ? spec_.mapping(p) : p;
}

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

ColumnMesh build_box_mesh(const BoxSpec& spec) {
  if (spec.layers < 1) throw InvalidArgument("build_box_mesh: need at least one layer");
  const std::size_t columns = static_cast<std::size_t>(std::max(spec.nx, 0)) * std::max(spec.ny, 0);
  return build_box_mesh(spec, std::vector<int>(columns, spec.layers));
}

ColumnMesh build_box_mesh(const BoxSpec& spec, const std::vector<int>& layers_per_column) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!is_power_of_two(spec.nx) || !is_power_of_two(spec.ny))
    throw InvalidArgument("build_box_mesh: nx and ny must be powers of two");
  if (!(spec.lx > 0.0) || !(spec.ly > 0.0) || !(spec.lz > 0.0))
    throw InvalidArgument("build_box_mesh: degenerate extents");
  const std::size_t ncol = static_cast<std::size_t>(spec.nx) * spec.ny;
  if (layers_per_column.size() != ncol)
    throw InvalidArgument("build_box_mesh: one layer count per column required");
  for (int l : layers_per_column)
    if (l < 1) throw InvalidArgument("build_box_mesh: every column needs at least one layer");

  const int level = std::bit_width(static_cast<unsigned>(std::max(spec.nx, spec.ny))) - 1;
  std::vector<Column> cols;
  cols.reserve(ncol);
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) {
      Column c;
      c.i = i;
      c.j = j;
      c.morton = morton_encode(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), level);
      cols.push_back(c);
    }
  std::sort(cols.begin(), cols.end(),
            [](const Column& a, const Column& b) { return a.morton < b.morton; });

  const double dx = spec.lx / spec.nx;
  const double dy = spec.ly / spec.ny;
  std::vector<HexElement> elements;
  std::size_t first = 0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    auto& col = cols[c];
    col.layers = layers_per_column[c];
    col.first_element = first;
    const double dz = spec.lz / col.layers;
    for (int l = 0; l < col.layers; ++l) {
      HexElement h;
      h.column = c;
      h.layer = l;
      for (int v = 0; v < 8; ++v) {
        h.vertices[v] = {(col.i + (v & 1)) * dx, (col.j + ((v >> 1) & 1)) * dy,
                         spec.z_min + (l + ((v >> 2) & 1)) * dz};
      }
      elements.push_back(h);
    }
    first += col.layers;
  }
  ColumnMesh mesh(spec, std::move(cols), std::move(elements));
  mesh.set_build_seconds(
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return mesh;
}

MetricTerms compute_metrics(const ColumnMesh& mesh, const ReferenceElement& ref) {
  const std::size_t n1 = ref.points_1d();
  const std::size_t nn = ref.nodes_per_element();
  const auto pts = ref.points();
  const std::size_t ne = mesh.element_count();
  MetricTerms m;
  m.nodes_per_element = nn;
  m.jacobian.resize(ne * nn);
  m.dxi_dx.resize(ne * 9 * nn);
  m.coordinates.resize(ne * 3 * nn);

  std::vector<double> x[3];
  std::vector<double> dx[3][3];  // dx[c][d] = d x_c / d xi_d
  for (auto& v : x) v.resize(nn);
  for (auto& row : dx)
    for (auto& v : row) v.resize(nn);
  std::vector<double> vfield[3];
  std::vector<double> dv(nn);
  for (auto& v : vfield) v.resize(nn);
  std::vector<double> ja(9 * nn);  // ja[(3 * i + c) * nn + q] = (J a^i)_c

  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t k = 0; k < n1; ++k)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t i = 0; i < n1; ++i) {
          const Vec3 p = mesh.map_point(e, pts[i], pts[j], pts[k]);
          const std::size_t q = node_index(i, j, k, n1);
          for (int c = 0; c < 3; ++c) x[c][q] = p[c];
        }
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d)
        apply_along_axis<double>(ref.diff(), x[c], dx[c][d], d);

    for (std::size_t q = 0; q < nn; ++q) {
      const double jac = dx[0][0][q] * (dx[1][1][q] * dx[2][2][q] - dx[1][2][q] * dx[2][1][q]) -
                         dx[0][1][q] * (dx[1][0][q] * dx[2][2][q] - dx[1][2][q] * dx[2][0][q]) +
                         dx[0][2][q] * (dx[1][0][q] * dx[2][1][q] - dx[1][1][q] * dx[2][0][q]);
      if (!(jac > 0.0))
        throw MeshError("compute_metrics: non-positive Jacobian in element " + std::to_string(e));
      m.jacobian[e * nn + q] = jac;
    }

    // (J a^i)_n = -(curl_xi (X_l grad_xi X_m))_i with (n, m, l) cyclic.
    std::fill(ja.begin(), ja.end(), 0.0);
    for (int n = 0; n < 3; ++n) {
      const int mm = (n + 1) % 3;
      const int l = (n + 2) % 3;
      for (int d = 0; d < 3; ++d)
        for (std::size_t q = 0; q < nn; ++q) vfield[d][q] = x[l][q] * dx[mm][d][q];
      for (int i = 0; i < 3; ++i) {
        const int a = (i + 1) % 3;
        const int b = (i + 2) % 3;
        // curl_i = d V_b / d xi_a - d V_a / d xi_b
        apply_along_axis<double>(ref.diff(), vfield[b], dv, a);
        for (std::size_t q = 0; q < nn; ++q) ja[(3 * i + n) * nn + q] -= dv[q];
        apply_along_axis<double>(ref.diff(), vfield[a], dv, b);
        for (std::size_t q = 0; q < nn; ++q) ja[(3 * i + n) * nn + q] += dv[q];
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c)
        for (std::size_t q = 0; q < nn; ++q)
          m.dxi_dx[(e * 9 + 3 * i + c) * nn + q] = ja[(3 * i + c) * nn + q] / m.jacobian[e * nn + q];
    for (int c = 0; c < 3; ++c)
      std::copy(x[c].begin(), x[c].end(), m.coordinates.begin() + (e * 3 + c) * nn);
  }
  return m;
}

CgNumbering build_cg_numbering(const ColumnMesh& mesh, const ReferenceElement& ref,
                               const MetricTerms& metrics) {
  if (!mesh.uniform_layers())
    throw MeshError("build_cg_numbering: columns with differing layer counts are non-conforming");
  const int p = ref.order();
  const std::size_t n1 = ref.points_1d();
  const std::size_t nn = ref.nodes_per_element();
  const std::size_t ne = mesh.element_count();
  const std::size_t gx = static_cast<std::size_t>(p) * mesh.nx() + 1;
  const std::size_t gy = static_cast<std::size_t>(p) * mesh.ny() + 1;
  const std::size_t gz = static_cast<std::size_t>(p) * mesh.columns().front().layers + 1;

  CgNumbering cg;
  cg.nodes_per_element = nn;
  cg.global_ids.resize(ne * nn);
  std::vector<std::int64_t> lattice_to_id(gx * gy * gz, -1);
  std::int64_t next = 0;
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = mesh.elements()[e];
    const auto& col = mesh.columns()[el.column];
    for (std::size_t k = 0; k < n1; ++k)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t i = 0; i < n1; ++i) {
          const std::size_t lx = col.i * p + i;
          const std::size_t ly = col.j * p + j;
          const std::size_t lz = el.layer * p + k;
          auto& slot = lattice_to_id[lx + gx * (ly + gy * lz)];
          if (slot < 0) {
            slot = next++;
            std::uint8_t w = 0;
            if (lx == 0) w |= kWallXMin;
            if (lx == gx - 1) w |= kWallXMax;
            if (ly == 0) w |= kWallYMin;
            if (ly == gy - 1) w |= kWallYMax;
            if (lz == 0) w |= kWallZMin;
            if (lz == gz - 1) w |= kWallZMax;
            cg.walls.push_back(w);
          }
          cg.global_ids[e * nn + node_index(i, j, k, n1)] = slot;
        }
  }
  cg.unique_count = static_cast<std::size_t>(next);

  cg.incidence_offsets.assign(cg.unique_count + 1, 0);
  for (auto g : cg.global_ids) ++cg.incidence_offsets[g + 1];
  std::partial_sum(cg.incidence_offsets.begin(), cg.incidence_offsets.end(),
                   cg.incidence_offsets.begin());
  cg.incidence_element.resize(ne * nn);
  cg.incidence_local.resize(ne * nn);
  std::vector<std::size_t> fill(cg.incidence_offsets.begin(), cg.incidence_offsets.end() - 1);
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t q = 0; q < nn; ++q) {
      const auto g = cg.global_ids[e * nn + q];
      cg.incidence_element[fill[g]] = static_cast<std::uint32_t>(e);
      cg.incidence_local[fill[g]] = static_cast<std::uint32_t>(q);
      ++fill[g];
    }

  const auto w3 = ref.weights_3d();
  cg.mass.assign(cg.unique_count, 0.0);
  for (std::size_t g = 0; g < cg.unique_count; ++g) {
    double s = 0.0;
    for (std::size_t r = cg.incidence_offsets[g]; r < cg.incidence_offsets[g + 1]; ++r)
      s += w3[cg.incidence_local[r]] * metrics.jac(cg.incidence_element[r], cg.incidence_local[r]);
    cg.mass[g] = s;
  }
  return cg;
}

std::vector<Partition> partition_columns(const ColumnMesh& mesh, int parts) {
  const auto& cols = mesh.columns();
  if (parts < 1) throw InvalidArgument("partition_columns: need at least one partition");
  if (static_cast<std::size_t>(parts) > cols.size())
    throw InvalidArgument("partition_columns: more partitions than columns");
  double total = 0.0;
  for (const auto& c : cols) total += c.layers;

  std::vector<Partition> out(parts);
  std::size_t c = 0;
  double cumulative = 0.0;
  for (int k = 0; k < parts; ++k) {
    auto& part = out[k];
    part.id = k;
    part.first_column = c;
    part.first_element = c < cols.size() ? cols[c].first_element : mesh.element_count();
    const double quota = total * (k + 1) / parts;
    const std::size_t reserve = static_cast<std::size_t>(parts - k - 1);
    const bool last = k == parts - 1;
    while (c < cols.size() - reserve && (part.column_count == 0 || last || cumulative < quota)) {
      cumulative += cols[c].layers;
      part.element_count += cols[c].layers;
      ++part.column_count;
      ++c;
    }
  }
  return out;
}

void attach_halos(std::vector<Partition>& partitions, const ColumnMesh& mesh,
                  const CgNumbering& numbering) {
  (void)mesh;
  const std::size_t nn = numbering.nodes_per_element;
  // Partitions touching each node, gathered in ascending partition order.
  std::vector<std::vector<int>> touch(numbering.unique_count);
  for (auto& part : partitions) {
    part.nodes.clear();
    part.halo.clear();
    for (std::size_t e = part.first_element; e < part.first_element + part.element_count; ++e)
      for (std::size_t q = 0; q < nn; ++q) {
        auto& t = touch[numbering.id(e, q)];
        if (t.empty() || t.back() != part.id) t.push_back(part.id);
      }
  }
  for (std::size_t g = 0; g < touch.size(); ++g) {
    const auto& t = touch[g];
    for (int a : t) {
      partitions[a].nodes.push_back(static_cast<std::int64_t>(g));
      for (int b : t)
        if (b != a) partitions[a].halo[b].push_back(static_cast<std::int64_t>(g));
    }
  }
}

PartitionQuality partition_quality(const std::vector<Partition>& partitions,
                                   const ColumnMesh& mesh) {
  std::vector<int> owner(mesh.element_count(), -1);
  for (const auto& part : partitions)
    for (std::size_t e = part.first_element; e < part.first_element + part.element_count; ++e)
      owner[e] = part.id;

  PartitionQuality q;
  q.boundary_faces.assign(partitions.size(), 0);
  q.ratio.assign(partitions.size(), 0.0);
  static constexpr int kOffsets[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements()[e];
    const auto& col = mesh.columns()[el.column];
    for (const auto& off : kOffsets) {
      const auto nb = mesh.element_at(col.i + off[0], col.j + off[1], el.layer);
      if (nb >= 0 && owner[nb] != owner[e]) ++q.boundary_faces[owner[e]];
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    const auto elems = partitions[k].element_count;
    q.ratio[k] = elems > 0 ? static_cast<double>(q.boundary_faces[k]) / elems : 0.0;
    q.max_ratio = std::max(q.max_ratio, q.ratio[k]);
    sum += q.ratio[k];
  }
  q.mean_ratio = partitions.empty() ? 0.0 : sum / partitions.size();
  return q;
}

std::string mesh_summary(const ColumnMesh& mesh, const CgNumbering& numbering,
                         const std::vector<Partition>& partitions,
                         const PartitionQuality& quality) {
  std::ostringstream os;
  os << "columns " << mesh.columns().size() << "\n";
  os << "elements " << mesh.element_count() << "\n";
  os << "unique_nodes " << numbering.unique_count << "\n";
  os << "build_seconds " << mesh.build_seconds() << "\n";
  os << "partition elements columns boundary_faces surface_to_volume\n";
  for (std::size_t k = 0; k < partitions.size(); ++k)
    os << k << ' ' << partitions[k].element_count << ' ' << partitions[k].column_count << ' '
       << quality.boundary_faces[k] << ' ' << quality.ratio[k] << "\n";
  os << "max_surface_to_volume " << quality.max_ratio << "\n";
  os << "mean_surface_to_volume " << quality.mean_ratio << "\n";
  return os.str();
}

}  // namespace sem
