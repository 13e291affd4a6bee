#include "sem/storage.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "sem/error.hpp"

namespace sem {

StateDG scatter(const StateCG& cg, const CgNumbering& numbering) {
  const std::size_t nn = numbering.nodes_per_element;
  const std::size_t ne = numbering.global_ids.size() / nn;
  StateDG dg(ne, nn);
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t v = 0; v < kNumVars; ++v)
      for (std::size_t n = 0; n < nn; ++n) dg.at(e, v, n) = cg.at(numbering.id(e, n), v);
  return dg;
}

StateCG dss(const StateDG& contributions, const CgNumbering& numbering) {
  StateCG out(numbering.unique_count);
  for (std::size_t g = 0; g < numbering.unique_count; ++g) {
    const double m = numbering.mass[g];
    if (!(m > 0.0)) throw Error("dss: non-positive mass entry");
    for (std::size_t v = 0; v < kNumVars; ++v) {
      double s = 0.0;
      for (std::size_t r = numbering.incidence_offsets[g]; r < numbering.incidence_offsets[g + 1]; ++r)
        s += contributions.at(numbering.incidence_element[r], v, numbering.incidence_local[r]);
      out.at(g, v) = s / m;
    }
  }
  return out;
}

std::string to_string(StorageScheme s) {
  switch (s) {
    case StorageScheme::CG: return "cg";
    case StorageScheme::DG: return "dg";
    case StorageScheme::Hybrid: return "hybrid";
  }
  return "?";
}

StorageScheme parse_storage_scheme(const std::string& name) {
  if (name == "cg" || name == "CG") return StorageScheme::CG;
  if (name == "dg" || name == "DG") return StorageScheme::DG;
  if (name == "hybrid" || name == "cgdg" || name == "CG/DG") return StorageScheme::Hybrid;
  throw ConfigError("unknown storage scheme '" + name + "' (expected cg, dg or hybrid)");
}

void Channel::send(std::vector<double> message) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(message));
  }
  ready_.notify_one();
}

std::vector<double> Channel::receive() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return !queue_.empty() || aborted_; });
  if (queue_.empty()) throw ProtocolError("halo: exchange aborted");
  auto msg = std::move(queue_.front());
  queue_.pop_front();
  return msg;
}

void Channel::abort() {
  {
    std::lock_guard lock(mutex_);
    aborted_ = true;
  }
  ready_.notify_all();
}

HaloExchanger::HaloExchanger(const std::vector<Partition>& partitions) {
  for (const auto& part : partitions)
    for (const auto& [nb, ids] : part.halo)
      if (!ids.empty()) channels_[{part.id, nb}] = std::make_unique<Channel>();
}

void HaloExchanger::abort() {
  for (auto& [key, ch] : channels_) ch->abort();
}

void HaloExchanger::send(int from, int to, std::vector<double> message) {
  auto it = channels_.find({from, to});
  if (it == channels_.end()) throw ProtocolError("halo: no channel between these partitions");
  it->second->send(std::move(message));
}

std::vector<double> HaloExchanger::receive(int at, int from) {
  auto it = channels_.find({from, at});
  if (it == channels_.end()) throw ProtocolError("halo: no channel between these partitions");
  return it->second->receive();
}

LocalDomain::LocalDomain(const std::vector<Partition>& partitions, int id,
                         const CgNumbering& numbering) {
  if (id < 0 || static_cast<std::size_t>(id) >= partitions.size())
    throw InvalidArgument("LocalDomain: partition id out of range");
  const auto& part = partitions[id];
  if (part.nodes.empty() && part.element_count > 0)
    throw InvalidArgument("LocalDomain: partition halos not attached");
  partition_id_ = id;
  first_element_ = part.first_element;
  element_count_ = part.element_count;
  nodes_per_element_ = numbering.nodes_per_element;
  global_of_local_ = part.nodes;
  const std::size_t nn = nodes_per_element_;

  auto local_of = [&](std::int64_t g) {
    auto it = std::lower_bound(global_of_local_.begin(), global_of_local_.end(), g);
    return static_cast<std::uint32_t>(it - global_of_local_.begin());
  };
  local_ids_.resize(element_count_ * nn);
  for (std::size_t le = 0; le < element_count_; ++le)
    for (std::size_t n = 0; n < nn; ++n)
      local_ids_[le * nn + n] = local_of(numbering.id(first_element_ + le, n));

  auto owner_of = [&](std::size_t e) {
    auto it = std::upper_bound(partitions.begin(), partitions.end(), e,
                               [](std::size_t x, const Partition& p) { return x < p.first_element; });
    return static_cast<int>(it - partitions.begin()) - 1;
  };
  for (const auto& [nb, ids] : part.halo)
    if (!ids.empty()) neighbors_.push_back(nb);
  std::sort(neighbors_.begin(), neighbors_.end());
  auto slot_of = [&](int nb) {
    return static_cast<int>(std::lower_bound(neighbors_.begin(), neighbors_.end(), nb) -
                            neighbors_.begin());
  };
  send_plan_.resize(neighbors_.size());
  receive_counts_.assign(neighbors_.size(), 0);

  const std::size_t nl = global_of_local_.size();
  mass_.resize(nl);
  walls_.resize(nl);
  owned_.resize(nl);
  segment_offsets_.assign(1, 0);
  for (std::size_t ln = 0; ln < nl; ++ln) {
    const auto g = static_cast<std::size_t>(global_of_local_[ln]);
    mass_[ln] = numbering.mass[g];
    walls_[ln] = numbering.walls[g];
    const std::size_t r0 = numbering.incidence_offsets[g];
    const std::size_t r1 = numbering.incidence_offsets[g + 1];
    owned_[ln] = owner_of(numbering.incidence_element[r0]) == id ? 1 : 0;

    // Consecutive runs of incidences belong to one partition because
    // partitions own contiguous, ascending element ranges.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> mine;
    std::vector<int> others;
    std::size_t r = r0;
    while (r < r1) {
      const int owner = owner_of(numbering.incidence_element[r]);
      std::size_t s = r;
      while (s < r1 && owner_of(numbering.incidence_element[s]) == owner) ++s;
      const auto count = static_cast<std::uint32_t>(s - r);
      if (owner == id) {
        segments_.push_back({-1, static_cast<std::uint32_t>(self_element_.size()), count});
        for (std::size_t q = r; q < s; ++q) {
          const auto le = static_cast<std::uint32_t>(numbering.incidence_element[q] - first_element_);
          self_element_.push_back(le);
          self_node_.push_back(numbering.incidence_local[q]);
          mine.emplace_back(le, numbering.incidence_local[q]);
        }
      } else {
        const int slot = slot_of(owner);
        segments_.push_back(
            {slot, static_cast<std::uint32_t>(receive_counts_[slot]), count});
        receive_counts_[slot] += count;
        others.push_back(slot);
      }
      r = s;
    }
    for (int slot : others)
      send_plan_[slot].insert(send_plan_[slot].end(), mine.begin(), mine.end());
    segment_offsets_.push_back(segments_.size());
  }
}

void LocalDomain::assemble(std::span<const double> contributions, std::size_t nvars,
                           HaloExchanger* exchanger, std::span<double> out,
                           bool divide_by_mass) const {
  const std::size_t nn = nodes_per_element_;
  if (contributions.size() != element_count_ * nvars * nn || out.size() != node_count() * nvars)
    throw InvalidArgument("assemble: buffer size mismatch");
  if (!neighbors_.empty() && exchanger == nullptr)
    throw ProtocolError("assemble: partition has neighbors but no exchanger");

  for (std::size_t b = 0; b < neighbors_.size(); ++b) {
    std::vector<double> msg;
    msg.reserve(send_plan_[b].size() * nvars);
    for (const auto& [le, n] : send_plan_[b])
      for (std::size_t v = 0; v < nvars; ++v) msg.push_back(contributions[(le * nvars + v) * nn + n]);
    exchanger->send(partition_id_, neighbors_[b], std::move(msg));
  }
  std::vector<std::vector<double>> inbox(neighbors_.size());
  for (std::size_t b = 0; b < neighbors_.size(); ++b) {
    inbox[b] = exchanger->receive(partition_id_, neighbors_[b]);
    if (inbox[b].size() != receive_counts_[b] * nvars)
      throw ProtocolError("halo: message length " + std::to_string(inbox[b].size()) +
                          " from partition " + std::to_string(neighbors_[b]) + ", expected " +
                          std::to_string(receive_counts_[b] * nvars));
  }

  for (std::size_t ln = 0; ln < node_count(); ++ln) {
    for (std::size_t v = 0; v < nvars; ++v) {
      double s = 0.0;
      for (std::size_t k = segment_offsets_[ln]; k < segment_offsets_[ln + 1]; ++k) {
        const auto& seg = segments_[k];
        if (seg.source < 0) {
          for (std::uint32_t q = seg.offset; q < seg.offset + seg.count; ++q)
            s += contributions[(self_element_[q] * nvars + v) * nn + self_node_[q]];
        } else {
          const auto& msg = inbox[seg.source];
          for (std::uint32_t q = seg.offset; q < seg.offset + seg.count; ++q) s += msg[q * nvars + v];
        }
      }
      out[ln * nvars + v] = divide_by_mass ? s / mass_[ln] : s;
    }
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'S', 'N', 'A', 'P', '1'};

template <class T>
void put(std::ofstream& os, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error("snapshot: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

void write_snapshot(const std::string& path, const SnapshotHeader& header,
                    std::span<const double> values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("snapshot: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, header.version);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(header.layout));
  put<std::uint32_t>(os, header.order);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(kNumVars));
  put<std::uint64_t>(os, header.elements);
  put<std::uint64_t>(os, header.nodes);
  put<double>(os, header.time);
  put<std::uint64_t>(os, values.size());
  for (double v : values) put<double>(os, v);
  if (!os) throw Error("snapshot: write failed for '" + path + "'");
}

std::pair<SnapshotHeader, std::vector<double>> read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("snapshot: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error("snapshot: bad magic in '" + path + "'");
  SnapshotHeader h;
  h.version = get<std::uint32_t>(is);
  h.layout = static_cast<FieldLayout>(get<std::uint32_t>(is));
  h.order = get<std::uint32_t>(is);
  if (get<std::uint32_t>(is) != kNumVars) throw Error("snapshot: unexpected variable count");
  h.elements = get<std::uint64_t>(is);
  h.nodes = get<std::uint64_t>(is);
  h.time = get<double>(is);
  const auto count = get<std::uint64_t>(is);
  std::vector<double> values(count);
  for (auto& v : values) v = get<double>(is);
  return {h, std::move(values)};
}

}  // namespace sem
