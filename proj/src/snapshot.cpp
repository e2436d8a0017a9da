#include "qsm/snapshot.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qsm/error.hpp"

namespace qsm {

static_assert(std::endian::native == std::endian::little, "snapshot format is little-endian");

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'M', 'S', 'N', 'A', 'P', '\0'};
constexpr std::uint8_t kHasPotential = 1;

class Writer {
 public:
  template <typename T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put(const Eigen::VectorXd& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    bytes.insert(bytes.end(), p, p + sizeof(double) * std::size_t(v.size()));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename T>
  T get() {
    T value;
    take(&value, sizeof(T));
    return value;
  }
  Eigen::VectorXd vector(std::size_t count) {
    Eigen::VectorXd v(Eigen::Index(count), 1);
    take(v.data(), sizeof(double) * count);
    return v;
  }
  bool done() const { return pos_ == end_; }

 private:
  void take(void* out, std::size_t size) {
    if (size > end_ - pos_) throw Error(ErrorCode::kSnapshotCorrupt, "snapshot truncated");
    std::memcpy(out, bytes_.data() + pos_, size);
    pos_ += size;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return std::uint32_t(crc32(crc, data, uInt(size)));
}

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const QuasiSphericalMetric& g, const PotentialField* v) {
  if (v) require_compatible(g, *v);
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kSnapshotVersion);
  w.put(std::int32_t(g.dim()));
  w.put(std::int32_t(g.grid()->lmax()));
  w.put(std::uint64_t(g.num_stations()));
  w.put(std::uint8_t(v ? kHasPotential : 0));
  for (double r : g.radii()) w.put(r);
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    w.put(g.lapse_deviation(k).c);
    w.put(g.lapse_r_coeffs(k).c);
  }
  if (v) {
    for (std::size_t k = 0; k < v->num_stations(); ++k) {
      w.put(v->deviation(k).c);
      w.put(v->radial_coeffs(k).c);
      w.put(v->radial2_coeffs(k).c);
    }
  }
  w.put(checksum(w.bytes.data(), w.bytes.size()));
  return w.bytes;
}

Snapshot decode_snapshot(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) {
    throw Error(ErrorCode::kSnapshotCorrupt, "snapshot truncated");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != checksum(bytes.data(), body)) {
    throw Error(ErrorCode::kSnapshotCorrupt, "snapshot checksum mismatch");
  }
  Reader rd(bytes, body);
  for (char c : kMagic) {
    if (rd.get<char>() != c) throw Error(ErrorCode::kSnapshotCorrupt, "not a snapshot file");
  }
  const auto version = rd.get<std::uint32_t>();
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::kSnapshotCorrupt,
                "unsupported snapshot version " + std::to_string(version));
  }
  const auto n = rd.get<std::int32_t>();
  const auto lmax = rd.get<std::int32_t>();
  const auto stations = rd.get<std::uint64_t>();
  const auto flags = rd.get<std::uint8_t>();
  GridPtr grid = make_grid(n, lmax);
  const std::size_t modes = grid->num_modes();
  if (stations > body / sizeof(double)) throw Error(ErrorCode::kSnapshotCorrupt, "station count");

  std::vector<double> radii(stations);
  for (auto& r : radii) r = rd.get<double>();
  std::vector<ModeCoeffs> dev, dev_r;
  for (std::size_t k = 0; k < stations; ++k) {
    dev.push_back(ModeCoeffs{grid, rd.vector(modes)});
    dev_r.push_back(ModeCoeffs{grid, rd.vector(modes)});
  }
  Snapshot snap{QuasiSphericalMetric(grid, radii, dev, dev_r), std::nullopt};
  if (flags & kHasPotential) {
    std::vector<ModeCoeffs> vd, vr, vrr;
    for (std::size_t k = 0; k < stations; ++k) {
      vd.push_back(ModeCoeffs{grid, rd.vector(modes)});
      vr.push_back(ModeCoeffs{grid, rd.vector(modes)});
      vrr.push_back(ModeCoeffs{grid, rd.vector(modes)});
    }
    snap.potential.emplace(grid, radii, vd, vr, vrr);
  }
  if (!rd.done()) throw Error(ErrorCode::kSnapshotCorrupt, "trailing bytes in snapshot");
  return snap;
}

void save_snapshot(const std::string& path, const QuasiSphericalMetric& g,
                   const PotentialField* v) {
  const std::vector<std::uint8_t> bytes = encode_snapshot(g, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Snapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

}  // namespace qsm
