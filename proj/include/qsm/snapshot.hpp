#pragma once

// Binary snapshot of a quasi-spherical metric and an optional potential.
//
// Layout (little-endian): magic "QSMSNAP\0", u32 version, i32 n, i32 lmax,
// u64 stations, u8 flags (bit 0: potential present), radii, then per station
// the coefficients of u - 1 and u_r, then optionally V - 1, V_r and V_rr per
// station, and a trailing u32 CRC32 of every preceding byte.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsm/metric.hpp"

namespace qsm {

constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  QuasiSphericalMetric metric;
  std::optional<PotentialField> potential;
};

std::vector<std::uint8_t> encode_snapshot(const QuasiSphericalMetric& g,
                                          const PotentialField* v = nullptr);
Snapshot decode_snapshot(const std::vector<std::uint8_t>& bytes);

void save_snapshot(const std::string& path, const QuasiSphericalMetric& g,
                   const PotentialField* v = nullptr);
Snapshot load_snapshot(const std::string& path);

}  // namespace qsm
