#include <gtest/gtest.h>
#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "qsm/error.hpp"
#include "qsm/radial.hpp"
#include "qsm/snapshot.hpp"

using namespace qsm;

namespace {

QuasiSphericalMetric random_metric(int n, int lmax, std::size_t stations, std::mt19937_64& rng) {
  GridPtr g = make_grid(n, lmax);
  const std::vector<double> radii = log_spaced(1.5, 40.0, stations);
  std::vector<ModeCoeffs> dev, dev_r;
  for (std::size_t k = 0; k < stations; ++k) {
    dev.push_back(1e-3 * random_bandlimited(g, lmax, rng));
    dev_r.push_back(1e-4 * random_bandlimited(g, lmax, rng));
  }
  return QuasiSphericalMetric(g, radii, dev, dev_r);
}

void expect_code(ErrorCode code, const std::vector<std::uint8_t>& bytes) {
  try {
    decode_snapshot(bytes);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

void reseal(std::vector<std::uint8_t>& bytes) {
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t crc = std::uint32_t(crc32(crc32(0L, Z_NULL, 0), bytes.data(), uInt(body)));
  std::memcpy(bytes.data() + body, &crc, 4);
}

}  // namespace

TEST(Snapshot, RoundTripIsBitExact) {
  std::mt19937_64 rng(41);
  for (int n : {3, 4, 7}) {
    const QuasiSphericalMetric g = random_metric(n, 6, 12, rng);
    const Snapshot back = decode_snapshot(encode_snapshot(g));
    ASSERT_FALSE(back.potential.has_value());
    EXPECT_EQ(back.metric.radii(), g.radii());
    for (std::size_t k = 0; k < g.num_stations(); ++k) {
      EXPECT_EQ(back.metric.lapse_deviation(k).c, g.lapse_deviation(k).c);
      EXPECT_EQ(back.metric.lapse_r_coeffs(k).c, g.lapse_r_coeffs(k).c);
    }
    EXPECT_EQ(encode_snapshot(back.metric), encode_snapshot(g));
  }
}

TEST(Snapshot, PotentialBlockRoundTrip) {
  const StaticPair p = schwarzschild(make_grid(4, 6), 0.7, log_spaced(2.0, 30.0, 20));
  const Snapshot back = decode_snapshot(encode_snapshot(p.metric, &p.potential));
  ASSERT_TRUE(back.potential.has_value());
  for (std::size_t k = 0; k < p.potential.num_stations(); ++k) {
    EXPECT_EQ(back.potential->deviation(k).c, p.potential.deviation(k).c);
    EXPECT_EQ(back.potential->radial_coeffs(k).c, p.potential.radial_coeffs(k).c);
    EXPECT_EQ(back.potential->radial2_coeffs(k).c, p.potential.radial2_coeffs(k).c);
  }
}

TEST(Snapshot, FileRoundTrip) {
  std::mt19937_64 rng(2);
  const QuasiSphericalMetric g = random_metric(3, 5, 6, rng);
  const auto path = std::filesystem::temp_directory_path() / "qsm_snapshot_test.qsm";
  save_snapshot(path.string(), g);
  const Snapshot back = load_snapshot(path.string());
  EXPECT_EQ(encode_snapshot(back.metric), encode_snapshot(g));
  std::filesystem::remove(path);
}

TEST(Snapshot, DetectsCorruption) {
  std::mt19937_64 rng(3);
  const std::vector<std::uint8_t> good = encode_snapshot(random_metric(3, 4, 5, rng));

  std::vector<std::uint8_t> truncated(good.begin(), good.end() - 9);
  expect_code(ErrorCode::kSnapshotCorrupt, truncated);
  expect_code(ErrorCode::kSnapshotCorrupt, {});

  for (std::size_t pos : {std::size_t(0), std::size_t(40), good.size() / 2, good.size() - 1}) {
    std::vector<std::uint8_t> flipped = good;
    flipped[pos] ^= 0x10;
    expect_code(ErrorCode::kSnapshotCorrupt, flipped);
  }

  std::vector<std::uint8_t> version = good;
  version[8] = 9;
  reseal(version);
  expect_code(ErrorCode::kSnapshotCorrupt, version);

  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  reseal(magic);
  expect_code(ErrorCode::kSnapshotCorrupt, magic);
}

TEST(Snapshot, MissingFile) {
  try {
    load_snapshot("/nonexistent/dir/none.qsm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}
