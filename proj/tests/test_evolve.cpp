#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "qsm/error.hpp"
#include "qsm/evolve.hpp"
#include "qsm/radial.hpp"

using namespace qsm;

namespace {

AngularField seeded(const GridPtr& g, double base, double eps) {
  AngularField u = AngularField::constant(g, base);
  for (std::size_t i = 0; i < g->num_nodes(); ++i) u.v(i) += eps * std::cos(g->polar(i));
  return u;
}

double schwarzschild_u(int n, double m, double r) {
  return 1.0 / std::sqrt(1.0 - 2.0 * m * std::pow(r, 2 - n));
}

}  // namespace

TEST(SymmetricMass, Examples) {
  EXPECT_NEAR(symmetric_mass(3, 2.0, std::sqrt(2.0)), 0.5, 1e-15);
  EXPECT_NEAR(symmetric_mass(3, 2.0, 0.8), -0.5625, 1e-15);
  EXPECT_THROW(symmetric_mass(3, 1.0, 0.0), Error);
}

TEST(SymmetricProfile, OdeMatchesClosedForm) {
  for (int n = 3; n <= 6; ++n) {
    const SymmetricProfile p = evolve_symmetric(1.3, n, log_spaced(1.0, 50.0, 30));
    EXPECT_LT(p.max_difference, 1e-10) << "n=" << n;
  }
  const SymmetricProfile neg = evolve_symmetric(0.8, 3, log_spaced(2.0, 50.0, 10));
  EXPECT_NEAR(neg.m0, -0.5625, 1e-15);
  EXPECT_LT(neg.max_difference, 1e-10);
}

TEST(Evolve, FlatIsFixedPoint) {
  GridPtr g = make_grid(3, 8);
  EvolveParams p;
  p.r_max = 50.0;
  p.snapshot_count = 5;
  const QuasiSphericalMetric met = evolve(AngularField::constant(g, 1.0), p);
  for (std::size_t k = 0; k < met.num_stations(); ++k) {
    EXPECT_EQ(met.lapse_deviation(k).c.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Evolve, ReproducesSchwarzschild) {
  GridPtr g = make_grid(3, 8);
  EvolveParams p;
  p.r0 = 2.0;
  p.r_max = 200.0;
  p.snapshot_count = 20;
  const QuasiSphericalMetric met = evolve(AngularField::constant(g, std::sqrt(2.0)), p);
  for (std::size_t k = 0; k < met.num_stations(); ++k) {
    const double exact = schwarzschild_u(3, 0.5, met.radius(k));
    EXPECT_LT((met.lapse(k).v.array() - exact).abs().maxCoeff(), 1e-10);
  }
  EXPECT_LT(residual_report(met).max_sup, 1e-10);
}

TEST(Evolve, HitsRequestedRadius) {
  // u(20) for the m0 = 1/2 solution started at r0 = 2.
  GridPtr g = make_grid(3, 6);
  EvolveParams p;
  p.r0 = 2.0;
  p.r_max = 20.0;
  p.snapshot_count = 2;
  const QuasiSphericalMetric met = evolve(AngularField::constant(g, std::sqrt(2.0)), p);
  EXPECT_NEAR(met.lapse(1).v(0), 1.0 / std::sqrt(0.95), 1e-10);
}

TEST(Evolve, HigherDimensionSchwarzschild) {
  for (int n : {4, 6, 8}) {
    GridPtr g = make_grid(n, 6);
    EvolveParams p;
    p.r0 = 1.5;
    p.r_max = 30.0;
    p.snapshot_count = 10;
    p.max_step = 0.01;
    const double m = 0.3;
    const QuasiSphericalMetric met = evolve(AngularField::constant(g, schwarzschild_u(n, m, 1.5)), p);
    for (std::size_t k = 0; k < met.num_stations(); ++k) {
      EXPECT_NEAR(met.lapse(k).v(0), schwarzschild_u(n, m, met.radius(k)), 1e-9) << "n=" << n;
    }
  }
}

TEST(Evolve, Rk4ConvergesAtFourthOrder) {
  GridPtr g = make_grid(3, 4);
  const double exact = schwarzschild_u(3, 0.5, 10.0);
  double err[2];
  for (int i = 0; i < 2; ++i) {
    EvolveParams p;
    p.r0 = 2.0;
    p.r_max = 10.0;
    p.snapshot_count = 2;
    p.max_step = i == 0 ? 0.04 : 0.02;
    p.safety = 0.9;
    const QuasiSphericalMetric met = evolve(AngularField::constant(g, std::sqrt(2.0)), p);
    err[i] = std::abs(met.lapse(1).v(0) - exact);
  }
  EXPECT_GT(err[0] / err[1], 13.0);
  EXPECT_LT(err[0] / err[1], 19.0);
}

TEST(Evolve, DipoleDecaysQuadratically) {
  // Near flat data, the l = 1 amplitude decays like r^{-2} in three dimensions.
  GridPtr g = make_grid(3, 8);
  EvolveParams p;
  p.r0 = 1.0;
  p.r_max = 400.0;
  p.snapshot_radii = {200.0, 400.0};
  const QuasiSphericalMetric met = evolve(seeded(g, 1.0, 1e-4), p);
  const std::size_t i10 = g->index(1, 0);
  const double ratio = met.lapse_deviation(1).c(i10) / met.lapse_deviation(2).c(i10);
  EXPECT_NEAR(ratio, 4.0, 0.04);
}

TEST(Evolve, ModeConfinement) {
  // Quadratic coupling only: the l = 2 amplitude scales with the square of the seed.
  GridPtr g = make_grid(3, 8);
  EvolveParams p;
  p.r0 = 1.0;
  p.r_max = 20.0;
  p.snapshot_count = 2;
  double a2[2];
  const double eps[2] = {1e-3, 2e-3};
  for (int i = 0; i < 2; ++i) {
    const QuasiSphericalMetric met = evolve(seeded(g, 1.0, eps[i]), p);
    a2[i] = met.lapse_deviation(1).c(g->index(2, 0));
    EXPECT_LT(std::abs(met.lapse_deviation(1).c(g->index(3, 0))), 1e-3 * std::abs(a2[i]) + 1e-14);
  }
  EXPECT_NEAR(a2[1] / a2[0], 4.0, 0.02);
}

TEST(Evolve, RotationEquivariance) {
  GridPtr g = make_grid(3, 8);
  std::mt19937_64 rng(11);
  ModeCoeffs c = random_bandlimited(g, 3, rng);
  c.c *= 0.05;
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(0.7, Eigen::Vector3d(1.0, 2.0, -0.5).normalized()).toRotationMatrix();
  EvolveParams p;
  p.r0 = 1.0;
  p.r_max = 5.0;
  p.snapshot_count = 2;
  const QuasiSphericalMetric a = evolve(rotate(c, rot), p);
  const QuasiSphericalMetric b = evolve(c, p);
  const ModeCoeffs rb = rotate(b.lapse_deviation(1), rot);
  EXPECT_LT((a.lapse_deviation(1).c - rb.c).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Evolve, ResidualDetectsCorruption) {
  GridPtr g = make_grid(3, 8);
  EvolveParams p;
  p.r0 = 1.0;
  p.r_max = 20.0;
  p.snapshot_count = 30;
  const QuasiSphericalMetric met = evolve(seeded(g, 1.2, 0.05), p);
  EXPECT_LT(residual_report(met).max_sup, 1e-8);

  std::vector<ModeCoeffs> dev;
  for (std::size_t k = 0; k < met.num_stations(); ++k) dev.push_back(met.lapse_deviation(k));
  dev[15].c(g->index(2, 1)) += 0.01;
  const QuasiSphericalMetric bad(g, met.radii(), dev);
  const ResidualReport rep = residual_report(bad);
  EXPECT_GT(rep.max_sup, 1e-3);
  EXPECT_GE(rep.worst_station, 13u);
  EXPECT_LE(rep.worst_station, 17u);
}

TEST(Evolve, Errors) {
  GridPtr g = make_grid(3, 6);
  EvolveParams p;
  p.r_max = 10.0;
  try {
    evolve(AngularField::constant(g, -0.1), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonPositiveLapse);
  }
  EvolveParams guard = p;
  guard.u_ceiling = 10.0;
  try {
    evolve(AngularField::constant(g, 15.0), guard);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBlowUpGuard);
  }
  EvolveParams bad = p;
  bad.r_max = 0.5;
  EXPECT_THROW(evolve(AngularField::constant(g, 1.0), bad), Error);
  EvolveParams under = p;
  under.min_step = 1.0;
  try {
    evolve(AngularField::constant(g, 1.0), under);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStepUnderflow);
  }
}

TEST(Evolve, LargeSymmetricDataDecays) {
  GridPtr g = make_grid(3, 6);
  EvolveParams p;
  p.r_max = 100.0;
  p.snapshot_count = 10;
  const QuasiSphericalMetric met = evolve(AngularField::constant(g, 15.0), p);
  for (std::size_t k = 1; k < met.num_stations(); ++k) {
    EXPECT_LT(met.lapse(k).v(0), met.lapse(k - 1).v(0));
  }
}
