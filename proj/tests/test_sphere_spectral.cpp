#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qsm/error.hpp"
#include "qsm/quadrature.hpp"
#include "qsm/sphere_spectral.hpp"

using namespace qsm;

namespace {

// Legendre oracle: cos^2 = 1/3 + (2/3) P_2, Y_00 = 1/sqrt(4 pi), Y_20 = sqrt(5/(4 pi)) P_2.
const double kCos2C00 = std::sqrt(4.0 * M_PI) / 3.0;
const double kCos2C20 = (2.0 / 3.0) * std::sqrt(4.0 * M_PI / 5.0);

AngularField cos_power(const GridPtr& g, int k) {
  AngularField f{g, Eigen::VectorXd(g->num_nodes())};
  for (std::size_t i = 0; i < g->num_nodes(); ++i) f.v[i] = std::pow(std::cos(g->polar(i)), k);
  return f;
}

void expect_error(ErrorCode code, auto&& fn) {
  try {
    fn();
    FAIL() << "expected error " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Quadrature, GaussLegendreIntegratesPolynomials) {
  GaussRule r = gauss_gegenbauer(10, 0.0);
  for (int k = 0; k < 20; ++k) {
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) acc += r.weights[i] * std::pow(r.nodes[i], k);
    const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
    EXPECT_NEAR(acc, exact, 1e-14) << k;
  }
}

TEST(Quadrature, ChebyshevSecondKindRule) {
  // alpha = 1/2 gives nodes cos(k pi / (N+1)) and weights pi/(N+1) sin^2.
  const int n = 7;
  GaussRule r = gauss_gegenbauer(n, 0.5);
  for (int i = 0; i < n; ++i) {
    const double th = (n - i) * M_PI / (n + 1);
    EXPECT_NEAR(r.nodes[i], std::cos(th), 1e-14);
    EXPECT_NEAR(r.weights[i], M_PI / (n + 1) * std::sin(th) * std::sin(th), 1e-14);
  }
}

TEST(MakeGrid, MeasureOfUnitSpheres) {
  EXPECT_NEAR(make_grid(3, 8)->measure(), 4.0 * M_PI, 4.0 * M_PI * 1e-12);
  EXPECT_NEAR(make_grid(4, 8)->measure(), 2.0 * M_PI * M_PI, 2.0 * M_PI * M_PI * 1e-12);
  for (int n = 3; n <= 8; ++n) {
    GridPtr g = make_grid(n, 6);
    EXPECT_NEAR(g->measure(), unit_sphere_area(n - 1), 1e-12 * unit_sphere_area(n - 1));
    EXPECT_GT(g->weights().minCoeff(), 0.0);
  }
}

TEST(MakeGrid, RejectsBadArguments) {
  expect_error(ErrorCode::kUnsupportedDimension, [] { make_grid(2, 8); });
  expect_error(ErrorCode::kUnsupportedDimension, [] { make_grid(9, 8); });
  expect_error(ErrorCode::kLmaxTooSmall, [] { make_grid(3, 3); });
}

TEST(MakeGrid, DealiasingMargin) {
  for (int n : {3, 5}) {
    GridPtr g = make_grid(n, 12);
    EXPECT_GE(2 * int(g->num_polar()), 3 * g->lmax());
    if (n == 3) {
      EXPECT_GE(2 * int(g->num_azimuth()), 3 * g->lmax());
    }
  }
}

TEST(MakeGrid, BasisOrthonormalUnderQuadrature) {
  for (int n = 3; n <= 8; ++n) {
    GridPtr g = make_grid(n, 8);
    const std::size_t nm = g->num_modes();
    Eigen::MatrixXd basis(g->num_nodes(), nm);
    for (std::size_t j = 0; j < nm; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(nm);
      e[j] = 1.0;
      basis.col(j) = g->synthesize(e, Component::kValue);
    }
    Eigen::MatrixXd gram = basis.transpose() * g->weights().asDiagonal() * basis;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(nm, nm)).cwiseAbs().maxCoeff(), 1e-12) << n;
  }
}

TEST(Analyze, ConstantHasOnlyMonopole) {
  GridPtr g = make_grid(3, 8);
  ModeCoeffs c = analyze(AngularField::constant(g, 1.0));
  EXPECT_NEAR(c.c[0], std::sqrt(4.0 * M_PI), 1e-12);
  EXPECT_LT(c.c.tail(c.c.size() - 1).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Analyze, AxisCoordinateIsPureFirstMode) {
  GridPtr g = make_grid(3, 8);
  ModeCoeffs c = analyze(coordinate_function(g, 3));
  const std::size_t j = g->index(1, 0);
  EXPECT_NEAR(c.c[j], std::sqrt(4.0 * M_PI / 3.0), 1e-12);
  c.c[j] = 0.0;
  EXPECT_LT(c.c.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Analyze, CosineSquaredLegendreOracle) {
  GridPtr g = make_grid(3, 8);
  ModeCoeffs c = analyze(cos_power(g, 2));
  EXPECT_NEAR(c.c[g->index(0, 0)], kCos2C00, 1e-12);
  EXPECT_NEAR(c.c[g->index(2, 0)], kCos2C20, 1e-12);
  c.c[g->index(0, 0)] = 0.0;
  c.c[g->index(2, 0)] = 0.0;
  EXPECT_LT(c.c.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Analyze, RejectsForeignGrid) {
  GridPtr a = make_grid(3, 8);
  GridPtr b = make_grid(3, 10);
  AngularField f = AngularField::constant(a, 1.0);
  expect_error(ErrorCode::kGridMismatch, [&] { b->analyze(f.v, Component::kValue); });
  expect_error(ErrorCode::kGridMismatch, [&] { (void)(f + AngularField::constant(b, 1.0)); });
}

TEST(Synthesize, ZeroAndMonopole) {
  GridPtr g = make_grid(3, 8);
  EXPECT_EQ(sup_norm(synthesize(ModeCoeffs::zeros(g))), 0.0);
  ModeCoeffs c = ModeCoeffs::zeros(g);
  c.c[0] = std::sqrt(4.0 * M_PI);
  EXPECT_LT((synthesize(c).v.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Synthesize, RoundTripRandomSeeds) {
  for (int n : {3, 4, 6, 8}) {
    GridPtr g = make_grid(n, 10);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      ModeCoeffs c = random_bandlimited(g, g->lmax(), rng);
      ModeCoeffs back = analyze(synthesize(c));
      ASSERT_LT((back.c - c.c).cwiseAbs().maxCoeff(), 1e-12) << n << " " << seed;
      AngularField f = synthesize(c);
      AngularField f2 = synthesize(analyze(f));
      ASSERT_LT((f2.v - f.v).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, sup_norm(f)));
    }
  }
}

TEST(Synthesize, ParsevalRandomSeeds) {
  for (int n : {3, 5}) {
    GridPtr g = make_grid(n, 9);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      ModeCoeffs c = random_bandlimited(g, g->lmax(), rng);
      const double energy = c.c.squaredNorm();
      const double integral = std::pow(l2_norm(synthesize(c)), 2);
      ASSERT_NEAR(integral, energy, 1e-10 * energy);
    }
  }
}

TEST(Synthesize, PointEvaluationMatchesNodes) {
  for (int n : {3, 4}) {
    GridPtr g = make_grid(n, 7);
    std::mt19937_64 rng(5);
    ModeCoeffs c = random_bandlimited(g, 7, rng);
    AngularField f = synthesize(c);
    for (std::size_t k = 0; k < g->num_nodes(); k += 17) {
      EXPECT_NEAR(g->evaluate(c.c, g->polar(k), g->azimuth(k)), f.v[k], 1e-12);
    }
  }
}

TEST(LaplaceBeltrami, Eigenvalues) {
  GridPtr g3 = make_grid(3, 8);
  ModeCoeffs c = ModeCoeffs::zeros(g3);
  c.c[g3->index(2, 1)] = 0.7;
  EXPECT_NEAR(laplace_beltrami(c).c[g3->index(2, 1)], -6.0 * 0.7, 1e-15);

  GridPtr g5 = make_grid(5, 8);
  ModeCoeffs d = ModeCoeffs::zeros(g5);
  d.c[g5->index(1)] = 1.3;
  EXPECT_NEAR(laplace_beltrami(d).c[g5->index(1)], -4.0 * 1.3, 1e-15);

  EXPECT_LT(coeff_norm(laplace_beltrami(analyze(AngularField::constant(g3, 2.0)))), 1e-11);
}

TEST(LaplaceBeltrami, EigenIdentityAllModesAllDimensions) {
  for (int n = 3; n <= 8; ++n) {
    GridPtr g = make_grid(n, 8);
    for (std::size_t j = 0; j < g->num_modes(); ++j) {
      ModeCoeffs c = ModeCoeffs::zeros(g);
      c.c[j] = 1.0;
      // Check through the Hessian trace, which is computed independently.
      AngularField tr = covariant_hessian(c).trace();
      AngularField expect = -g->eigenvalue(g->degree(j)) * synthesize(c);
      ASSERT_LT((tr.v - expect.v).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + g->eigenvalue(g->degree(j))))
          << n << " " << j;
    }
  }
}

TEST(LaplaceBeltrami, AgreesWithFiniteDifferenceOracle) {
  GridPtr g = make_grid(3, 4);
  const double h = 1e-3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    ModeCoeffs c = random_bandlimited(g, 4, rng);
    ModeCoeffs lap = laplace_beltrami(c);
    for (double th = 0.3; th < 3.0; th += 0.37) {
      for (double ph = 0.1; ph < 6.2; ph += 0.71) {
        auto f = [&](double t, double p) { return g->evaluate(c.c, t, p); };
        const double ftt = (f(th + h, ph) - 2 * f(th, ph) + f(th - h, ph)) / (h * h);
        const double ft = (f(th + h, ph) - f(th - h, ph)) / (2 * h);
        const double fpp = (f(th, ph + h) - 2 * f(th, ph) + f(th, ph - h)) / (h * h);
        const double fd = ftt + std::cos(th) / std::sin(th) * ft + fpp / std::pow(std::sin(th), 2);
        EXPECT_NEAR(g->evaluate(lap.c, th, ph), fd, 1e-4);
      }
    }
  }
}

TEST(Project, IdempotenceAndComplement) {
  GridPtr g = make_grid(3, 8);
  std::mt19937_64 rng(11);
  ModeCoeffs low = random_bandlimited(g, 1, rng);
  EXPECT_EQ((project(low, {ModeSelect::kAtMost, 1}).c - low.c).norm(), 0.0);

  ModeCoeffs f = analyze(cos_power(g, 2));
  ModeCoeffs p2 = project(f, {ModeSelect::kEqual, 2});
  EXPECT_NEAR(p2.c[g->index(2, 0)], kCos2C20, 1e-12);
  EXPECT_NEAR(p2.c.norm(), kCos2C20, 1e-12);

  EXPECT_EQ(coeff_norm(project(f, {ModeSelect::kAtLeast, g->lmax() + 1})), 0.0);

  ModeCoeffs r = random_bandlimited(g, 8, rng);
  ModeCoeffs sum = project(r, {ModeSelect::kAtMost, 3}) + project(r, {ModeSelect::kAtLeast, 4});
  EXPECT_EQ((sum.c - r.c).norm(), 0.0);
}

TEST(GradientInner, ConstantGivesZero) {
  GridPtr g = make_grid(3, 8);
  AngularField one = AngularField::constant(g, 3.0);
  EXPECT_LT(sup_norm(gradient_inner(one, one)), 1e-13);
}

TEST(GradientInner, AxisCoordinateOracle) {
  GridPtr g = make_grid(3, 8);
  AngularField x3 = coordinate_function(g, 3);
  ModeCoeffs gi = project(analyze(gradient_inner(x3, x3)), {ModeSelect::kEqual, 2});
  // -(X3^2)_{l=2} = -(2/3) P_2.
  EXPECT_NEAR(gi.c[g->index(2, 0)], -kCos2C20, 1e-12);
  EXPECT_NEAR(gi.c.norm(), kCos2C20, 1e-12);
}

TEST(GradientInner, FirstModeProductIdentity) {
  for (int n = 3; n <= 8; ++n) {
    GridPtr g = make_grid(n, 6);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(1000 * n + seed);
      AngularField f = synthesize(random_bandlimited(g, 1, rng));
      AngularField h = synthesize(random_bandlimited(g, 1, rng));
      ModeCoeffs lhs = project(analyze(gradient_inner(f, h)), {ModeSelect::kEqual, 2});
      ModeCoeffs rhs = project(analyze(f * h), {ModeSelect::kEqual, 2});
      ASSERT_LT(coeff_norm(lhs + rhs), 1e-10) << n << " " << seed;
    }
  }
}

TEST(GradientInner, RejectsUnresolvedInput) {
  GridPtr g = make_grid(3, 4);
  AngularField f = cos_power(g, 9);
  expect_error(ErrorCode::kInsufficientDealiasing, [&] { gradient_inner(f, f); });
}

TEST(CovariantHessian, FirstEigenfunctionIsPureTrace) {
  GridPtr g = make_grid(3, 8);
  AngularField x3 = coordinate_function(g, 3);
  SymTensorField h = covariant_hessian(x3);
  EXPECT_LT((h.pp + x3.v).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((h.aa + x3.v).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(h.pa.cwiseAbs().maxCoeff(), 1e-10);
  for (int i = 1; i <= 2; ++i) {
    AngularField xi = coordinate_function(g, i);
    SymTensorField hi = covariant_hessian(xi);
    EXPECT_LT((hi.pp + xi.v).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((hi.aa + xi.v).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(hi.pa.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(CovariantHessian, ConstantGivesZero) {
  GridPtr g = make_grid(4, 8);
  EXPECT_LT(l2_norm(covariant_hessian(AngularField::constant(g, 2.5))), 1e-12);
}

TEST(CovariantHessian, SecondModeHasTracelessPart) {
  // Y_20 = sqrt(5/(4 pi)) P_2 gives traceless norm^2 = (1/2)(f_tt - cot f_t)^2
  // = (9/2) (5/(4 pi)) sin^4; with int sin^4 = 32 pi / 15 the L2 norm is sqrt(12).
  GridPtr g = make_grid(3, 8);
  ModeCoeffs c = ModeCoeffs::zeros(g);
  c.c[g->index(2, 0)] = 1.0;
  const double norm = l2_norm(covariant_hessian(c).traceless_norm());
  EXPECT_NEAR(norm, std::sqrt(12.0), 1e-10);
  EXPECT_GT(norm, 0.1);
}

TEST(CovariantHessian, TraceCharacterizationRandomSeeds) {
  for (int n : {3, 4, 7}) {
    GridPtr g = make_grid(n, 8);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed + 17 * n);
      ModeCoeffs low = random_bandlimited(g, 1, rng);
      SymTensorField h = covariant_hessian(low);
      ASSERT_LT(l2_norm(h.traceless_norm()), 1e-10);
      ASSERT_LT((h.trace().v - synthesize(laplace_beltrami(low)).v).cwiseAbs().maxCoeff(), 1e-10);
      ModeCoeffs high = random_bandlimited(g, 4, rng);
      const double hi_part = coeff_norm(project(high, {ModeSelect::kAtLeast, 2}));
      ASSERT_GT(l2_norm(covariant_hessian(high).traceless_norm()), 0.1 * hi_part);
    }
  }
}

TEST(Integrate, BasicIntegrals) {
  EXPECT_NEAR(integrate(AngularField::constant(make_grid(3, 8), 1.0)), 4.0 * M_PI, 1e-12);
  EXPECT_NEAR(integrate(AngularField::constant(make_grid(4, 8), 1.0)), 2.0 * M_PI * M_PI, 1e-12);
  GridPtr g = make_grid(3, 8);
  EXPECT_NEAR(integrate(coordinate_function(g, 3)), 0.0, 1e-14);
}

TEST(Potentials, GradientInversionIsExact) {
  for (int n : {3, 5}) {
    GridPtr g = make_grid(n, 10);
    std::mt19937_64 rng(3);
    ModeCoeffs f = random_bandlimited(g, 8, rng);
    f.c[0] = 0.0;
    ModeCoeffs back = gradient_potential(gradient(f));
    EXPECT_LT((back.c - f.c).cwiseAbs().maxCoeff(), 1e-10);
    // div Hess f = grad (Laplace f + (n-2) f).
    ModeCoeffs g2 = divergence_potential(covariant_hessian(f));
    ModeCoeffs expect = laplace_beltrami(f) + double(n - 2) * f;
    EXPECT_LT((g2.c - expect.c).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rotate, PreservesDegreeAndNorm) {
  GridPtr g = make_grid(3, 8);
  std::mt19937_64 rng(21);
  ModeCoeffs c = random_bandlimited(g, 8, rng);
  Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  ModeCoeffs rc = rotate(c, rot);
  for (int l = 0; l <= 8; ++l) {
    EXPECT_NEAR(coeff_norm(project(rc, {ModeSelect::kEqual, l})),
                coeff_norm(project(c, {ModeSelect::kEqual, l})), 1e-11);
  }
  ModeCoeffs back = rotate(rc, rot.transpose());
  EXPECT_LT((back.c - c.c).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(QuadraticGram, RankIsOneShortOfFull) {
  for (int n = 3; n <= 8; ++n) {
    Eigen::MatrixXd gram = quadratic_gram(n);
    const int np = n * (n + 1) / 2;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    EXPECT_EQ(lu.rank(), np - 1) << n;
  }
}

TEST(QuadraticGram, SquareOfAffineFirstModeForcesZero) {
  // (a0 + a.X)^2_{l=2} = sum a_i a_j (X^i X^j - delta/n). Its norm is the
  // quadratic form a a^T : G : a a^T, which must vanish only at a = 0.
  for (int n = 3; n <= 8; ++n) {
    Eigen::MatrixXd gram = quadratic_gram(n);
    std::mt19937_64 rng(99 + n);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd a(n);
      for (int i = 0; i < n; ++i) a[i] = normal(rng);
      Eigen::VectorXd coeffs(n * (n + 1) / 2);
      int k = 0;
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) coeffs[k++] = (i == j ? 1.0 : 2.0) * a[i] * a[j];
      }
      const double q = coeffs.dot(gram * coeffs);
      ASSERT_GT(q, 1e-3 * std::pow(a.squaredNorm(), 2)) << n;
    }
    // Least-squares: the Gram null vector is the identity pattern only.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    Eigen::VectorXd null = eig.eigenvectors().col(0);
    int k = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j, ++k) {
        if (i != j) EXPECT_NEAR(null[k], 0.0, 1e-10);
        else EXPECT_NEAR(std::abs(null[k]), 1.0 / std::sqrt(double(n)), 1e-10);
      }
    }
  }
}
