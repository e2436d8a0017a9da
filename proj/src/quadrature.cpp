#include "qsm/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "qsm/error.hpp"

namespace qsm {

namespace {

// Recurrence coefficient beta_k of the monic Gegenbauer family with
// lambda = alpha + 1/2.
double gegenbauer_beta(int k, double alpha) {
  const double lam = alpha + 0.5;
  const double kk = k;
  return kk * (kk + 2.0 * lam - 1.0) / (4.0 * (kk + lam) * (kk + lam - 1.0));
}

}  // namespace

double gegenbauer_mass(double alpha) {
  return std::sqrt(M_PI) * std::tgamma(alpha + 1.0) / std::tgamma(alpha + 1.5);
}

void orthonormal_gegenbauer(int degree, double alpha, double x, std::vector<double>& p,
                            std::vector<double>& dp) {
  p.assign(degree + 1, 0.0);
  dp.assign(degree + 1, 0.0);
  p[0] = 1.0 / std::sqrt(gegenbauer_mass(alpha));
  if (degree == 0) return;
  double sb = std::sqrt(gegenbauer_beta(1, alpha));
  p[1] = x * p[0] / sb;
  dp[1] = p[0] / sb;
  for (int k = 1; k < degree; ++k) {
    const double sb_next = std::sqrt(gegenbauer_beta(k + 1, alpha));
    p[k + 1] = (x * p[k] - sb * p[k - 1]) / sb_next;
    dp[k + 1] = (p[k] + x * dp[k] - sb * dp[k - 1]) / sb_next;
    sb = sb_next;
  }
}

GaussRule gauss_gegenbauer(int npoints, double alpha) {
  if (npoints < 1 || alpha <= -1.0) {
    throw Error(ErrorCode::kInvalidArgument, "gauss rule needs npoints >= 1 and alpha > -1");
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(npoints);
  Eigen::VectorXd sub(std::max(npoints - 1, 0));
  for (int k = 1; k < npoints; ++k) sub[k - 1] = std::sqrt(gegenbauer_beta(k, alpha));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  GaussRule rule;
  rule.nodes.resize(npoints);
  rule.weights.resize(npoints);

  std::vector<double> p, dp;
  for (int i = 0; i < npoints; ++i) {
    double x = eig.eigenvalues()[i];
    for (int it = 0; it < 3; ++it) {
      orthonormal_gegenbauer(npoints, alpha, x, p, dp);
      x -= p[npoints] / dp[npoints];
    }
    orthonormal_gegenbauer(npoints - 1, alpha, x, p, dp);
    double s = 0.0;
    for (double v : p) s += v * v;
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / s;
  }
  // Symmetrize to remove the last bits of asymmetry from the eigen solve.
  for (int i = 0; i < npoints / 2; ++i) {
    const int j = npoints - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (npoints % 2 == 1) rule.nodes[npoints / 2] = 0.0;
  return rule;
}

void normalized_legendre(int lmax, double theta, std::vector<double>& p, std::vector<double>& dp) {
  const std::size_t count = std::size_t((lmax + 1) * (lmax + 2) / 2);
  p.assign(count, 0.0);
  dp.assign(count, 0.0);
  const double x = std::cos(theta);
  const double s = std::sin(theta);
  auto q = [](int l, int m) { return std::size_t(l * (l + 1) / 2 + m); };

  double pmm = 1.0 / std::sqrt(4.0 * M_PI);
  for (int m = 0; m <= lmax; ++m) {
    if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
    p[q(m, m)] = pmm;
    if (m + 1 <= lmax) p[q(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * x * pmm;
    for (int l = m + 2; l <= lmax; ++l) {
      const double ll = l, mm = m;
      const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
      const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) /
                                 (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
      p[q(l, m)] = a * (x * p[q(l - 1, m)] - b * p[q(l - 2, m)]);
    }
  }
  for (int l = 0; l <= lmax; ++l) {
    for (int m = 0; m <= l; ++m) {
      const double ll = l, mm = m;
      double prev = 0.0;
      if (l > m) {
        prev = std::sqrt((2.0 * ll + 1.0) * (ll * ll - mm * mm) / (2.0 * ll - 1.0)) *
               p[q(l - 1, m)];
      }
      dp[q(l, m)] = (ll * x * p[q(l, m)] - prev) / s;
    }
  }
}

}  // namespace qsm
