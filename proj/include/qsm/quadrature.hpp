#pragma once

#include <vector>

namespace qsm {

// Gauss rule on [-1, 1] for the weight (1 - x^2)^alpha, alpha > -1.
struct GaussRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;  // positive, sum to the weight's total mass
};

GaussRule gauss_gegenbauer(int npoints, double alpha);

// Total mass of (1 - x^2)^alpha on [-1, 1].
double gegenbauer_mass(double alpha);

// Polynomials orthonormal for (1 - x^2)^alpha on [-1, 1] and their x-derivatives,
// degrees 0..degree, evaluated at x. Both outputs are resized to degree + 1.
void orthonormal_gegenbauer(int degree, double alpha, double x, std::vector<double>& p,
                            std::vector<double>& dp);

// Fully normalized associated Legendre functions on S^2 without the
// Condon-Shortley phase: 2*pi * int P_lm^2 dx = 1. Output packed by
// l*(l+1)/2 + m for 0 <= m <= l <= lmax. dp holds d/dtheta.
void normalized_legendre(int lmax, double theta, std::vector<double>& p, std::vector<double>& dp);

}  // namespace qsm
