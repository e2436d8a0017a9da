#pragma once

// One-dimensional utilities on nonuniform radial grids.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace qsm {

// Fornberg finite-difference weights. Row d holds the weights of the d-th
// derivative at x0 for the nodes x.
Eigen::MatrixXd fornberg_weights(double x0, const std::vector<double>& x, int max_deriv);

struct Stencil {
  std::size_t start = 0;
  std::vector<double> weights;
};

// Stencils of `width` consecutive nodes for the deriv-th derivative at every
// node, centered where possible and shifted at the ends.
std::vector<Stencil> derivative_stencils(const std::vector<double>& x, int deriv, int width);

// Applies the stencils to samples f (one value per node).
std::vector<double> apply_stencils(const std::vector<Stencil>& st, const std::vector<double>& f);

// Lagrange interpolation through the `width` nodes nearest to x0.
double lagrange_interpolate(const std::vector<double>& x, const std::vector<double>& f, double x0,
                            int width);

// Interpolation weights (start index and weights) for the same rule.
Stencil interpolation_stencil(const std::vector<double>& x, double x0, int width);

// Matrix Q with (Q f)_k = int_{x_k}^{x_last} f dx, from local Lagrange
// interpolants of `width` nodes integrated by 4-point Gauss on each interval.
Eigen::MatrixXd tail_integral_matrix(const std::vector<double>& x, int width = 6);

// Logarithmically spaced points from a to b inclusive.
std::vector<double> log_spaced(double a, double b, std::size_t count);

std::vector<double> log_of(const std::vector<double>& r);

}  // namespace qsm
