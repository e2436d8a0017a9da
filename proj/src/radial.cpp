#include "qsm/radial.hpp"

#include <algorithm>
#include <cmath>

#include "qsm/error.hpp"
#include "qsm/quadrature.hpp"

namespace qsm {

Eigen::MatrixXd fornberg_weights(double x0, const std::vector<double>& x, int max_deriv) {
  const int n = int(x.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(max_deriv + 1, n);
  if (n == 0) return c;
  double c1 = 1.0;
  double c4 = x[0] - x0;
  c(0, 0) = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, max_deriv);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) {
          c(k, i) = c1 * (k * c(k - 1, i - 1) - c5 * c(k, i - 1)) / c2;
        }
        c(0, i) = -c1 * c5 * c(0, i - 1) / c2;
      }
      for (int k = mn; k >= 1; --k) c(k, j) = (c4 * c(k, j) - k * c(k - 1, j)) / c3;
      c(0, j) = c4 * c(0, j) / c3;
    }
    c1 = c2;
  }
  return c;
}

namespace {

std::size_t window_start(std::size_t n, std::size_t center, std::size_t width) {
  if (width >= n) return 0;
  const std::size_t half = width / 2;
  std::size_t start = center > half ? center - half : 0;
  if (start + width > n) start = n - width;
  return start;
}

}  // namespace

std::vector<Stencil> derivative_stencils(const std::vector<double>& x, int deriv, int width) {
  const std::size_t n = x.size();
  const std::size_t w = std::min<std::size_t>(std::size_t(width), n);
  if (int(w) <= deriv) {
    throw Error(ErrorCode::kTooFewStations, "not enough stations for a derivative stencil");
  }
  std::vector<Stencil> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = window_start(n, i, w);
    std::vector<double> pts(x.begin() + s, x.begin() + s + w);
    Eigen::MatrixXd c = fornberg_weights(x[i], pts, deriv);
    out[i].start = s;
    out[i].weights.resize(w);
    for (std::size_t k = 0; k < w; ++k) out[i].weights[k] = c(deriv, k);
  }
  return out;
}

std::vector<double> apply_stencils(const std::vector<Stencil>& st, const std::vector<double>& f) {
  std::vector<double> out(st.size(), 0.0);
  for (std::size_t i = 0; i < st.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < st[i].weights.size(); ++k) {
      acc += st[i].weights[k] * f[st[i].start + k];
    }
    out[i] = acc;
  }
  return out;
}

Stencil interpolation_stencil(const std::vector<double>& x, double x0, int width) {
  const std::size_t n = x.size();
  if (n == 0) throw Error(ErrorCode::kTooFewStations, "interpolation on an empty grid");
  const std::size_t w = std::min<std::size_t>(std::size_t(width), n);
  // Balance the window around x0: w/2 nodes on each side where possible.
  const std::size_t right = std::size_t(std::upper_bound(x.begin(), x.end(), x0) - x.begin());
  std::size_t start = right > w / 2 ? right - w / 2 : 0;
  if (start + w > n) start = n - w;
  std::vector<double> pts(x.begin() + start, x.begin() + start + w);
  Eigen::MatrixXd c = fornberg_weights(x0, pts, 0);
  Stencil s;
  s.start = start;
  s.weights.resize(w);
  for (std::size_t k = 0; k < w; ++k) s.weights[k] = c(0, k);
  return s;
}

double lagrange_interpolate(const std::vector<double>& x, const std::vector<double>& f, double x0,
                            int width) {
  Stencil s = interpolation_stencil(x, x0, width);
  double acc = 0.0;
  for (std::size_t k = 0; k < s.weights.size(); ++k) acc += s.weights[k] * f[s.start + k];
  return acc;
}

Eigen::MatrixXd tail_integral_matrix(const std::vector<double>& x, int width) {
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorCode::kTooFewStations, "integration needs at least two nodes");
  const GaussRule gauss = gauss_gegenbauer(4, 0.0);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  Eigen::RowVectorXd interval(n);
  for (std::size_t i = n - 1; i-- > 0;) {
    interval.setZero();
    const double half = 0.5 * (x[i + 1] - x[i]);
    const double mid = 0.5 * (x[i + 1] + x[i]);
    for (std::size_t g = 0; g < gauss.nodes.size(); ++g) {
      const Stencil st = interpolation_stencil(x, mid + half * gauss.nodes[g], width);
      for (std::size_t k = 0; k < st.weights.size(); ++k) {
        interval(st.start + k) += half * gauss.weights[g] * st.weights[k];
      }
    }
    q.row(i) = q.row(i + 1) + interval;
  }
  return q;
}

std::vector<double> log_spaced(double a, double b, std::size_t count) {
  if (count < 2 || !(a > 0.0) || !(b > a)) {
    throw Error(ErrorCode::kInvalidArgument, "log spacing needs 0 < a < b and count >= 2");
  }
  std::vector<double> out(count);
  const double la = std::log(a), lb = std::log(b);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(la + (lb - la) * double(i) / double(count - 1));
  }
  out.front() = a;
  out.back() = b;
  return out;
}

std::vector<double> log_of(const std::vector<double>& r) {
  std::vector<double> s(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) s[i] = std::log(r[i]);
  return s;
}

}  // namespace qsm
