#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

namespace sphmlmc {

/// Gauss-Legendre (in cos theta) x uniform (in phi) tensor grid on the sphere.
///
/// Ring i sits at colatitude theta_i with cos(theta_i) a Gauss-Legendre node;
/// node j of a ring sits at phi_j = 2 pi j / n_phi. The weight of node (i, j)
/// is (2 pi / n_phi) w_i, so the weights sum to 4 pi.
class QuadGrid {
 public:
  QuadGrid() = default;

  QuadGrid(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 1 || n_phi < 1) throw std::invalid_argument("QuadGrid: node counts must be >= 1");
    cos_.resize(n_theta);
    sin_.resize(n_theta);
    theta_.resize(n_theta);
    w_.resize(n_theta);

    // Boost returns the non-negative zeros of P_n in ascending order.
    const auto zeros = boost::math::legendre_p_zeros<double>(n_theta);
    std::vector<double> x;
    x.reserve(n_theta);
    for (auto it = zeros.rbegin(); it != zeros.rend(); ++it) x.push_back(*it);
    for (double z : zeros) {
      if (z == 0.0) continue;
      x.push_back(-z);
    }
    // x now runs from near +1 down to near -1, i.e. theta ascending.
    for (int i = 0; i < n_theta; ++i) {
      const double xi = x[i];
      const double dp = boost::math::legendre_p_prime(n_theta, xi);
      cos_[i] = xi;
      sin_[i] = std::sqrt((1.0 - xi) * (1.0 + xi));
      theta_[i] = std::atan2(sin_[i], xi);
      w_[i] = 2.0 / ((1.0 - xi) * (1.0 + xi) * dp * dp);
    }

    phi_.resize(n_phi);
    for (int j = 0; j < n_phi; ++j) phi_[j] = 2.0 * std::numbers::pi * j / n_phi;
  }

  int n_theta() const noexcept { return n_theta_; }
  int n_phi() const noexcept { return n_phi_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(n_theta_) * n_phi_; }

  double theta(int i) const { return theta_[i]; }
  double cos_theta(int i) const { return cos_[i]; }
  double sin_theta(int i) const { return sin_[i]; }
  double gl_weight(int i) const { return w_[i]; }
  double phi(int j) const { return phi_[j]; }
  double phi_step() const { return 2.0 * std::numbers::pi / n_phi_; }
  double weight(int i, int /*j*/) const { return phi_step() * w_[i]; }

  /// True if forward transforms up to degree L are exact on this grid.
  bool resolves(int L) const noexcept { return n_theta_ >= L + 1 && n_phi_ >= 2 * L + 1; }

  /// Degree-L grid with the minimal exact resolution.
  static QuadGrid for_degree(int L) { return QuadGrid(L + 1, 2 * L + 1); }

 private:
  int n_theta_ = 0;
  int n_phi_ = 0;
  std::vector<double> theta_, cos_, sin_, w_, phi_;
};

inline QuadGrid make_quad_grid(int n_theta, int n_phi) { return QuadGrid(n_theta, n_phi); }

/// Real samples of a field on a QuadGrid, theta-major (index i * n_phi + j).
struct GridField {
  QuadGrid grid;
  std::vector<double> values;

  GridField() = default;
  explicit GridField(QuadGrid g) : grid(std::move(g)), values(grid.size(), 0.0) {}
  GridField(QuadGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("GridField: value count does not match grid");
  }

  double& operator()(int i, int j) { return values[static_cast<std::size_t>(i) * grid.n_phi() + j]; }
  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.n_phi() + j]; }

  double integrate() const {
    double total = 0.0;
    for (int i = 0; i < grid.n_theta(); ++i) {
      double ring = 0.0;
      for (int j = 0; j < grid.n_phi(); ++j) ring += (*this)(i, j);
      total += grid.weight(i, 0) * ring;
    }
    return total;
  }
};

/// Samples a function f(theta, phi) on every grid node.
template <class F>
GridField sample_on_grid(const QuadGrid& grid, F&& f) {
  GridField g(grid);
  for (int i = 0; i < grid.n_theta(); ++i)
    for (int j = 0; j < grid.n_phi(); ++j) g(i, j) = f(grid.theta(i), grid.phi(j));
  return g;
}

/// CSV rows "theta,phi,value".
inline void write_grid_csv(std::ostream& os, const GridField& f) {
  os << "theta,phi,value\n";
  char buf[96];
  for (int i = 0; i < f.grid.n_theta(); ++i)
    for (int j = 0; j < f.grid.n_phi(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", f.grid.theta(i), f.grid.phi(j), f(i, j));
      os << buf;
    }
}

}  // namespace sphmlmc
