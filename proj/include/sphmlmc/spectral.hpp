#pragma once

// Spectral Galerkin solver for -div(a grad u) = f on S^2 in the space of
// band-limited zero-mean functions H_{1:L}.
//
// The unknown is expanded in the real orthonormal basis without degree 0, so
// index I of the linear system is real_index(l, m, part) - 1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sphmlmc/errors.hpp"
#include "sphmlmc/grf.hpp"
#include "sphmlmc/legendre.hpp"
#include "sphmlmc/quad_grid.hpp"
#include "sphmlmc/sh_coefficients.hpp"
#include "sphmlmc/transform.hpp"

namespace sphmlmc {

struct SpectralSystem {
  int Lu = 0;
  int La = 0;
  Eigen::MatrixXd S;  // full symmetric storage
  Eigen::VectorXd b;
  QuadGrid grid;
  double a_min = 0.0;
  double a_max = 0.0;
  double f_dual_norm = 0.0;  // ||f||_{H^-1}

  Eigen::Index dimension() const noexcept { return S.rows(); }
};

struct SpectralSolution {
  int La = 0;
  int Lu = 0;
  Eigen::VectorXd coeffs;  // real basis, degrees 1..Lu
  SHCoefficients u;
  double residual = 0.0;  // ||S u - b|| / ||b||
  double h1_norm = 0.0;   // ||grad u||_{L^2}
  double apriori_bound = 0.0;
  bool apriori_ok = true;

  double bound_slack() const noexcept { return apriori_bound - h1_norm; }
};

/// Number of unknowns (Lu + 1)^2 - 1.
constexpr Eigen::Index spectral_dimension(int Lu) noexcept {
  return static_cast<Eigen::Index>(SHCoefficients::real_dimension(Lu)) - 1;
}

/// Default assembly grid: n_theta = (2 Lu + 2 La + 2) * oversample, n_phi = 2 n_theta.
inline QuadGrid spectral_quad_grid(int Lu, int La, double oversample = 1.0) {
  if (!(oversample >= 1.0)) throw std::invalid_argument("spectral_quad_grid: oversample must be >= 1");
  const int n_theta = static_cast<int>(std::ceil((2.0 * Lu + 2.0 * La + 2.0) * oversample));
  return QuadGrid(n_theta, 2 * n_theta);
}

namespace detail {
/// Weighted gradient table for one ring: column (2 j) holds the theta components
/// at node j, column (2 j + 1) the phi components, each scaled by sqrt(weight).
inline void ring_gradients(const LegendreValues& v, const QuadGrid& g, const double* sqrt_w,
                           const RingTrig& trig, Eigen::MatrixXd& U) {
  const int L = v.L;
  const int n_phi = g.n_phi();
  const double rt2 = std::numbers::sqrt2;
  U.setZero(spectral_dimension(L), 2 * n_phi);
  for (int j = 0; j < n_phi; ++j) {
    const double w = sqrt_w[j];
    double* gt = U.col(2 * j).data();
    double* gp = U.col(2 * j + 1).data();
    for (int l = 1; l <= L; ++l) {
      gt[real_index(l, 0) - 1] = w * v.dtheta(l, 0);
      for (int m = 1; m <= l; ++m) {
        const double c = trig.c[m * n_phi + j];
        const double s = trig.s[m * n_phi + j];
        const double dp = rt2 * w * v.dtheta(l, m);
        const double q = rt2 * w * m * v.over_sin(l, m);
        const std::size_t ic = real_index(l, m, RealPart::cosine) - 1;
        const std::size_t is = real_index(l, m, RealPart::sine) - 1;
        gt[ic] = dp * c;
        gp[ic] = -q * s;
        gt[is] = dp * s;
        gp[is] = q * c;
      }
    }
  }
}
}  // namespace detail

/// S_IJ = sum over nodes of w a grad(Ytilde_I) . grad(Ytilde_J), on the grid of `a`.
inline SpectralSystem assemble_spectral(const FieldSample& a, int Lu) {
  if (Lu < 1) throw std::invalid_argument("assemble_spectral: Lu must be >= 1");
  const QuadGrid& g = a.field.grid;
  const int La = a.coeffs.band_limit();
  if (!g.resolves(2 * Lu + La))
    throw ResolutionError("assemble_spectral: grid does not resolve degree 2 Lu + La = " + std::to_string(2 * Lu + La));

  SpectralSystem sys;
  sys.Lu = Lu;
  sys.La = La;
  sys.grid = g;
  sys.a_min = std::numeric_limits<double>::infinity();
  sys.a_max = 0.0;
  for (double v : a.field.values) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("assemble_spectral: coefficient must be positive and finite at every node");
    sys.a_min = std::min(sys.a_min, v);
    sys.a_max = std::max(sys.a_max, v);
  }

  const Eigen::Index N = spectral_dimension(Lu);
  sys.S = Eigen::MatrixXd::Zero(N, N);
  const LegendreRecurrence rec(Lu);
  const detail::RingTrig trig(Lu, g.n_phi());
  LegendreValues v;
  Eigen::MatrixXd U;
  std::vector<double> sqrt_w(g.n_phi());
  for (int i = 0; i < g.n_theta(); ++i) {
    legendre_values(rec, g.cos_theta(i), g.sin_theta(i), v);
    for (int j = 0; j < g.n_phi(); ++j) sqrt_w[j] = std::sqrt(g.weight(i, j) * a.field(i, j));
    detail::ring_gradients(v, g, sqrt_w.data(), trig, U);
    sys.S.selfadjointView<Eigen::Lower>().rankUpdate(U);
  }
  sys.S.triangularView<Eigen::StrictlyUpper>() = sys.S.transpose();
  sys.b = Eigen::VectorXd::Zero(N);
  return sys;
}

/// Real-basis coefficients of f on degrees 1..Lu.
inline Eigen::VectorXd assemble_rhs(const SHCoefficients& f, int Lu) {
  if (std::abs(f(0, 0)) > 1e-12)
    throw CompatibilityError("assemble_rhs: f(1) != 0 (|c_00| = " + std::to_string(std::abs(f(0, 0))) + ")");
  const SHCoefficients fu = f.band_limit() >= Lu ? project(f, Lu) : extend(f, Lu);
  return to_real_basis(fu, 1);
}

inline SpectralSystem assemble_spectral(const FieldSample& a, int Lu, const SHCoefficients& f) {
  SpectralSystem sys = assemble_spectral(a, Lu);
  sys.b = assemble_rhs(f, Lu);
  sys.f_dual_norm = sobolev_norm(f, -1.0);
  return sys;
}

/// Relative Frobenius change of S when the same coefficient draw is assembled on
/// a grid with twice the resolution in each direction.
inline double spectral_refinement_drift(const FieldSample& a, int Lu) {
  const SpectralSystem coarse = assemble_spectral(a, Lu);
  const QuadGrid fine(2 * a.field.grid.n_theta(), 2 * a.field.grid.n_phi());
  const SpectralSystem refined = assemble_spectral(synthesize_lognormal(a.coeffs, fine), Lu);
  return (refined.S - coarse.S).norm() / refined.S.norm();
}

namespace detail {
/// Index of the first non-positive pivot of an unpivoted Cholesky sweep, or npos.
inline std::size_t first_bad_pivot(const Eigen::MatrixXd& S) {
  Eigen::MatrixXd A = S;
  const Eigen::Index n = A.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = A(k, k) - A.row(k).head(k).squaredNorm();
    if (!(d > 0.0)) return static_cast<std::size_t>(k);
    A(k, k) = std::sqrt(d);
    for (Eigen::Index i = k + 1; i < n; ++i) A(i, k) = (A(i, k) - A.row(i).head(k).dot(A.row(k).head(k))) / A(k, k);
  }
  return SolverError::npos;
}
}  // namespace detail

inline double h1_seminorm(const Eigen::VectorXd& r, int Lu) {
  double s = 0.0;
  for (int l = 1; l <= Lu; ++l) {
    const double ev = l * (l + 1.0);
    for (std::size_t k = real_index(l, 0); k < real_index(l + 1, 0); ++k) s += ev * r[k - 1] * r[k - 1];
  }
  return std::sqrt(s);
}

/// Dense Cholesky solve with one step of iterative refinement.
inline SpectralSolution solve_spectral(const SpectralSystem& sys) {
  SpectralSolution sol;
  sol.La = sys.La;
  sol.Lu = sys.Lu;
  const Eigen::LLT<Eigen::MatrixXd> llt(sys.S);
  if (llt.info() != Eigen::Success) {
    const std::size_t p = detail::first_bad_pivot(sys.S);
    throw SolverError("solve_spectral: stiffness matrix is not positive definite (pivot " +
                          (p == SolverError::npos ? std::string("unknown") : std::to_string(p)) + ")",
                      p);
  }
  Eigen::VectorXd x = llt.solve(sys.b);
  x += llt.solve(sys.b - sys.S * x);
  const double bn = sys.b.norm();
  sol.residual = bn > 0.0 ? (sys.S * x - sys.b).norm() / bn : (sys.S * x).norm();
  sol.coeffs = x;
  Eigen::VectorXd full(x.size() + 1);
  full << 0.0, x;
  sol.u = from_real_basis(sys.Lu, full);
  sol.h1_norm = h1_seminorm(x, sys.Lu);
  sol.apriori_bound = std::sqrt(1.5) * sys.f_dual_norm / sys.a_min;
  sol.apriori_ok = sol.h1_norm <= sol.apriori_bound * (1.0 + 1e-12);
  return sol;
}

/// ||grad(u1 - u2)||_{L^2} from coefficients; band limits may differ.
inline double h1_seminorm_diff(const SHCoefficients& u1, const SHCoefficients& u2) {
  const int L = std::max(u1.band_limit(), u2.band_limit());
  auto get = [](const SHCoefficients& c, int l, int m) { return l <= c.band_limit() ? c(l, m) : cplx(0.0, 0.0); };
  double s = 0.0;
  for (int l = 1; l <= L; ++l) {
    double shell = std::norm(get(u1, l, 0) - get(u2, l, 0));
    for (int m = 1; m <= l; ++m) shell += 2.0 * std::norm(get(u1, l, m) - get(u2, l, m));
    s += l * (l + 1.0) * shell;
  }
  return std::sqrt(s);
}

}  // namespace sphmlmc
