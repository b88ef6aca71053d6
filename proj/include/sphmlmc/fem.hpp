#pragma once

// Linear finite elements on the lifted icosahedral surface.
//
// A curved element is the radial projection p(x) = x / |x| of a flat triangle
// with vertices v0, v1, v2. With the chart
//   x(xi) = v0 + xi_1 e_1 + xi_2 e_2,   e_k = v_k - v0,   y(xi) = x / |x|,
// the tangent vectors are t_k = dy/dxi_k = (e_k - y (y . e_k)) / |x|, the
// metric is g_kl = t_k . t_l, the surface measure is sqrt(det g) dxi and the
// surface gradient of a function u(xi) is g^{kl} (du/dxi_l) t_k. Basis
// functions are the barycentric hats of the flat triangle composed with p^{-1}.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "sphmlmc/errors.hpp"
#include "sphmlmc/harmonics.hpp"
#include "sphmlmc/mesh.hpp"
#include "sphmlmc/sh_coefficients.hpp"

namespace sphmlmc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Quadrature on the reference triangle {xi_1, xi_2 >= 0, xi_1 + xi_2 <= 1};
/// weights sum to its area 1/2.
struct TriangleRule {
  std::vector<std::array<double, 2>> points;
  std::vector<double> weights;

  std::size_t size() const noexcept { return points.size(); }

  /// Seven-point rule exact for polynomials of degree 5.
  static TriangleRule degree5() {
    constexpr double a1 = 0.0597158717897698, b1 = 0.4701420641051151;
    constexpr double a2 = 0.7974269853530873, b2 = 0.1012865073234563;
    constexpr double w0 = 0.225, w1 = 0.1323941527885062, w2 = 0.1259391805448271;
    TriangleRule r;
    r.points = {{1.0 / 3.0, 1.0 / 3.0}, {b1, b1}, {a1, b1}, {b1, a1}, {b2, b2}, {a2, b2}, {b2, a2}};
    r.weights = {w0, w1, w1, w1, w2, w2, w2};
    for (double& w : r.weights) w *= 0.5;
    return r;
  }

  /// degree5() applied on each of the 4^levels triangles of a uniform
  /// subdivision. levels = 0 gives degree5() itself.
  static TriangleRule composite(int levels) {
    if (levels < 0) throw std::invalid_argument("TriangleRule::composite: negative refinement");
    using P = std::array<double, 2>;
    std::vector<std::array<P, 3>> tris = {{P{0, 0}, P{1, 0}, P{0, 1}}};
    for (int k = 0; k < levels; ++k) {
      std::vector<std::array<P, 3>> next;
      next.reserve(4 * tris.size());
      for (const auto& t : tris) {
        auto mid = [](const P& a, const P& b) { return P{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])}; };
        const P ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        next.push_back({t[0], ab, ca});
        next.push_back({ab, t[1], bc});
        next.push_back({ca, bc, t[2]});
        next.push_back({bc, ca, ab});
      }
      tris = std::move(next);
    }
    const TriangleRule base = degree5();
    const double scale = std::ldexp(1.0, -2 * levels);
    TriangleRule r;
    for (const auto& t : tris)
      for (std::size_t q = 0; q < base.size(); ++q) {
        const double s = base.points[q][0], u = base.points[q][1];
        r.points.push_back({t[0][0] + s * (t[1][0] - t[0][0]) + u * (t[2][0] - t[0][0]),
                            t[0][1] + s * (t[1][1] - t[0][1]) + u * (t[2][1] - t[0][1])});
        r.weights.push_back(base.weights[q] * scale);
      }
    return r;
  }
};

/// Chart quantities of one flat triangle at one reference point.
struct ChartPoint {
  Vec3 y;                 // lifted point on S^2
  Vec3 t1, t2;            // tangent vectors dy/dxi_k
  double sqrt_det = 0.0;  // sqrt(det g)
  double ginv11 = 0.0, ginv12 = 0.0, ginv22 = 0.0;

  /// Surface gradient of a function with reference derivatives (d1, d2).
  Vec3 gradient(double d1, double d2) const {
    return (ginv11 * d1 + ginv12 * d2) * t1 + (ginv12 * d1 + ginv22 * d2) * t2;
  }
};

inline ChartPoint chart_point(const Vec3& v0, const Vec3& e1, const Vec3& e2, double xi1, double xi2) {
  ChartPoint c;
  const Vec3 x = v0 + xi1 * e1 + xi2 * e2;
  const double r = x.norm();
  c.y = x / r;
  c.t1 = (e1 - c.y * c.y.dot(e1)) / r;
  c.t2 = (e2 - c.y * c.y.dot(e2)) / r;
  const double g11 = c.t1.squaredNorm(), g12 = c.t1.dot(c.t2), g22 = c.t2.squaredNorm();
  const double det = g11 * g22 - g12 * g12;
  if (!(det > 1e-12 * g11 * g22) || !std::isfinite(det)) throw std::domain_error("chart_point: degenerate triangle Jacobian");
  c.sqrt_det = std::sqrt(det);
  c.ginv11 = g22 / det;
  c.ginv12 = -g12 / det;
  c.ginv22 = g11 / det;
  return c;
}

/// P1 space on a lifted mesh together with the quadrature geometry every
/// assembly reuses: lifted nodes, weights w sqrt(det g) and w sqrt(det g) g^{-1}.
class FemSpace {
 public:
  explicit FemSpace(SphereMesh mesh, int quad_refinement = 0)
      : mesh_(std::move(mesh)), rule_(TriangleRule::composite(quad_refinement)), quad_refinement_(quad_refinement) {
    const std::size_t nq = rule_.size();
    const std::size_t F = mesh_.triangles.size();
    points_.resize(F * nq);
    measure_.resize(F * nq);
    metric_.resize(F * nq);
    for (std::size_t t = 0; t < F; ++t) {
      const auto& tri = mesh_.triangles[t];
      const Vec3& v0 = mesh_.vertices[tri[0]];
      const Vec3 e1 = mesh_.vertices[tri[1]] - v0;
      const Vec3 e2 = mesh_.vertices[tri[2]] - v0;
      for (std::size_t q = 0; q < nq; ++q) {
        const ChartPoint c = chart_point(v0, e1, e2, rule_.points[q][0], rule_.points[q][1]);
        const double w = rule_.weights[q] * c.sqrt_det;
        points_[t * nq + q] = c.y;
        measure_[t * nq + q] = w;
        metric_[t * nq + q] = {w * c.ginv11, w * c.ginv12, w * c.ginv22};
      }
    }
    build_pattern();
    mass_ = Eigen::VectorXd::Zero(mesh_.vertex_count());
    for (std::size_t t = 0; t < F; ++t)
      for (std::size_t q = 0; q < nq; ++q) {
        const auto phi = hats(q);
        for (int k = 0; k < 3; ++k) mass_[mesh_.triangles[t][k]] += measure_[t * nq + q] * phi[k];
      }
    unit_stiffness_ = stiffness(std::vector<double>(points_.size(), 1.0));
  }

  const SphereMesh& mesh() const noexcept { return mesh_; }
  const TriangleRule& rule() const noexcept { return rule_; }
  int quad_refinement() const noexcept { return quad_refinement_; }
  int dofs() const noexcept { return mesh_.vertex_count(); }

  /// Lifted quadrature nodes, triangle-major (rule().size() per triangle).
  std::span<const Vec3> quad_points() const noexcept { return points_; }
  std::span<const double> quad_measure() const noexcept { return measure_; }

  /// m_i = integral of phi_i over the lifted surface.
  const Eigen::VectorXd& mass_row() const noexcept { return mass_; }
  double surface_area() const noexcept { return mass_.sum(); }

  /// Stiffness matrix for a == 1; u^T K u is the squared H^1 seminorm.
  const SparseMatrix& unit_stiffness() const noexcept { return unit_stiffness_; }

  double h1_seminorm(const Eigen::VectorXd& u) const { return std::sqrt(std::max(0.0, u.dot(unit_stiffness_ * u))); }

  /// Barycentric hat values at rule point q.
  std::array<double, 3> hats(std::size_t q) const {
    const double s = rule_.points[q][0], u = rule_.points[q][1];
    return {1.0 - s - u, s, u};
  }

  /// Stiffness matrix with coefficient values given at quad_points().
  SparseMatrix stiffness(std::span<const double> a) const {
    if (a.size() != points_.size()) throw std::invalid_argument("FemSpace::stiffness: one value per quadrature node");
    SparseMatrix K = pattern_;
    double* val = K.valuePtr();
    const std::size_t nq = rule_.size();
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
      double A11 = 0.0, A12 = 0.0, A22 = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        const double aq = a[t * nq + q];
        const auto& G = metric_[t * nq + q];
        A11 += aq * G[0];
        A12 += aq * G[1];
        A22 += aq * G[2];
      }
      // Reference gradients of the hats: (-1,-1), (1,0), (0,1).
      const double k11 = A11, k22 = A22, k12 = A12;
      const double k01 = -(A11 + A12), k02 = -(A12 + A22);
      const double k00 = A11 + 2.0 * A12 + A22;
      const double ke[3][3] = {{k00, k01, k02}, {k01, k11, k12}, {k02, k12, k22}};
      const int* slot = &slots_[9 * t];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) val[slot[3 * r + c]] += ke[r][c];
    }
    return K;
  }

  /// b_i = sum over quadrature nodes of w sqrt(det g) f phi_i, for f given at quad_points().
  Eigen::VectorXd load(std::span<const double> f) const {
    if (f.size() != points_.size()) throw std::invalid_argument("FemSpace::load: one value per quadrature node");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dofs());
    const std::size_t nq = rule_.size();
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t)
      for (std::size_t q = 0; q < nq; ++q) {
        const auto phi = hats(q);
        const double wf = measure_[t * nq + q] * f[t * nq + q];
        for (int k = 0; k < 3; ++k) b[mesh_.triangles[t][k]] += wf * phi[k];
      }
    return b;
  }

 private:
  void build_pattern() {
    const int n = mesh_.vertex_count();
    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(9 * mesh_.triangles.size());
    for (const auto& t : mesh_.triangles)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trip.emplace_back(t[r], t[c], 0.0);
    pattern_.resize(n, n);
    pattern_.setFromTriplets(trip.begin(), trip.end());
    pattern_.makeCompressed();
    slots_.resize(9 * mesh_.triangles.size());
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          const int row = mesh_.triangles[t][r], col = mesh_.triangles[t][c];
          const int* begin = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col];
          const int* end = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col + 1];
          slots_[9 * t + 3 * r + c] = static_cast<int>(std::lower_bound(begin, end, row) - pattern_.innerIndexPtr());
        }
  }

  SphereMesh mesh_;
  TriangleRule rule_;
  int quad_refinement_;
  std::vector<Vec3> points_;
  std::vector<double> measure_;
  std::vector<std::array<double, 3>> metric_;
  SparseMatrix pattern_;
  std::vector<int> slots_;  // 9 value positions per triangle
  Eigen::VectorXd mass_;
  SparseMatrix unit_stiffness_;
};

struct FemSystem {
  const FemSpace* space = nullptr;  // must outlive the system
  SparseMatrix K;
  Eigen::VectorXd b;
  double a_min = 0.0;        // over quadrature nodes
  double a_max = 0.0;
  double f_dual_norm = 0.0;  // ||f||_{H^-1}
};

struct FemSolution {
  const FemSpace* space = nullptr;
  Eigen::VectorXd u;         // nodal values at the lifted vertices
  double residual = 0.0;     // ||K u + lambda m - b||_inf / ||b||_inf
  double multiplier = 0.0;   // lambda of the mean-value constraint
  double h1_norm = 0.0;
  double apriori_bound = 0.0;
  bool apriori_ok = true;
};

/// Evaluates f at the quadrature nodes of `space`.
inline std::vector<double> sample_at_quadrature(const FemSpace& space, const SHCoefficients& f) {
  const FieldEvaluator ev(f.band_limit());
  return ev.evaluate(f, space.quad_points());
}

namespace detail {
inline void check_compatible(const SHCoefficients& f) {
  if (std::abs(f(0, 0)) > 1e-12)
    throw CompatibilityError("assemble_fem: f(1) != 0 (|c_00| = " + std::to_string(std::abs(f(0, 0))) + ")");
}
}  // namespace detail

inline Eigen::VectorXd fem_load(const FemSpace& space, const SHCoefficients& f) {
  detail::check_compatible(f);
  return space.load(sample_at_quadrature(space, f));
}

/// System for coefficient values given at space.quad_points().
inline FemSystem assemble_fem_values(const FemSpace& space, std::span<const double> a, const SHCoefficients& f) {
  FemSystem sys;
  sys.space = &space;
  sys.a_min = std::numeric_limits<double>::infinity();
  sys.a_max = 0.0;
  for (double v : a) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("assemble_fem: coefficient must be positive and finite at every quadrature node");
    sys.a_min = std::min(sys.a_min, v);
    sys.a_max = std::max(sys.a_max, v);
  }
  sys.K = space.stiffness(a);
  sys.b = fem_load(space, f);
  sys.f_dual_norm = sobolev_norm(f, -1.0);
  return sys;
}

/// a_eval is called either once per node as a(const Vec3&) or in batches as
/// a(std::span<const Vec3>, std::span<double>).
template <class AEval>
FemSystem assemble_fem(const FemSpace& space, AEval&& a_eval, const SHCoefficients& f) {
  std::vector<double> a(space.quad_points().size());
  if constexpr (std::is_invocable_v<AEval&, std::span<const Vec3>, std::span<double>>) {
    a_eval(space.quad_points(), std::span<double>(a));
  } else {
    const auto pts = space.quad_points();
    for (std::size_t k = 0; k < pts.size(); ++k) a[k] = a_eval(pts[k]);
  }
  return assemble_fem_values(space, a, f);
}

/// Mean-value-constrained solves on one space.
///
/// The constrained problem K u + lambda m = b, m^T u = 0 is solved by taking
/// lambda = 1^T b / 1^T m (constants span ker K), pinning vertex 0, factoring the
/// remaining SPD block and shifting the result to zero mean. The sparsity
/// pattern is analyzed once and reused for every coefficient sample.
class FemSolver {
 public:
  explicit FemSolver(const FemSpace& space, double compat_tol = 1e-3) : space_(&space), compat_tol_(compat_tol) {
    const int n = space.dofs();
    ldlt_.analyzePattern(SparseMatrix(space.unit_stiffness().bottomRightCorner(n - 1, n - 1)));
  }

  const FemSpace& space() const noexcept { return *space_; }

  FemSolution solve(const FemSystem& sys) {
    if (sys.space != space_) throw std::invalid_argument("FemSolver: system belongs to another space");
    const int n = space_->dofs();
    const Eigen::VectorXd& m = space_->mass_row();
    FemSolution sol;
    sol.space = space_;
    const double bsum = sys.b.sum();
    const double babs = sys.b.cwiseAbs().sum();
    if (std::abs(bsum) > compat_tol_ * babs)
      throw CompatibilityError("solve_fem: load vector is not orthogonal to constants (sum " + std::to_string(bsum) + ")");
    sol.multiplier = bsum / m.sum();
    const Eigen::VectorXd rhs = sys.b - sol.multiplier * m;

    ldlt_.factorize(SparseMatrix(sys.K.bottomRightCorner(n - 1, n - 1)));
    if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0.0)) {
      std::size_t pivot = SolverError::npos;
      if (ldlt_.info() == Eigen::Success) {
        Eigen::Index k;
        ldlt_.vectorD().minCoeff(&k);
        const auto& perm = ldlt_.permutationP().indices();
        for (Eigen::Index i = 0; i < perm.size(); ++i)
          if (perm[i] == k) pivot = static_cast<std::size_t>(i + 1);
      }
      throw SolverError("solve_fem: reduced stiffness matrix is not positive definite", pivot);
    }
    sol.u = Eigen::VectorXd::Zero(n);
    sol.u.tail(n - 1) = ldlt_.solve(rhs.tail(n - 1));
    sol.u.array() -= m.dot(sol.u) / m.sum();

    const double bmax = sys.b.cwiseAbs().maxCoeff();
    const Eigen::VectorXd r = sys.K * sol.u + sol.multiplier * m - sys.b;
    sol.residual = bmax > 0.0 ? r.cwiseAbs().maxCoeff() / bmax : r.cwiseAbs().maxCoeff();
    sol.h1_norm = space_->h1_seminorm(sol.u);
    sol.apriori_bound = std::sqrt(1.5) * sys.f_dual_norm / sys.a_min;
    sol.apriori_ok = sol.h1_norm <= sol.apriori_bound * (1.0 + 1e-12);
    return sol;
  }

 private:
  const FemSpace* space_;
  double compat_tol_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

inline FemSolution solve_fem(const FemSystem& sys) {
  if (!sys.space) throw std::invalid_argument("solve_fem: system has no space");
  FemSolver solver(*sys.space);
  return solver.solve(sys);
}

/// Nodal interpolant of fn (a function of the lifted point) at the lifted vertices.
template <class Fn>
Eigen::VectorXd interpolate(const FemSpace& space, Fn&& fn) {
  Eigen::VectorXd u(space.dofs());
  for (int i = 0; i < space.dofs(); ++i) u[i] = fn(lift(space.mesh().vertices[i]));
  return u;
}

/// Surface gradient of a P1 function at a lifted point known to lie in triangle t.
class FeGradient {
 public:
  FeGradient(const FemSpace& space, Eigen::VectorXd u) : space_(&space), u_(std::move(u)) {}

  Vec3 operator()(int t, const Vec3& y) const {
    const auto& tri = space_->mesh().triangles[t];
    const Vec3& v0 = space_->mesh().vertices[tri[0]];
    const Vec3 e1 = space_->mesh().vertices[tri[1]] - v0;
    const Vec3 e2 = space_->mesh().vertices[tri[2]] - v0;
    const Vec3 n = e1.cross(e2);
    const Vec3 x = y * (n.dot(v0) / n.dot(y)) - v0;
    const double g11 = e1.dot(e1), g12 = e1.dot(e2), g22 = e2.dot(e2);
    const double r1 = e1.dot(x), r2 = e2.dot(x);
    const double det = g11 * g22 - g12 * g12;
    const ChartPoint c = chart_point(v0, e1, e2, (g22 * r1 - g12 * r2) / det, (g11 * r2 - g12 * r1) / det);
    return c.gradient(u_[tri[1]] - u_[tri[0]], u_[tri[2]] - u_[tri[0]]);
  }

 private:
  const FemSpace* space_;
  Eigen::VectorXd u_;
};

/// ||grad u_h - ref_grad||_{L^2} over the lifted surface, integrated with the
/// composite rule of the given refinement. ref_grad maps a lifted point to a
/// tangent vector in R^3; it may also take the triangle index first.
template <class RefGrad>
double h1_error_vs_reference(const FemSpace& space, const Eigen::VectorXd& u, RefGrad&& ref_grad,
                             int quad_refinement = 0) {
  const TriangleRule rule = TriangleRule::composite(quad_refinement);
  const SphereMesh& mesh = space.mesh();
  double sum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3& v0 = mesh.vertices[tri[0]];
    const Vec3 e1 = mesh.vertices[tri[1]] - v0;
    const Vec3 e2 = mesh.vertices[tri[2]] - v0;
    const double d1 = u[tri[1]] - u[tri[0]], d2 = u[tri[2]] - u[tri[0]];
    double local = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const ChartPoint c = chart_point(v0, e1, e2, rule.points[q][0], rule.points[q][1]);
      Vec3 g;
      if constexpr (std::is_invocable_v<RefGrad&, int, const Vec3&>)
        g = ref_grad(t, c.y);
      else
        g = ref_grad(c.y);
      local += rule.weights[q] * c.sqrt_det * (c.gradient(d1, d2) - g).squaredNorm();
    }
    sum += local;
  }
  return std::sqrt(sum);
}

inline double h1_error_vs_reference(const FemSolution& sol, const SHCoefficients& ref, int quad_refinement = 0) {
  return h1_error_vs_reference(*sol.space, sol.u, GradientEvaluator(ref), quad_refinement);
}

}  // namespace sphmlmc
