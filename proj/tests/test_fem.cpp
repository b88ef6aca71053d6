#include <cmath>
#include <numbers>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "sphmlmc/fem.hpp"
#include "sphmlmc/grf.hpp"

using namespace sphmlmc;

namespace {

constexpr double kPi = std::numbers::pi;

SHCoefficients y10(double scale = 1.0) {
  SHCoefficients f(1);
  f.set(1, 0, scale);
  return f;
}

double unit(const Vec3&) { return 1.0; }

double max_abs(const SparseMatrix& a) { return Eigen::MatrixXd(a).cwiseAbs().maxCoeff(); }

// Lognormal coefficient sampled at the quadrature nodes of a space.
std::vector<double> lognormal_values(const FemSpace& space, double alpha, int L, std::uint32_t sample) {
  const auto spec = power_law_spectrum(alpha, L);
  const SHCoefficients c = sample_coeffs(spec, 0.0, L, RandomStream(77, {StreamDomain::adhoc, 0, 0, sample}));
  auto v = FieldEvaluator(L).evaluate(c, space.quad_points());
  for (double& x : v) x = std::exp(x);
  return v;
}

}  // namespace

// --- Mesh -------------------------------------------------------------------

TEST(Icosphere, Counts) {
  const auto levels = build_icosphere_hierarchy(5);
  for (int j = 0; j <= 5; ++j) {
    EXPECT_EQ(levels[j].triangle_count(), 20 * (1 << (2 * j)));
    EXPECT_EQ(levels[j].vertex_count(), 10 * (1 << (2 * j)) + 2);
    EXPECT_EQ(levels[j].level, j);
  }
  EXPECT_EQ(build_icosphere(0).vertex_count(), 12);
  EXPECT_EQ(build_icosphere(2).triangle_count(), 320);
  EXPECT_EQ(build_icosphere(2).vertex_count(), 162);
}

TEST(Icosphere, OrientationAndClosedness) {
  const SphereMesh m = build_icosphere(3);
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : m.triangles) {
    const Vec3 n = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
    EXPECT_GT(n.dot(m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]), 0.0);
    for (int e = 0; e < 3; ++e) ++edges[{t[e], t[(e + 1) % 3]}];
  }
  // Every directed edge appears once and its reverse once: a closed oriented surface.
  for (const auto& [e, n] : edges) {
    EXPECT_EQ(n, 1);
    EXPECT_EQ(edges.count({e.second, e.first}), 1u);
  }
}

TEST(Icosphere, NestedUnprojectedVertices) {
  const auto levels = build_icosphere_hierarchy(4);
  for (const auto& v : levels[0].vertices) EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  for (int j = 1; j <= 4; ++j) {
    const auto& c = levels[j - 1];
    const auto& f = levels[j];
    ASSERT_EQ(f.coarse_vertex_count, c.vertex_count());
    for (int i = 0; i < c.vertex_count(); ++i) EXPECT_EQ(f.vertices[i], c.vertices[i]);
    for (std::size_t k = 0; k < f.parents.size(); ++k) {
      const Vec3 mid = 0.5 * (c.vertices[f.parents[k][0]] + c.vertices[f.parents[k][1]]);
      EXPECT_EQ(f.vertices[c.vertex_count() + k], mid);
      EXPECT_LT(mid.norm(), 1.0);
    }
  }
}

TEST(Icosphere, MeshWidthHalves) {
  const auto levels = build_icosphere_hierarchy(6);
  EXPECT_NEAR(levels[0].h, std::atan(2.0), 1e-14);  // icosahedron edge angle
  for (int j = 1; j <= 6; ++j) {
    EXPECT_NEAR(levels[j].h_flat / levels[j - 1].h_flat, 0.5, 1e-12);
    EXPECT_LT(levels[j].h_flat, levels[j].h);
  }
  // The first lifted refinement enlarges the central child triangle (ratio 0.5675);
  // from level 1 on the lifted widths halve to within 5%.
  EXPECT_NEAR(levels[1].h / levels[0].h, 0.5675, 1e-3);
  for (int j = 2; j <= 6; ++j) {
    const double r = levels[j].h / levels[j - 1].h;
    EXPECT_GE(r, 0.45);
    EXPECT_LE(r, 0.55);
  }
}

TEST(Icosphere, Deterministic) {
  const SphereMesh a = build_icosphere(3), b = build_icosphere(3);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.triangles, b.triangles);
}

TEST(Icosphere, ProlongationIsExactForLinearFunctions) {
  const auto levels = build_icosphere_hierarchy(3);
  const Vec3 c(0.3, -1.2, 0.7);
  for (int j = 1; j <= 3; ++j) {
    std::vector<double> coarse;
    for (const auto& v : levels[j - 1].vertices) coarse.push_back(c.dot(v));
    const auto fine = prolongate(levels[j], coarse);
    for (int i = 0; i < levels[j].vertex_count(); ++i) EXPECT_NEAR(fine[i], c.dot(levels[j].vertices[i]), 1e-15);
  }
  EXPECT_THROW(prolongate(levels[2], std::vector<double>(5)), std::invalid_argument);
}

TEST(Icosphere, OffExport) {
  std::ostringstream os;
  write_off(os, build_icosphere(1));
  std::istringstream is(os.str());
  std::string tag;
  int v, f, e;
  is >> tag >> v >> f >> e;
  EXPECT_EQ(tag, "OFF");
  EXPECT_EQ(v, 42);
  EXPECT_EQ(f, 80);
}

// --- Quadrature and geometry -------------------------------------------------

TEST(TriangleRule, ExactForDegreeFive) {
  // Oracle: integral of s^a u^b over the reference triangle = a! b! / (a + b + 2)!.
  for (int lev : {0, 1, 2}) {
    const TriangleRule r = TriangleRule::composite(lev);
    for (int a = 0; a <= 5; ++a)
      for (int b = 0; a + b <= 5; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < r.size(); ++q) s += r.weights[q] * std::pow(r.points[q][0], a) * std::pow(r.points[q][1], b);
        const double exact = std::tgamma(a + 1.0) * std::tgamma(b + 1.0) / std::tgamma(a + b + 3.0);
        EXPECT_NEAR(s, exact, 1e-15) << a << "," << b;
      }
  }
}

TEST(FemSpace, SurfaceArea) {
  const FemSpace s(build_icosphere(4));
  EXPECT_NEAR(s.surface_area(), 4 * kPi, 1e-8);
}

TEST(FemSpace, QuadratureNodesOnSphere) {
  const FemSpace s(build_icosphere(1));
  for (const Vec3& y : s.quad_points()) EXPECT_NEAR(y.norm(), 1.0, 1e-15);
}

// --- Assembly ----------------------------------------------------------------

TEST(FemAssembly, ConstantsInKernel) {
  const FemSpace s(build_icosphere(3));
  const FemSystem sys = assemble_fem(s, unit, y10());
  const Eigen::VectorXd rows = sys.K * Eigen::VectorXd::Ones(s.dofs());
  EXPECT_LE(rows.cwiseAbs().maxCoeff(), 1e-10);
  const SparseMatrix asym = sys.K - SparseMatrix(sys.K.transpose());
  EXPECT_LE(max_abs(asym), 1e-14);
}

TEST(FemAssembly, LinearInConstantCoefficient) {
  const FemSpace s(build_icosphere(2));
  const FemSystem s1 = assemble_fem(s, unit, y10());
  const FemSystem s3 = assemble_fem(s, [](const Vec3&) { return 3.0; }, y10());
  EXPECT_LE(max_abs(s3.K - 3.0 * s1.K), 1e-13);
  EXPECT_EQ(s3.a_min, 3.0);
}

TEST(FemAssembly, BatchAndPointwiseEvaluatorsAgree) {
  const FemSpace s(build_icosphere(2));
  auto point = [](const Vec3& y) { return std::exp(0.3 * y.x() - y.z()); };
  auto batch = [&](std::span<const Vec3> p, std::span<double> out) {
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = point(p[k]);
  };
  const FemSystem a = assemble_fem(s, point, y10());
  const FemSystem b = assemble_fem(s, batch, y10());
  EXPECT_EQ(max_abs(a.K - b.K), 0.0);
}

TEST(FemAssembly, LoadMatchesRefinedQuadrature) {
  const SphereMesh m = build_icosphere(3);
  const FemSpace s0(m, 0), s1(m, 1);
  const Eigen::VectorXd b0 = fem_load(s0, y10()), b1 = fem_load(s1, y10());
  EXPECT_LE((b0 - b1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FemAssembly, RejectsBadInput) {
  const FemSpace s(build_icosphere(1));
  EXPECT_THROW(assemble_fem(s, [](const Vec3& y) { return y.z(); }, y10()), std::invalid_argument);
  SHCoefficients bad(2);
  bad.set(0, 0, 0.1);
  EXPECT_THROW(assemble_fem(s, unit, bad), CompatibilityError);
  EXPECT_THROW(chart_point(Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0), 0.2, 0.2), std::domain_error);
}

TEST(FemAssembly, LognormalQuadratureRefinementDrift) {
  const FemSpace s0(build_icosphere(3), 0), s1(build_icosphere(3), 1);
  const SHCoefficients c =
      sample_coeffs(power_law_spectrum(3.0, 16), 0.0, 16, RandomStream(5, {StreamDomain::adhoc, 0, 0, 0}));
  auto a = [&](std::span<const Vec3> p, std::span<double> out) {
    FieldEvaluator(16).evaluate(c, p, out);
    for (double& v : out) v = std::exp(v);
  };
  const FemSystem k0 = assemble_fem(s0, a, y10()), k1 = assemble_fem(s1, a, y10());
  EXPECT_LE((k0.K - k1.K).norm() / k1.K.norm(), 1e-3);
}

// --- Solve --------------------------------------------------------------------

TEST(FemSolve, ZeroLoad) {
  const FemSpace s(build_icosphere(2));
  const FemSolution sol = solve_fem(assemble_fem(s, unit, SHCoefficients(3)));
  EXPECT_EQ(sol.u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FemSolve, ZeroMeanAndGalerkinOrthogonality) {
  const FemSpace s(build_icosphere(4));
  const auto a = lognormal_values(s, 3.0, 16, 1);
  SHCoefficients f(3);
  f.set(1, 0, 1.0);
  f.set(3, 1, cplx(0.5, 0.25));
  const FemSystem sys = assemble_fem_values(s, a, f);
  const FemSolution sol = solve_fem(sys);
  EXPECT_LE(std::abs(s.mass_row().dot(sol.u)), 1e-10 * s.mass_row().norm() * sol.u.norm());
  EXPECT_LE(sol.residual, 1e-9);
  EXPECT_TRUE(sol.apriori_ok);
}

TEST(FemSolve, ErrorHalvesForSmoothData) {
  const auto levels = build_icosphere_hierarchy(5);
  std::vector<double> err;
  for (int j = 2; j <= 5; ++j) {
    const FemSpace s(levels[j]);
    err.push_back(h1_error_vs_reference(solve_fem(assemble_fem(s, unit, y10())), y10(0.5)));
  }
  for (std::size_t k = 1; k < err.size(); ++k) {
    EXPECT_GE(err[k - 1] / err[k], 1.8);
    EXPECT_LE(err[k - 1] / err[k], 2.2);
  }
}

TEST(FemSolve, AprioriBoundForLognormalSamples) {
  const FemSpace s(build_icosphere(3));
  const double f_norm = std::sqrt(1.0 / 3.0);
  for (double alpha : {3.0, 4.0})
    for (std::uint32_t k = 0; k < 5; ++k) {
      const FemSystem sys = assemble_fem_values(s, lognormal_values(s, alpha, 16, 10 + k), y10());
      EXPECT_NEAR(sys.f_dual_norm, f_norm, 1e-15);
      const FemSolution sol = solve_fem(sys);
      EXPECT_LT(sol.h1_norm, std::sqrt(1.5) * f_norm / sys.a_min);
    }
}

TEST(FemSolve, SolverReuseMatchesFreshSolve) {
  const FemSpace s(build_icosphere(3));
  FemSolver solver(s);
  for (std::uint32_t k = 0; k < 3; ++k) {
    const FemSystem sys = assemble_fem_values(s, lognormal_values(s, 4.0, 8, k), y10());
    EXPECT_EQ(solver.solve(sys).u, solve_fem(sys).u);
  }
}

// --- H1 errors -----------------------------------------------------------------

TEST(H1Error, SelfReferenceIsZero) {
  const FemSpace s(build_icosphere(2));
  const FemSolution sol = solve_fem(assemble_fem(s, unit, y10()));
  EXPECT_NEAR(h1_error_vs_reference(s, sol.u, FeGradient(s, sol.u)), 0.0, 1e-12);
  EXPECT_NEAR(h1_error_vs_reference(s, sol.u, FeGradient(s, sol.u), 1), 0.0, 1e-12);
}

TEST(H1Error, InterpolantConvergesAtRateH) {
  const auto levels = build_icosphere_hierarchy(6);
  const SHCoefficients y = y10();
  const GradientEvaluator grad(y);
  auto value = [&](const Vec3& p) {
    const auto [t, ph] = spherical_angles(p);
    return field_value(y, t, ph);
  };
  double prev_err = 0.0;
  for (int j = 2; j <= 6; ++j) {
    const FemSpace s(levels[j]);
    const Eigen::VectorXd u = interpolate(s, value);
    const double e = h1_error_vs_reference(s, u, grad);
    const double n = h1_error_vs_reference(s, u, [](const Vec3&) { return Vec3::Zero().eval(); });
    if (j > 2) {
      EXPECT_GE(prev_err / e, 1.8);
      EXPECT_LE(prev_err / e, 2.2);
    }
    EXPECT_NEAR(n, std::sqrt(2.0), 2.0 * e);
    prev_err = e;
  }
}
