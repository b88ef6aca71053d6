#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sphmlmc/harmonics.hpp"
#include "sphmlmc/spectral.hpp"

using namespace sphmlmc;

namespace {

SHCoefficients y10() {
  SHCoefficients f(1);
  f.set(1, 0, 1.0);
  return f;
}

FieldSample constant_field(double c, int La, const QuadGrid& g) {
  SHCoefficients t(La);
  t.set(0, 0, 2.0 * std::sqrt(std::numbers::pi) * std::log(c));
  return synthesize_lognormal(t, g);
}

FieldSample lognormal(double alpha, int La, const QuadGrid& g, std::uint32_t sample) {
  const auto spec = power_law_spectrum(alpha, La);
  return synthesize_lognormal(sample_coeffs(spec, 0.0, La, RandomStream(2024, {StreamDomain::adhoc, 0, 0, sample})), g);
}

SHCoefficients random_zero_mean(int L, std::uint32_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n;
  SHCoefficients c(L);
  for (int l = 1; l <= L; ++l) {
    c.set(l, 0, n(gen));
    for (int m = 1; m <= l; ++m) c.set(l, m, cplx(n(gen), n(gen)));
  }
  return c;
}

// Oracle: sum over grid nodes of w a grad(u) . grad(v), gradients from field_gradient.
double energy_product(const SHCoefficients& u, const SHCoefficients& v, const FieldSample& a) {
  const QuadGrid& g = a.field.grid;
  double s = 0.0;
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const TangentVector gu = field_gradient(u, g.theta(i), g.phi(j));
      const TangentVector gv = field_gradient(v, g.theta(i), g.phi(j));
      s += g.weight(i, j) * a.field(i, j) * (gu.theta * gv.theta + gu.phi * gv.phi);
    }
  return s;
}

// f(v) for f, v given by coefficients: the L^2 pairing.
double pairing(const SHCoefficients& f, const SHCoefficients& v) {
  double s = 0.0;
  for (int l = 0; l <= std::min(f.band_limit(), v.band_limit()); ++l) {
    s += f(l, 0).real() * v(l, 0).real();
    for (int m = 1; m <= l; ++m) s += 2.0 * (f(l, m) * std::conj(v(l, m))).real();
  }
  return s;
}

}  // namespace

TEST(SpectralAssembly, UnitCoefficientGivesEigenvalues) {
  const QuadGrid g = spectral_quad_grid(3, 0);
  const SpectralSystem sys = assemble_spectral(constant_field(1.0, 0, g), 3);
  ASSERT_EQ(sys.dimension(), 15);
  Eigen::VectorXd d(15);
  d << 2, 2, 2, 6, 6, 6, 6, 6, 12, 12, 12, 12, 12, 12, 12;
  EXPECT_LE((sys.S - Eigen::MatrixXd(d.asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SpectralAssembly, LinearInConstantCoefficient) {
  const QuadGrid g = spectral_quad_grid(5, 0);
  const SpectralSystem s1 = assemble_spectral(constant_field(1.0, 0, g), 5);
  const SpectralSystem s3 = assemble_spectral(constant_field(3.0, 0, g), 5);
  EXPECT_LE((s3.S - 3.0 * s1.S).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SpectralAssembly, SymmetricAndRefinementStable) {
  const int Lu = 4, La = 4;
  const FieldSample a = lognormal(4.0, La, spectral_quad_grid(Lu, La), 1);
  const SpectralSystem sys = assemble_spectral(a, Lu);
  EXPECT_LE((sys.S - sys.S.transpose()).norm(), 1e-10 * sys.S.norm());
  EXPECT_LE(spectral_refinement_drift(a, Lu), 1e-8);
}

TEST(SpectralAssembly, RejectsCoarseGridAndBadCoefficient) {
  EXPECT_THROW(assemble_spectral(constant_field(1.0, 2, QuadGrid(5, 10)), 4), ResolutionError);
  FieldSample a = constant_field(1.0, 0, spectral_quad_grid(2, 0));
  a.field.values[3] = 0.0;
  EXPECT_THROW(assemble_spectral(a, 2), std::invalid_argument);
}

TEST(SpectralRhs, Examples) {
  const Eigen::VectorXd b = assemble_rhs(y10(), 4);
  ASSERT_EQ(b.size(), 24);
  EXPECT_EQ(b[0], 1.0);
  EXPECT_EQ(b.tail(23).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(assemble_rhs(SHCoefficients(3), 3).cwiseAbs().maxCoeff(), 0.0);
  SHCoefficients bad(2);
  bad.set(0, 0, 0.1);
  EXPECT_THROW(assemble_rhs(bad, 2), CompatibilityError);
}

TEST(SpectralSolve, ExactSolutions) {
  for (double c : {1.0, 2.0}) {
    const QuadGrid g = spectral_quad_grid(6, 0);
    const SpectralSolution sol = solve_spectral(assemble_spectral(constant_field(c, 0, g), 6, y10()));
    EXPECT_NEAR(sol.u(1, 0).real(), 0.5 / c, 1e-12);
    EXPECT_LE(h1_seminorm_diff(sol.u, SHCoefficients(1)) - std::sqrt(2.0) * 0.5 / c, 1e-12);
    for (int l = 2; l <= 6; ++l) EXPECT_LE(std::abs(sol.u(l, 0)), 1e-12);
    EXPECT_TRUE(sol.apriori_ok);
    EXPECT_LE(sol.residual, 1e-10);
  }
}

TEST(SpectralSolve, ZeroRhs) {
  const FieldSample a = lognormal(3.0, 4, spectral_quad_grid(4, 4), 2);
  const SpectralSolution sol = solve_spectral(assemble_spectral(a, 4, SHCoefficients(4)));
  EXPECT_EQ(sol.coeffs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SpectralSolve, GalerkinOrthogonalityOnRandomTestFunctions) {
  const int L = 8;
  const FieldSample a = lognormal(4.0, L, spectral_quad_grid(L, L), 3);
  const SpectralSolution sol = solve_spectral(assemble_spectral(a, L, y10()));
  EXPECT_LE(sol.residual, 1e-10);
  for (int k = 0; k < 20; ++k) {
    const SHCoefficients v = random_zero_mean(L, 500 + k);
    EXPECT_LE(std::abs(pairing(y10(), v) - energy_product(sol.u, v, a)), 1e-9);
  }
}

TEST(SpectralSolve, AprioriPoincareAndStrang) {
  for (double alpha : {3.0, 4.0}) {
    const int L = 8;
    const QuadGrid g = spectral_quad_grid(L, L);
    std::vector<SpectralSolution> sols;
    std::vector<FieldSample> fields;
    for (std::uint32_t k = 0; k < 6; ++k) {
      fields.push_back(lognormal(alpha, L, g, 100 + k));
      sols.push_back(solve_spectral(assemble_spectral(fields.back(), L, y10())));
      const SpectralSolution& s = sols.back();
      EXPECT_LT(s.h1_norm, s.apriori_bound);
      EXPECT_LE(sobolev_norm(s.u, 0.0), s.h1_norm / std::sqrt(2.0));
    }
    const double f_norm = sobolev_norm(y10(), -1.0);
    for (std::size_t p = 0; p + 1 < sols.size(); ++p) {
      double dist = 0.0;
      for (std::size_t n = 0; n < g.size(); ++n)
        dist = std::max(dist, std::abs(fields[p].field.values[n] - fields[p + 1].field.values[n]));
      const double bound = std::sqrt(1.5) * f_norm * dist / (fields[p].a_min * fields[p + 1].a_min);
      EXPECT_LT(h1_seminorm_diff(sols[p].u, sols[p + 1].u), bound);
    }
  }
}

TEST(SpectralSolve, GalerkinErrorMonotoneInDegree) {
  const int La = 6, Lref = 20;
  const QuadGrid g = spectral_quad_grid(Lref, La);
  const FieldSample a = lognormal(4.0, La, g, 9);
  SHCoefficients f(3);
  f.set(1, 0, 1.0);
  f.set(3, 2, cplx(0.4, -0.2));
  const SpectralSolution ref = solve_spectral(assemble_spectral(a, Lref, f));
  double prev = std::numeric_limits<double>::infinity();
  for (int Lu = 1; Lu <= 12; ++Lu) {
    const double e = h1_seminorm_diff(solve_spectral(assemble_spectral(a, Lu, f)).u, ref.u);
    EXPECT_LE(e, prev * (1 + 1e-12)) << Lu;
    prev = e;
  }
}

TEST(SpectralSolve, NonPositiveDefiniteReportsPivot) {
  SpectralSystem sys;
  sys.Lu = 1;
  sys.S = Eigen::MatrixXd::Identity(3, 3);
  sys.S(1, 1) = -1.0;
  sys.b = Eigen::VectorXd::Ones(3);
  sys.a_min = 1.0;
  try {
    solve_spectral(sys);
    FAIL();
  } catch (const SolverError& e) {
    EXPECT_EQ(e.pivot(), 1u);
  }
}

TEST(H1SeminormDiff, Examples) {
  const SHCoefficients u = random_zero_mean(6, 1);
  EXPECT_EQ(h1_seminorm_diff(u, u), 0.0);
  EXPECT_NEAR(h1_seminorm_diff(y10(), SHCoefficients(3)), std::sqrt(2.0), 1e-15);
}

TEST(H1SeminormDiff, MatchesQuadrature) {
  const SHCoefficients u1 = random_zero_mean(7, 2), u2 = random_zero_mean(5, 3);
  const QuadGrid g(16, 32);
  double s = 0.0;
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const TangentVector a = field_gradient(u1, g.theta(i), g.phi(j));
      const TangentVector b = field_gradient(u2, g.theta(i), g.phi(j));
      s += g.weight(i, j) * (std::pow(a.theta - b.theta, 2) + std::pow(a.phi - b.phi, 2));
    }
  EXPECT_NEAR(h1_seminorm_diff(u1, u2), std::sqrt(s), 1e-10 * std::sqrt(s));
}
