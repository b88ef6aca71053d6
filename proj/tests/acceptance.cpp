#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sphmlmc/fem.hpp"
#include "sphmlmc/grf.hpp"
#include "sphmlmc/harness.hpp"
#include "sphmlmc/mlmc.hpp"
#include "sphmlmc/sh_core.hpp"
#include "sphmlmc/spectral.hpp"
#include "synthetic.hpp"

using namespace sphmlmc;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

SHCoefficients y10(double scale = 1.0) {
  SHCoefficients f(1);
  f.set(1, 0, scale);
  return f;
}

SHCoefficients random_coeffs(int L, std::uint64_t seed, double decay = 0.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n;
  SHCoefficients c(L);
  for (int l = 0; l <= L; ++l) {
    const double s = std::pow(1.0 + l, -decay);
    c.set(l, 0, s * n(gen));
    for (int m = 1; m <= l; ++m) c.set(l, m, cplx(s * n(gen), s * n(gen)));
  }
  return c;
}

// Coefficients of f above degree L.
SHCoefficients tail(const SHCoefficients& f, int L) {
  SHCoefficients t(f.band_limit());
  for (int l = L + 1; l <= f.band_limit(); ++l)
    for (int m = 0; m <= l; ++m) t.set(l, m, f(l, m));
  return t;
}

RandomStream adhoc(std::uint64_t seed, std::uint32_t sample) { return RandomStream(seed, {StreamDomain::adhoc, 0, 0, sample}); }

// 1. a = 1, f = Y10: spectral solution is Y10 / 2, FEM converges at rate 1.
Outcome exact_solution() {
  Outcome o;
  double coeff_err = 0.0;
  for (int Lu : {1, 4, 8, 16}) {
    const QuadGrid g = spectral_quad_grid(Lu, 0);
    const SpectralSolution sol = solve_spectral(assemble_spectral(synthesize_lognormal(SHCoefficients(0), g), Lu, y10()));
    for (int l = 0; l <= Lu; ++l)
      for (int m = 0; m <= l; ++m)
        coeff_err = std::max(coeff_err, std::abs(sol.u(l, m) - (l == 1 && m == 0 ? cplx(0.5) : cplx(0.0))));
  }
  const auto levels = build_icosphere_hierarchy(6);
  std::vector<ConvergenceRow> rows;
  for (int j = 2; j <= 6; ++j) {
    const FemSpace s(levels[j]);
    const double e = h1_error_vs_reference(solve_fem(assemble_fem(s, [](const Vec3&) { return 1.0; }, y10())), y10(0.5));
    rows.push_back({j, levels[j].h, 0, e, 0.0, 0.0});
  }
  const double rate = fit_rate(rows);
  o.pass = coeff_err <= 1e-12 && rate >= 0.9 && rate <= 1.1;
  o.detail = fmt("spectral coefficient error %.3g (<= 1e-12), FEM rate %.4f in [0.9, 1.1]", coeff_err, rate);
  return o;
}

// 2. Addition theorem for l <= 32 at 50 points; forward(inverse(c)) = c for L <= 32.
Outcome addition_and_roundtrip() {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> uz(-1.0, 1.0), up(0.0, 2 * kPi);
  double add_err = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double t = std::acos(uz(gen)), p = up(gen);
    for (int l = 0; l <= 32; ++l) {
      double s = std::norm(eval_ylm(l, 0, t, p));
      for (int m = 1; m <= l; ++m) s += 2 * std::norm(eval_ylm(l, m, t, p));
      add_err = std::max(add_err, std::abs(s - (2 * l + 1) / (4 * kPi)));
    }
  }
  double rt_err = 0.0;
  for (int L = 0; L <= 32; ++L) {
    const SHCoefficients c = random_coeffs(L, 100 + L);
    const SHCoefficients back = sht_forward(sht_inverse(c, QuadGrid::for_degree(L)), L);
    for (int l = 0; l <= L; ++l)
      for (int m = 0; m <= l; ++m) rt_err = std::max(rt_err, std::abs(back(l, m) - c(l, m)));
  }
  return {add_err <= 1e-11 && rt_err <= 1e-12,
          fmt("addition theorem error %.3g (<= 1e-11), roundtrip error %.3g (<= 1e-12)", add_err, rt_err)};
}

// 3. Var a_l0 = A_l and pointwise variance sum_l A_l (2l+1)/(4 pi), 5 standard errors.
Outcome kl_law() {
  const int L = 16, n = 10000;
  std::vector<Vec3> pts;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> uz(-1.0, 1.0), up(0.0, 2 * kPi);
  for (int k = 0; k < 10; ++k) pts.push_back(unit_vector(std::acos(uz(gen)), up(gen)));
  const FieldEvaluator ev(L);
  double worst = 0.0;
  for (double alpha : {3.0, 4.0}) {
    const auto spec = power_law_spectrum(alpha, L);
    std::vector<std::vector<double>> x(L + 1 + pts.size(), std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      const SHCoefficients c = sample_coeffs(spec, 0.0, L, adhoc(30 + static_cast<int>(alpha), i));
      for (int l = 0; l <= L; ++l) x[l][i] = c(l, 0).real() * c(l, 0).real();
      const auto v = ev.evaluate(c, pts);
      for (std::size_t k = 0; k < pts.size(); ++k) x[L + 1 + k][i] = v[k] * v[k];
    }
    for (std::size_t q = 0; q < x.size(); ++q) {
      const double target = q <= static_cast<std::size_t>(L) ? spec[q] : spec.pointwise_variance(L);
      double m = 0.0, s2 = 0.0;
      for (double v : x[q]) m += v;
      m /= n;
      for (double v : x[q]) s2 += (v - m) * (v - m);
      const double se = std::sqrt(s2 / (n - 1) / n);
      worst = std::max(worst, std::abs(m - target) / se);
    }
  }
  return {worst <= 5.0, fmt("largest deviation %.2f standard errors (<= 5)", worst)};
}

// 4. ||f - P_L f||_{H^s} <= L^{-(t-s)} ||f||_{H^t}, exact.
Outcome projection_bound() {
  const int B = 24;
  const std::pair<double, double> st[] = {{-1.0, 0.0}, {0.0, 1.0}, {-1.0, 1.0}, {0.0, 2.0}, {0.5, 1.5}, {1.0, 3.0}};
  int checks = 0, violations = 0;
  double tightest = 0.0;
  for (int k = 0; k < 20; ++k) {
    const SHCoefficients f = random_coeffs(B, 400 + k, 0.5 * (k % 5));
    for (const auto& [s, t] : st)
      for (int L = 1; L <= B; ++L) {
        const double lhs = sobolev_norm(tail(f, L), s);
        const double rhs = std::pow(L, -(t - s)) * sobolev_norm(f, t);
        ++checks;
        if (!(lhs <= rhs)) ++violations;
        tightest = std::max(tightest, lhs / rhs);
      }
  }
  return {violations == 0, fmt("%.0f inequalities, %.0f violated, largest ratio %.3g", checks, violations, tightest)};
}

struct Sampled {
  std::vector<double> a;  // coefficient at the quadrature nodes
  double a_min;
};

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// 5. ||u||_{H^1} < sqrt(3/2) ||f||_{H^-1} / a_min and
//    |u1 - u2|_{H^1} < sqrt(3/2) ||f||_{H^-1} ||a1 - a2||_inf / (a1_min a2_min), spectral and FEM.
Outcome apriori_strang() {
  const SHCoefficients f = y10();
  const double fn = sobolev_norm(f, -1.0);
  const double c = std::sqrt(1.5) * fn;
  int checks = 0, violations = 0;
  double tightest = 0.0;
  auto check = [&](double lhs, double rhs) {
    ++checks;
    if (!(lhs < rhs)) ++violations;
    tightest = std::max(tightest, lhs / rhs);
  };
  const int n = 20;
  const FemSpace space(build_icosphere(3));
  for (double alpha : {3.0, 4.0}) {
    const int La = 12, Lu = 12, Lf = 16;
    const QuadGrid g = spectral_quad_grid(Lu, La);
    std::vector<Sampled> sf, ff;
    std::vector<SHCoefficients> su;
    std::vector<Eigen::VectorXd> fu;
    const FieldEvaluator ev(Lf);
    for (int k = 0; k < n; ++k) {
      const FieldSample a = synthesize_lognormal(sample_coeffs(power_law_spectrum(alpha, La), 0.0, La, adhoc(50, k)), g);
      const SpectralSolution s = solve_spectral(assemble_spectral(a, Lu, f));
      check(s.h1_norm, c / a.a_min);
      sf.push_back({a.field.values, a.a_min});
      su.push_back(s.u);

      auto v = ev.evaluate(sample_coeffs(power_law_spectrum(alpha, Lf), 0.0, Lf, adhoc(51, k)), space.quad_points());
      for (double& x : v) x = std::exp(x);
      const FemSystem sys = assemble_fem_values(space, v, f);
      const FemSolution u = solve_fem(sys);
      check(u.h1_norm, c / sys.a_min);
      ff.push_back({std::move(v), sys.a_min});
      fu.push_back(u.u);
    }
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        check(h1_seminorm_diff(su[p], su[q]), c * sup_diff(sf[p].a, sf[q].a) / (sf[p].a_min * sf[q].a_min));
        check(space.h1_seminorm(fu[p] - fu[q]), c * sup_diff(ff[p].a, ff[q].a) / (ff[p].a_min * ff[q].a_min));
      }
  }
  return {violations == 0, fmt("%.0f strict inequalities, %.0f violated, largest ratio %.3g", checks, violations, tightest)};
}

// 6. Two-level model: MSE over 1000 repeats equals sum_j Var(D_j) / M_j within 15%.
Outcome variance_decomposition() {
  testing::TwoLevelModel model;
  const MLMCSchedule sc = build_schedule(1.0, 1, 1, 0.5, 1, 4.0, 0.2);
  double mse = 0.0;
  const int R = 1000;
  for (int r = 0; r < R; ++r) {
    const MlmcResult res = mlmc_estimate(model, sc, RandomStream(60, {StreamDomain::study, static_cast<std::uint32_t>(r), 0, 0}));
    mse += model.norm_sq(1, res.estimate - model.exact_mean());
  }
  mse /= R;
  const double predicted = model.predicted_mse(sc);
  const double rel = std::abs(mse - predicted) / predicted;
  return {rel <= 0.15, fmt("MSE %.5g, predicted %.5g, relative deviation %.3f (<= 0.15)", mse, predicted, rel)};
}

ExperimentConfig convergence_config(double alpha, int workers) {
  ExperimentConfig c;
  c.alpha = alpha;
  c.k = 1;
  c.kappa = 1.0;
  c.epsilon = 0.2;
  c.L0 = 2;
  c.J_min = 0;
  c.J_max = 4;
  c.kappa_ref = 40.0;
  c.L0_ref = 5;
  c.n_ref = 10;
  c.n_err = 20;
  c.method = Method::fem;
  c.workers = workers;
  return c;
}

std::string csv_text(const ConvergenceResult& r) {
  std::ostringstream os;
  write_convergence_csv(os, r.rows);
  return os.str();
}

void save(const std::string& dir, const std::string& name, const std::string& text) {
  if (dir.empty()) return;
  std::ofstream os(dir + "/" + name);
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string out_dir;
  int workers_hi = 8;
  app.add_option("criteria", only, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--out-dir", out_dir, "directory for the convergence CSVs");
  app.add_option("--workers", workers_hi, "worker count compared against 1")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  std::set<int> run(only.begin(), only.end());
  if (run.empty()) run = {1, 2, 3, 4, 5, 6, 7, 8};

  bool all = true;
  auto report = [&](int id, const char* name, const Outcome& o, double secs) {
    all = all && o.pass;
    std::printf("criterion %d %-24s %s  %s  [%.1f s]\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  };
  auto timed = [&](int id, const char* name, auto&& fn) {
    if (!run.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  timed(1, "exact-solution", exact_solution);
  timed(2, "addition-roundtrip", addition_and_roundtrip);
  timed(3, "kl-law", kl_law);
  timed(4, "projection-bound", projection_bound);
  timed(5, "apriori-strang", apriori_strang);
  timed(6, "variance-decomposition", variance_decomposition);

  std::string serial[2];
  const double alphas[2] = {4.0, 3.0};
  auto log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
  timed(7, "convergence-rates", [&] {
    Outcome o;
    const double lo[2] = {0.8, 0.35}, hi[2] = {1.15, 0.65};
    for (int a = 0; a < 2; ++a) {
      const ConvergenceResult r = run_convergence(convergence_config(alphas[a], 1), log);
      serial[a] = csv_text(r);
      save(out_dir, a == 0 ? "alpha4.csv" : "alpha3.csv", serial[a]);
      o.pass = o.pass && r.rate >= lo[a] && r.rate <= hi[a];
      o.detail += fmt("alpha=%.0f rate %.4f in [%.2f, ", alphas[a], r.rate, lo[a]) + fmt("%.2f]", hi[a]) + (a == 0 ? ", " : "");
    }
    return o;
  });
  timed(8, "determinism", [&] {
    Outcome o;
    for (int a = 0; a < 2; ++a) {
      if (serial[a].empty()) serial[a] = csv_text(run_convergence(convergence_config(alphas[a], 1), log));
      const std::string par = csv_text(run_convergence(convergence_config(alphas[a], workers_hi), log));
      save(out_dir, a == 0 ? "alpha4_parallel.csv" : "alpha3_parallel.csv", par);
      const bool same = par == serial[a];
      o.pass = o.pass && same;
      o.detail += fmt("alpha=%.0f ", alphas[a]) + (same ? "identical" : "DIFFERENT") + (a == 0 ? ", " : "");
    }
    o.detail = "1 vs " + std::to_string(workers_hi) + " workers: " + o.detail;
    return o;
  });

  return all ? 0 : 1;
}
