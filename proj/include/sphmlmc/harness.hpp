#pragma once

// Convergence study of the MLMC estimator: reference solution, error estimate
// over independent realizations, rate fit and CSV / SVG output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphmlmc/fem.hpp"
#include "sphmlmc/grf.hpp"
#include "sphmlmc/mesh.hpp"
#include "sphmlmc/mlmc.hpp"
#include "sphmlmc/parallel.hpp"
#include "sphmlmc/spectral.hpp"

namespace sphmlmc {

enum class Method { fem, spectral };

inline std::string to_string(Method m) { return m == Method::fem ? "fem" : "spectral"; }

inline Method parse_method(const std::string& s) {
  if (s == "fem") return Method::fem;
  if (s == "spectral") return Method::spectral;
  throw std::invalid_argument("unknown method '" + s + "' (expected fem or spectral)");
}

struct ExperimentConfig {
  double alpha = 4.0;
  int k = 1;
  std::optional<double> s;  // default min((alpha - 2)/2 - 0.01, k)
  double kappa = 1.0;
  double epsilon = 0.2;
  int L0 = 2;
  int j0 = 0;
  int J_min = 0;
  int J_max = 4;
  std::uint64_t seed = 1;
  std::uint64_t ref_seed = 2;
  double kappa_ref = 40.0;
  int L0_ref = 5;
  int n_ref = 10;
  int n_err = 20;
  Method method = Method::fem;
  int workers = 1;
  double mean = 0.0;
  bool deterministic = false;  // a = exp(mean) everywhere instead of a lognormal field
  double eta1 = 1.0;
  double eta2 = 0.0;
  int quad_refinement = 0;
  bool record_wall_time = false;
  std::string out_csv;
  std::string out_svg;
  std::string out_levels;

  double rate_s() const { return s ? *s : std::min((alpha - 2.0) / 2.0 - 0.01, static_cast<double>(k)); }
  int reference_level() const { return J_max + 1; }

  void validate() const {
    if (!(alpha > 2.0)) throw std::invalid_argument("config: alpha must exceed 2");
    if (k != 1) throw std::invalid_argument("config: only k = 1 is implemented");
    if (!(rate_s() > 0.0)) throw std::invalid_argument("config: s must be positive");
    if (J_min < 0 || J_max < J_min) throw std::invalid_argument("config: need 0 <= J_min <= J_max");
    if (j0 < 0) throw std::invalid_argument("config: j0 must be >= 0");
    if (j0 + reference_level() > 10) throw std::invalid_argument("config: j0 + J_max + 1 must not exceed mesh level 10");
    if (L0 < 1 || L0_ref < 1) throw std::invalid_argument("config: L0 and L0_ref must be >= 1");
    if (n_ref < 1) throw std::invalid_argument("config: n_ref must be >= 1");
    if (n_err < 1) throw std::invalid_argument("config: n_err must be >= 1");
    if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
    if (static_cast<std::int64_t>(J_max + 1) * n_err >= (1 << 24))
      throw std::invalid_argument("config: (J_max + 1) * n_err exceeds the realization index range");
    if (n_ref >= (1 << 24)) throw std::invalid_argument("config: n_ref exceeds the realization index range");
  }
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !(is >> std::ws).eof()) throw std::invalid_argument("config: bad value '" + v + "' for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}
}  // namespace detail

/// Sets one key; unknown keys are an error.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "k") c.k = parse_number<int>(key, value);
  else if (key == "s") c.s = parse_number<double>(key, value);
  else if (key == "kappa") c.kappa = parse_number<double>(key, value);
  else if (key == "epsilon") c.epsilon = parse_number<double>(key, value);
  else if (key == "L0") c.L0 = parse_number<int>(key, value);
  else if (key == "j0") c.j0 = parse_number<int>(key, value);
  else if (key == "J_min") c.J_min = parse_number<int>(key, value);
  else if (key == "J_max" || key == "J") c.J_max = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "ref_seed") c.ref_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "kappa_ref") c.kappa_ref = parse_number<double>(key, value);
  else if (key == "L0_ref") c.L0_ref = parse_number<int>(key, value);
  else if (key == "n_ref") c.n_ref = parse_number<int>(key, value);
  else if (key == "n_err") c.n_err = parse_number<int>(key, value);
  else if (key == "method") c.method = parse_method(value);
  else if (key == "workers") c.workers = parse_number<int>(key, value);
  else if (key == "mean") c.mean = parse_number<double>(key, value);
  else if (key == "deterministic") c.deterministic = detail::parse_bool(key, value);
  else if (key == "eta1") c.eta1 = parse_number<double>(key, value);
  else if (key == "eta2") c.eta2 = parse_number<double>(key, value);
  else if (key == "quad_refinement") c.quad_refinement = parse_number<int>(key, value);
  else if (key == "record_wall_time") c.record_wall_time = detail::parse_bool(key, value);
  else if (key == "out_csv") c.out_csv = value;
  else if (key == "out_svg") c.out_svg = value;
  else if (key == "out_levels") c.out_levels = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// key = value lines; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig c = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig c = {}) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  return parse_config(is, std::move(c));
}

inline AngularPowerSpectrum experiment_spectrum(const ExperimentConfig& c, int L_max) {
  if (c.deterministic) return AngularPowerSpectrum(std::vector<double>(L_max + 1, 0.0));
  return power_law_spectrum(c.alpha, L_max);
}

inline SHCoefficients y10_load() {
  SHCoefficients f(1);
  f.set(1, 0, 1.0);
  return f;
}

// ---------------------------------------------------------------------------
// FEM carrier: nodal values on icosphere level `mesh`.

class FemContext {
 public:
  FemContext(int max_mesh, AngularPowerSpectrum spec, double mean, SHCoefficients f, int workers,
             int quad_refinement = 0)
      : spec_(std::move(spec)), mean_(mean), f_(std::move(f)), eval_(spec_.max_degree()), workers_(workers) {
    auto meshes = build_icosphere_hierarchy(max_mesh);
    for (auto& m : meshes) spaces_.push_back(std::make_unique<FemSpace>(std::move(m), quad_refinement));
    for (const auto& s : spaces_) {
      loads_.push_back(fem_load(*s, f_));
      plans_.emplace_back(s->quad_points());
    }
    solvers_.resize(static_cast<std::size_t>(workers) * spaces_.size());
    scratch_.resize(workers);
  }

  int max_mesh() const noexcept { return static_cast<int>(spaces_.size()) - 1; }
  const FemSpace& space(int mesh) const { return *spaces_.at(mesh); }
  const AngularPowerSpectrum& spectrum() const noexcept { return spec_; }
  double mean() const noexcept { return mean_; }

  /// Solution for the coefficient exp(T) with T given by `coeffs`, on worker-private state.
  FemSolution solve(int mesh, const SHCoefficients& coeffs, int worker) {
    if (worker < 0 || worker >= workers_) throw std::out_of_range("FemContext: worker index");
    const FemSpace& sp = space(mesh);
    std::vector<double>& a = scratch_[worker];
    a.resize(sp.quad_points().size());
    eval_.evaluate(coeffs, plans_[mesh], a);
    FemSystem sys;
    sys.space = &sp;
    sys.a_min = std::numeric_limits<double>::infinity();
    sys.a_max = 0.0;
    for (double& v : a) {
      if (!(std::abs(v) <= kMaxLogCoefficient))
        throw OverflowError("FemContext: |T^L| = " + std::to_string(v) + " exceeds " + std::to_string(kMaxLogCoefficient));
      v = std::exp(v);
      sys.a_min = std::min(sys.a_min, v);
      sys.a_max = std::max(sys.a_max, v);
    }
    sys.K = sp.stiffness(a);
    sys.b = loads_[mesh];
    sys.f_dual_norm = sobolev_norm(f_, -1.0);
    auto& solver = solvers_[static_cast<std::size_t>(worker) * spaces_.size() + mesh];
    if (!solver) solver = std::make_unique<FemSolver>(sp);
    return solver->solve(sys);
  }

  Eigen::VectorXd transfer(Eigen::VectorXd v, int from, int to) const {
    if (to < from) throw std::invalid_argument("FemContext: cannot restrict");
    for (int m = from + 1; m <= to; ++m) {
      const auto p = prolongate(space(m).mesh(), std::span<const double>(v.data(), v.size()));
      v = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
    }
    return v;
  }

  double norm_sq(int mesh, const Eigen::VectorXd& v) const { return v.dot(space(mesh).unit_stiffness() * v); }

 private:
  AngularPowerSpectrum spec_;
  double mean_;
  SHCoefficients f_;
  FieldEvaluator eval_;
  int workers_;
  std::vector<std::unique_ptr<FemSpace>> spaces_;
  std::vector<Eigen::VectorXd> loads_;
  std::vector<FieldEvaluator::Plan> plans_;
  std::vector<std::unique_ptr<FemSolver>> solvers_;  // worker-major
  std::vector<std::vector<double>> scratch_;
};

/// Level j of the schedule lives on mesh j0 + j.
class FemMlmcProblem {
 public:
  FemMlmcProblem(FemContext& ctx, const MLMCSchedule& sc, int j0) : ctx_(&ctx), sc_(&sc), j0_(j0) {
    if (j0 + sc.J > ctx.max_mesh()) throw std::invalid_argument("FemMlmcProblem: context lacks fine meshes");
    if (sc[sc.J].L > ctx.spectrum().max_degree()) throw std::invalid_argument("FemMlmcProblem: spectrum too short");
  }

  Eigen::VectorXd correction(const LevelSpec& lv, const RandomStream& omega, int worker) {
    const SHCoefficients coeffs = sample_coeffs(ctx_->spectrum(), ctx_->mean(), lv.L, omega);
    Eigen::VectorXd u = ctx_->solve(j0_ + lv.j, coeffs, worker).u;
    if (lv.j == 0) return u;
    const int Lc = (*sc_)[lv.j - 1].L;
    const Eigen::VectorXd uc = ctx_->solve(j0_ + lv.j - 1, project(coeffs, Lc), worker).u;
    return u - ctx_->transfer(uc, j0_ + lv.j - 1, j0_ + lv.j);
  }

  double norm_sq(int j, const Eigen::VectorXd& v) const { return ctx_->norm_sq(j0_ + j, v); }
  Eigen::VectorXd prolongate(int j, const Eigen::VectorXd& v) const { return ctx_->transfer(v, j0_ + j, j0_ + j + 1); }

 private:
  FemContext* ctx_;
  const MLMCSchedule* sc_;
  int j0_;
};

// ---------------------------------------------------------------------------
// Spectral carrier: real coefficients of degrees 1..L.

class SpectralContext {
 public:
  SpectralContext(AngularPowerSpectrum spec, double mean, SHCoefficients f)
      : spec_(std::move(spec)), mean_(mean), f_(std::move(f)) {}

  const AngularPowerSpectrum& spectrum() const noexcept { return spec_; }
  double mean() const noexcept { return mean_; }

  /// Builds the assembly grids for these band limits; call before concurrent solves.
  void prepare(const std::vector<int>& Ls) {
    for (int L : Ls)
      if (L >= static_cast<int>(grids_.size()) || !grids_[L]) {
        if (L >= static_cast<int>(grids_.size())) grids_.resize(L + 1);
        grids_[L] = std::make_unique<QuadGrid>(spectral_quad_grid(L, L));
      }
  }

  SpectralSolution solve(int L, const SHCoefficients& coeffs) const {
    if (L >= static_cast<int>(grids_.size()) || !grids_[L])
      throw std::logic_error("SpectralContext: band limit " + std::to_string(L) + " not prepared");
    const FieldSample a = synthesize_lognormal(coeffs, *grids_[L]);
    return solve_spectral(assemble_spectral(a, L, f_));
  }

  static Eigen::VectorXd transfer(const Eigen::VectorXd& v, int from, int to) {
    if (to < from) throw std::invalid_argument("SpectralContext: cannot restrict");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spectral_dimension(to));
    out.head(v.size()) = v;
    (void)from;
    return out;
  }

  static double norm_sq(int L, const Eigen::VectorXd& v) {
    const double n = h1_seminorm(v, L);
    return n * n;
  }

 private:
  AngularPowerSpectrum spec_;
  double mean_;
  SHCoefficients f_;
  std::vector<std::unique_ptr<QuadGrid>> grids_;
};

/// Level j solves with L^u = L^a = L_j.
class SpectralMlmcProblem {
 public:
  SpectralMlmcProblem(SpectralContext& ctx, const MLMCSchedule& sc) : ctx_(&ctx), sc_(&sc) {
    std::vector<int> Ls;
    for (const auto& lv : sc.levels) Ls.push_back(lv.L);
    ctx.prepare(Ls);
    if (sc[sc.J].L > ctx.spectrum().max_degree()) throw std::invalid_argument("SpectralMlmcProblem: spectrum too short");
  }

  Eigen::VectorXd correction(const LevelSpec& lv, const RandomStream& omega, int /*worker*/) {
    const SHCoefficients coeffs = sample_coeffs(ctx_->spectrum(), ctx_->mean(), lv.L, omega);
    Eigen::VectorXd u = ctx_->solve(lv.L, coeffs).coeffs;
    if (lv.j == 0) return u;
    const int Lc = (*sc_)[lv.j - 1].L;
    return u - SpectralContext::transfer(ctx_->solve(Lc, project(coeffs, Lc)).coeffs, Lc, lv.L);
  }

  double norm_sq(int j, const Eigen::VectorXd& v) const { return SpectralContext::norm_sq((*sc_)[j].L, v); }
  Eigen::VectorXd prolongate(int j, const Eigen::VectorXd& v) const {
    return SpectralContext::transfer(v, (*sc_)[j].L, (*sc_)[j + 1].L);
  }

 private:
  SpectralContext* ctx_;
  const MLMCSchedule* sc_;
};

// ---------------------------------------------------------------------------
// Experiments: one per method, same interface.
//   schedule(kappa, L0, J), carrier(schedule), run(schedule, stream, executor),
//   transfer(v, from, to), norm_sq(carrier, v), width(J), dofs(J).

class FemExperiment {
 public:
  explicit FemExperiment(const ExperimentConfig& c)
      : cfg_(c),
        ctx_(c.j0 + c.reference_level(),
             experiment_spectrum(c, std::max(c.L0 << c.J_max, c.L0_ref << c.reference_level())), c.mean, y10_load(),
             c.workers, c.quad_refinement) {}

  MLMCSchedule schedule(double kappa, int L0, int J) const {
    return build_schedule(ctx_.space(cfg_.j0).mesh().h, L0, J, cfg_.rate_s(), cfg_.k, kappa, cfg_.epsilon,
                          {cfg_.eta1, cfg_.eta2});
  }
  int carrier(const MLMCSchedule& sc) const { return cfg_.j0 + sc.J; }
  MlmcResult run(const MLMCSchedule& sc, const RandomStream& base, const Executor& ex) {
    FemMlmcProblem p(ctx_, sc, cfg_.j0);
    return mlmc_estimate(p, sc, base, ex);
  }
  Eigen::VectorXd transfer(const Eigen::VectorXd& v, int from, int to) const { return ctx_.transfer(v, from, to); }
  double norm_sq(int carrier, const Eigen::VectorXd& v) const { return ctx_.norm_sq(carrier, v); }
  double width(int J) const { return ctx_.space(cfg_.j0 + J).mesh().h; }
  std::int64_t dofs(int J) const { return ctx_.space(cfg_.j0 + J).dofs() - 1; }
  FemContext& context() noexcept { return ctx_; }

 private:
  ExperimentConfig cfg_;
  FemContext ctx_;
};

/// Spectral levels use the nominal width h_j = 1 / L_j.
class SpectralExperiment {
 public:
  explicit SpectralExperiment(const ExperimentConfig& c)
      : cfg_(c),
        ctx_(experiment_spectrum(c, std::max(c.L0 << c.J_max, c.L0_ref << c.reference_level())), c.mean,
             y10_load()) {}

  MLMCSchedule schedule(double kappa, int L0, int J) const {
    return build_schedule(1.0 / L0, L0, J, cfg_.rate_s(), cfg_.k, kappa, cfg_.epsilon, {cfg_.eta1, cfg_.eta2});
  }
  int carrier(const MLMCSchedule& sc) const { return sc[sc.J].L; }
  MlmcResult run(const MLMCSchedule& sc, const RandomStream& base, const Executor& ex) {
    SpectralMlmcProblem p(ctx_, sc);
    return mlmc_estimate(p, sc, base, ex);
  }
  Eigen::VectorXd transfer(const Eigen::VectorXd& v, int from, int to) const {
    return SpectralContext::transfer(v, from, to);
  }
  double norm_sq(int carrier, const Eigen::VectorXd& v) const { return SpectralContext::norm_sq(carrier, v); }
  double width(int J) const { return 1.0 / (cfg_.L0 << J); }
  std::int64_t dofs(int J) const { return spectral_dimension(cfg_.L0 << J); }

 private:
  ExperimentConfig cfg_;
  SpectralContext ctx_;
};

// ---------------------------------------------------------------------------

struct Reference {
  Eigen::VectorXd u;
  int carrier = 0;
  MLMCSchedule schedule;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Average of n_ref MLMC estimates at level J_max + 1 with (kappa_ref, L0_ref),
/// drawn from the reference stream domain.
template <class Experiment>
Reference build_reference(Experiment& ex, const ExperimentConfig& c, const Executor& exec, const ProgressFn& log = {}) {
  Reference ref;
  ref.schedule = ex.schedule(c.kappa_ref, c.L0_ref, c.reference_level());
  ref.carrier = ex.carrier(ref.schedule);
  for (int r = 0; r < c.n_ref; ++r) {
    const RandomStream base(c.ref_seed, {StreamDomain::reference, static_cast<std::uint32_t>(r), 0, 0});
    MlmcResult res = ex.run(ref.schedule, base, exec);
    if (r == 0)
      ref.u = std::move(res.estimate);
    else
      ref.u += res.estimate;
    if (log) log("reference run " + std::to_string(r + 1) + "/" + std::to_string(c.n_ref) + " done");
  }
  ref.u /= static_cast<double>(c.n_ref);
  return ref;
}

struct ErrorEstimate {
  double error = 0.0;
  double model_work = 0.0;
  double wall_s = 0.0;
  std::vector<LevelStats> stats;  // of realization 0
};

/// sqrt of the mean over n_err realizations of |E_ref - E^J|^2_{H^1}, after
/// prolongating each estimate to the reference carrier.
template <class Experiment>
ErrorEstimate estimate_error(Experiment& ex, const ExperimentConfig& c, int J, const Reference& ref,
                             const Executor& exec) {
  const MLMCSchedule sc = ex.schedule(c.kappa, c.L0, J);
  ErrorEstimate out;
  double sum = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < c.n_err; ++r) {
    const auto real = static_cast<std::uint32_t>(J * c.n_err + r);
    MlmcResult res = ex.run(sc, RandomStream(c.seed, {StreamDomain::study, real, 0, 0}), exec);
    const Eigen::VectorXd d = ref.u - ex.transfer(res.estimate, ex.carrier(sc), ref.carrier);
    sum += ex.norm_sq(ref.carrier, d);
    if (r == 0) {
      out.stats = res.stats;
      out.model_work = res.model_work;
    }
  }
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.error = std::sqrt(sum / c.n_err);
  return out;
}

struct ConvergenceRow {
  int J = 0;
  double hJ = 0.0;
  std::int64_t dofs = 0;
  double error = 0.0;
  double work_model = 0.0;
  double wall_s = 0.0;

  friend bool operator==(const ConvergenceRow&, const ConvergenceRow&) = default;
};

/// OLS slope of log(error) against log(hJ) over the five rows with largest J.
inline double fit_rate(std::vector<ConvergenceRow> rows) {
  if (rows.size() < 2) throw std::invalid_argument("fit_rate: need at least two rows");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.J < b.J; });
  if (rows.size() > 5) rows.erase(rows.begin(), rows.end() - 5);
  double mx = 0.0, my = 0.0;
  for (const auto& r : rows) {
    if (!(r.hJ > 0.0) || !(r.error > 0.0)) throw std::invalid_argument("fit_rate: h and error must be positive");
    mx += std::log(r.hJ);
    my += std::log(r.error);
  }
  mx /= rows.size();
  my /= rows.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& r : rows) {
    const double dx = std::log(r.hJ) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(r.error) - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: degenerate fit, all h equal");
  return sxy / sxx;
}

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::vector<LevelStats> level_stats;  // finest J, realization 0
  double rate = std::numeric_limits<double>::quiet_NaN();
};

template <class Experiment>
ConvergenceResult run_convergence(Experiment& ex, const ExperimentConfig& c, const ProgressFn& log = {}) {
  c.validate();
  const Executor exec(c.workers);
  const Reference ref = build_reference(ex, c, exec, log);
  ConvergenceResult out;
  for (int J = c.J_min; J <= c.J_max; ++J) {
    const ErrorEstimate e = estimate_error(ex, c, J, ref, exec);
    ConvergenceRow row;
    row.J = J;
    row.hJ = ex.width(J);
    row.dofs = ex.dofs(J);
    row.error = e.error;
    row.work_model = e.model_work;
    row.wall_s = c.record_wall_time ? e.wall_s : 0.0;
    out.rows.push_back(row);
    out.level_stats = e.stats;
    if (!c.record_wall_time)
      for (auto& s : out.level_stats) s.wall_s = 0.0;
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "J=%d hJ=%.6g dofs=%lld error=%.6g (%.1f s)", J, row.hJ,
                    static_cast<long long>(row.dofs), row.error, e.wall_s);
      log(buf);
    }
  }
  if (out.rows.size() >= 2) out.rate = fit_rate(out.rows);
  return out;
}

inline ConvergenceResult run_convergence(const ExperimentConfig& c, const ProgressFn& log = {}) {
  c.validate();
  if (c.method == Method::fem) {
    FemExperiment ex(c);
    return run_convergence(ex, c, log);
  }
  SpectralExperiment ex(c);
  return run_convergence(ex, c, log);
}

// ---------------------------------------------------------------------------
// Output.

namespace detail {
inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
  os << "J,hJ,dofs,error,work_model,wall_s\n";
  for (const auto& r : rows)
    os << r.J << ',' << detail::fmt_real(r.hJ) << ',' << r.dofs << ',' << detail::fmt_real(r.error) << ','
       << detail::fmt_real(r.work_model) << ',' << detail::fmt_real(r.wall_s) << '\n';
}

inline std::vector<ConvergenceRow> read_convergence_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "J,hJ,dofs,error,work_model,wall_s")
    throw std::invalid_argument("read_convergence_csv: unexpected header");
  std::vector<ConvergenceRow> rows;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw std::invalid_argument("read_convergence_csv: expected 6 fields in '" + line + "'");
    ConvergenceRow r;
    r.J = std::stoi(f[0]);
    r.hJ = std::strtod(f[1].c_str(), nullptr);
    r.dofs = std::stoll(f[2]);
    r.error = std::strtod(f[3].c_str(), nullptr);
    r.work_model = std::strtod(f[4].c_str(), nullptr);
    r.wall_s = std::strtod(f[5].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

inline void write_level_stats_csv(std::ostream& os, const std::vector<LevelStats>& stats) {
  os << "j,h,L,M,mean_corr_h1,var_corr,work_model,work_wall_s\n";
  for (const auto& s : stats)
    os << s.j << ',' << detail::fmt_real(s.h) << ',' << s.L << ',' << s.M << ',' << detail::fmt_real(s.mean_corr_h1)
       << ',' << detail::fmt_real(s.var_corr) << ',' << detail::fmt_real(s.work_model) << ','
       << detail::fmt_real(s.wall_s) << '\n';
}

/// Log-log plot of error against hJ with guide lines of slope 0.5 and 1
/// through the coarsest point.
inline void write_convergence_svg(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
  const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  double x0 = -1, x1 = 0, y0 = -1, y1 = 0;
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows)
    if (r.hJ > 0 && r.error > 0) pts.emplace_back(std::log10(r.hJ), std::log10(r.error));
  if (!pts.empty()) {
    x0 = x1 = pts[0].first;
    y0 = y1 = pts[0].second;
    for (auto [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    x0 = std::floor(x0 * 2) / 2 - 0.25;
    x1 = std::ceil(x1 * 2) / 2 + 0.25;
    y0 = std::floor(y0 * 2) / 2 - 0.25;
    y1 = std::ceil(y1 * 2) / 2 + 0.25;
  }
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  os << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"black\"/>\n",
                ml, mt, W - ml - mr, H - mt - mb);
  os << buf;
  for (double t = std::ceil(x0); t <= x1; t += 1) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">1e%d</text>\n",
                  px(t), H - mb + 18, static_cast<int>(t));
    os << buf;
  }
  for (double t = std::ceil(y0); t <= y1; t += 1) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"end\">1e%d</text>\n",
                  ml - 6, py(t) + 4, static_cast<int>(t));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"13\" text-anchor=\"middle\">h_J</text>\n",
                ml + (W - ml - mr) / 2, H - 12);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.2f\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.2f)\">error</text>\n",
                mt + (H - mt - mb) / 2, mt + (H - mt - mb) / 2);
  os << buf;
  if (!pts.empty()) {
    const auto [ax, ay] = *std::max_element(pts.begin(), pts.end());
    const char* dash[] = {"6,4", "2,3"};
    int g = 0;
    for (double slope : {0.5, 1.0}) {
      // Clip the guide to the vertical range of the plot.
      double xa = x0, xb = ax;
      xa = std::max(xa, ax + (y0 - ay) / slope);
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"gray\" stroke-dasharray=\"%s\"/>\n",
                    px(xa), py(ay + slope * (xa - ax)), px(xb), py(ay + slope * (xb - ax)), dash[g]);
      os << buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" fill=\"gray\">slope %g</text>\n",
                    px(xa) + 4, py(ay + slope * (xa - ax)) - 4, slope);
      os << buf;
      ++g;
    }
    os << "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(pts[i].first), py(pts[i].second));
      os << buf;
    }
    os << "\"/>\n";
    for (auto [x, y] : pts) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#1f5fbf\"/>\n", px(x), py(y));
      os << buf;
    }
  }
  os << "</svg>\n";
}

namespace detail {
template <class Writer>
void write_file(const std::string& path, Writer&& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  w(os);
  os.flush();
  if (!os) throw std::runtime_error("write to " + path + " failed");
}
}  // namespace detail

/// Writes the CSV, SVG and level-stats files whose paths are non-empty.
inline void emit_outputs(const ConvergenceResult& res, const std::string& csv, const std::string& svg,
                         const std::string& levels = {}) {
  if (!csv.empty()) detail::write_file(csv, [&](std::ostream& os) { write_convergence_csv(os, res.rows); });
  if (!svg.empty()) detail::write_file(svg, [&](std::ostream& os) { write_convergence_svg(os, res.rows); });
  if (!levels.empty()) detail::write_file(levels, [&](std::ostream& os) { write_level_stats_csv(os, res.level_stats); });
}

}  // namespace sphmlmc
