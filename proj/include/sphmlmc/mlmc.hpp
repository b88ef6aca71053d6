#pragma once

// Monte Carlo and multilevel Monte Carlo estimation of E(u) in H^1/R.
//
// Samples are Eigen vectors in a level-dependent carrier (FEM nodal values or
// real spectral coefficients); the problem object supplies the H^1 seminorm and
// the exact prolongation between consecutive carriers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphmlmc/parallel.hpp"
#include "sphmlmc/rng.hpp"

namespace sphmlmc {

/// Cost of one sample at mesh width h: h^{-2 eta1} log(h^{-2})^{eta2}.
/// The logarithm is clamped below at 1 so that widths h >= 1/sqrt(e) stay finite and positive.
struct WorkModel {
  double eta1 = 1.0;
  double eta2 = 0.0;

  double cost(double h) const {
    const double c = std::pow(h, -2.0 * eta1);
    if (eta2 == 0.0) return c;
    return c * std::pow(std::max(std::log(1.0 / (h * h)), 1.0), eta2);
  }
};

struct LevelSpec {
  int j = 0;
  double h = 0.0;
  int L = 0;
  std::int64_t M = 0;
};

struct MLMCSchedule {
  int J = 0;
  double h0 = 1.0;
  int L0 = 1;
  double s = 0.0;
  int k = 1;
  double s_eff = 0.0;
  double kappa = 1.0;
  double epsilon = 0.2;
  WorkModel work;
  std::vector<LevelSpec> levels;

  const LevelSpec& operator[](int j) const { return levels.at(j); }
  std::int64_t total_samples() const {
    std::int64_t n = 0;
    for (const auto& l : levels) n += l.M;
    return n;
  }
};

namespace detail {
inline std::int64_t ceil_count(double x) {
  // Guards against values such as 4 + 1 ulp produced by pow().
  const double c = std::ceil(x * (1.0 - 1e-12));
  if (!(c < 9.0e18)) throw std::overflow_error("build_schedule: sample count overflows");
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(c));
}
}  // namespace detail

/// h_j = 2^{-j} h0, L_j = 2^j L0, M_0 = ceil(h_J^{-2s} kappa),
/// M_j = ceil((h_{j-1}/h_J)^{2s} j^{1+eps} kappa), with s replaced by min(s, k).
inline MLMCSchedule build_schedule(double h0, int L0, int J, double s, int k, double kappa, double epsilon,
                                   WorkModel work = {}) {
  if (!(h0 > 0.0)) throw std::invalid_argument("build_schedule: h0 must be positive");
  if (L0 < 1) throw std::invalid_argument("build_schedule: L0 must be >= 1");
  if (J < 0 || J > 30) throw std::invalid_argument("build_schedule: J must be in [0, 30]");
  if (!(s > 0.0)) throw std::invalid_argument("build_schedule: s must be positive");
  if (k < 1) throw std::invalid_argument("build_schedule: k must be >= 1");
  if (!(kappa > 0.0)) throw std::invalid_argument("build_schedule: kappa must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_schedule: epsilon must be positive");
  if (!(work.eta1 > 0.0) || !(work.eta2 >= 0.0)) throw std::invalid_argument("build_schedule: need eta1 > 0, eta2 >= 0");

  MLMCSchedule sc;
  sc.J = J;
  sc.h0 = h0;
  sc.L0 = L0;
  sc.s = s;
  sc.k = k;
  sc.s_eff = std::min(s, static_cast<double>(k));
  sc.kappa = kappa;
  sc.epsilon = epsilon;
  sc.work = work;
  if (J >= 1 && kappa < std::pow(2.0, -2.0 * sc.s_eff))
    throw std::invalid_argument("build_schedule: kappa must be >= 2^(-2 s) = " +
                                std::to_string(std::pow(2.0, -2.0 * sc.s_eff)) + " when J >= 1");
  if (static_cast<double>(L0) * std::ldexp(1.0, J) > 65535.0)
    throw std::invalid_argument("build_schedule: L_J exceeds 65535");

  const double hJ = std::ldexp(h0, -J);
  for (int j = 0; j <= J; ++j) {
    LevelSpec lv;
    lv.j = j;
    lv.h = std::ldexp(h0, -j);
    lv.L = L0 << j;
    if (j == 0) {
      lv.M = detail::ceil_count(std::pow(hJ, -2.0 * sc.s_eff) * kappa);
    } else {
      const double hprev = std::ldexp(h0, -(j - 1));
      lv.M = detail::ceil_count(std::pow(hprev / hJ, 2.0 * sc.s_eff) * std::pow(j, 1.0 + epsilon) * kappa);
    }
    sc.levels.push_back(lv);
  }
  return sc;
}

/// Model work of level j: M_j (c(h_j) + c(h_{j-1})), or M_0 c(h_0) at j = 0.
inline double level_work(const MLMCSchedule& sc, int j) {
  const LevelSpec& lv = sc[j];
  double c = sc.work.cost(lv.h);
  if (j > 0) c += sc.work.cost(sc[j - 1].h);
  return static_cast<double>(lv.M) * c;
}

inline double work_accounting(const MLMCSchedule& sc) {
  double w = 0.0;
  for (int j = 0; j <= sc.J; ++j) w += level_work(sc, j);
  return w;
}

// ---------------------------------------------------------------------------

/// A sample failed; carries the level and sample index.
class SampleError : public std::runtime_error {
 public:
  SampleError(int level, std::int64_t sample, const std::string& what)
      : std::runtime_error("level " + std::to_string(level) + ", sample " + std::to_string(sample) + ": " + what),
        level_(level),
        sample_(sample) {}

  int level() const noexcept { return level_; }
  std::int64_t sample() const noexcept { return sample_; }

 private:
  int level_;
  std::int64_t sample_;
};

struct McEstimate {
  Eigen::VectorXd mean;
  double variance = 0.0;  // (1/(M-1)) sum |v_i - mean|^2, 0 for M = 1
  std::int64_t M = 0;
};

inline constexpr std::int64_t kReductionBlock = 64;

/// E_M(v) = (1/M) sum v_i with sample(i, worker) -> VectorXd.
///
/// Samples are computed in blocks of kReductionBlock; each block is reduced in
/// index order and the blocks are merged left to right (Chan et al.), so the
/// result does not depend on the number of workers.
template <class Sampler, class NormSq>
McEstimate mc_estimate(Sampler&& sample, std::int64_t M, NormSq&& norm_sq, const Executor& ex = Executor(1)) {
  if (M < 1) throw std::invalid_argument("mc_estimate: M must be >= 1");
  McEstimate est;
  est.M = M;
  double m2 = 0.0;
  std::int64_t n = 0;
  std::vector<Eigen::VectorXd> block;
  for (std::int64_t start = 0; start < M; start += kReductionBlock) {
    const std::int64_t cnt = std::min(kReductionBlock, M - start);
    block.assign(cnt, Eigen::VectorXd());
    ex.parallel_for(static_cast<std::size_t>(cnt), [&](std::size_t i, int worker) {
      block[i] = sample(start + static_cast<std::int64_t>(i), worker);
    });
    for (const auto& v : block)
      if (v.size() != block[0].size()) throw std::invalid_argument("mc_estimate: samples differ in size");

    Eigen::VectorXd bmean = block[0];
    for (std::int64_t i = 1; i < cnt; ++i) bmean += block[i];
    bmean /= static_cast<double>(cnt);
    double bm2 = 0.0;
    for (const auto& v : block) bm2 += norm_sq(Eigen::VectorXd(v - bmean));

    if (n == 0) {
      est.mean = bmean;
      m2 = bm2;
    } else {
      if (bmean.size() != est.mean.size()) throw std::invalid_argument("mc_estimate: samples differ in size");
      const double nn = static_cast<double>(n + cnt);
      const Eigen::VectorXd delta = bmean - est.mean;
      est.mean += delta * (static_cast<double>(cnt) / nn);
      m2 += bm2 + norm_sq(delta) * (static_cast<double>(n) * static_cast<double>(cnt) / nn);
    }
    n += cnt;
  }
  est.variance = M > 1 ? m2 / static_cast<double>(M - 1) : 0.0;
  return est;
}

struct LevelStats {
  int j = 0;
  double h = 0.0;
  int L = 0;
  std::int64_t M = 0;
  double mean_corr_h1 = 0.0;  // |E_M(u_j - u_{j-1})|_{H^1}
  double var_corr = 0.0;      // sample variance of the correction in H^1/R
  double work_model = 0.0;
  double wall_s = 0.0;
};

struct MlmcResult {
  Eigen::VectorXd estimate;                // on the level-J carrier
  std::vector<Eigen::VectorXd> level_means;  // E_{M_j}(u_j - u_{j-1}) on the level-j carrier
  std::vector<LevelStats> stats;
  double model_work = 0.0;
};

/// E^J = sum_j E_{M_j}(u_j - u_{j-1}) with u_{-1} = 0.
///
/// Problem provides
///   VectorXd correction(const LevelSpec&, const RandomStream& omega, int worker)
///   double norm_sq(int j, const VectorXd&)           (squared H^1 seminorm on level j)
///   VectorXd prolongate(int j, const VectorXd&)       (level j -> level j + 1, exact)
/// Sample i of level j draws omega = base.with_level(j).with_sample(i).
template <class Problem>
MlmcResult mlmc_estimate(Problem& problem, const MLMCSchedule& sc, const RandomStream& base,
                         const Executor& ex = Executor(1)) {
  MlmcResult res;
  for (int j = 0; j <= sc.J; ++j) {
    const LevelSpec& lv = sc[j];
    const RandomStream level_stream = base.with_level(static_cast<std::uint32_t>(j));
    if (lv.M > 0xFFFFFFFFll) throw std::invalid_argument("mlmc_estimate: too many samples for the stream index");
    const auto t0 = std::chrono::steady_clock::now();
    auto sampler = [&](std::int64_t i, int worker) -> Eigen::VectorXd {
      try {
        return problem.correction(lv, level_stream.with_sample(static_cast<std::uint32_t>(i)), worker);
      } catch (const SampleError&) {
        throw;
      } catch (const std::exception& e) {
        throw SampleError(j, i, e.what());
      }
    };
    auto nsq = [&](const Eigen::VectorXd& v) { return problem.norm_sq(j, v); };
    McEstimate est = mc_estimate(sampler, lv.M, nsq, ex);
    const auto t1 = std::chrono::steady_clock::now();

    LevelStats st;
    st.j = j;
    st.h = lv.h;
    st.L = lv.L;
    st.M = lv.M;
    st.mean_corr_h1 = std::sqrt(problem.norm_sq(j, est.mean));
    st.var_corr = est.variance;
    st.work_model = level_work(sc, j);
    st.wall_s = std::chrono::duration<double>(t1 - t0).count();
    res.stats.push_back(st);
    res.model_work += st.work_model;

    if (j == 0) {
      res.estimate = est.mean;
    } else {
      res.estimate = problem.prolongate(j - 1, res.estimate);
      if (res.estimate.size() != est.mean.size())
        throw std::logic_error("mlmc_estimate: prolongation does not match the level carrier");
      res.estimate += est.mean;
    }
    res.level_means.push_back(std::move(est.mean));
  }
  return res;
}

}  // namespace sphmlmc
