#pragma once

// Isotropic Gaussian random fields on S^2 through truncated Karhunen-Loeve
// expansions T^L = sum_{l <= L} sum_m a_lm Y_lm, and the lognormal fields
// a^L = exp(T^L) built from them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphmlmc/errors.hpp"
#include "sphmlmc/quad_grid.hpp"
#include "sphmlmc/rng.hpp"
#include "sphmlmc/sh_coefficients.hpp"
#include "sphmlmc/transform.hpp"

namespace sphmlmc {

/// Nonnegative per-degree variances A_0..A_{L_max}.
class AngularPowerSpectrum {
 public:
  AngularPowerSpectrum() = default;

  explicit AngularPowerSpectrum(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("AngularPowerSpectrum: empty");
    for (double a : values_)
      if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("AngularPowerSpectrum: A_l must be finite and >= 0");
  }

  /// A_l = (1 + l)^{-alpha}.
  static AngularPowerSpectrum power_law(double alpha, int L_max) {
    if (!(alpha > 2.0)) throw std::invalid_argument("power_law_spectrum: alpha must exceed 2");
    if (L_max < 0) throw std::invalid_argument("power_law_spectrum: negative L_max");
    std::vector<double> v(L_max + 1);
    for (int l = 0; l <= L_max; ++l) v[l] = std::pow(1.0 + l, -alpha);
    AngularPowerSpectrum s(std::move(v));
    s.alpha_ = alpha;
    return s;
  }

  int max_degree() const noexcept { return static_cast<int>(values_.size()) - 1; }
  double operator[](int l) const { return l <= max_degree() ? values_[l] : 0.0; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Decay exponent of the power-law family, if this spectrum is one.
  std::optional<double> alpha() const noexcept { return alpha_; }

  /// Any beta below this keeps sum_l A_l l^{1+beta} finite (power law only).
  std::optional<double> beta_bound() const noexcept {
    if (!alpha_) return std::nullopt;
    return *alpha_ - 2.0;
  }

  /// sum_l A_l (2l+1) / (4 pi) over l <= L: pointwise variance of T^L (zero mean).
  double pointwise_variance(int L) const {
    double v = 0.0;
    for (int l = 0; l <= std::min(L, max_degree()); ++l) v += values_[l] * (2.0 * l + 1.0);
    return v / (4.0 * std::numbers::pi);
  }

 private:
  std::vector<double> values_;
  std::optional<double> alpha_;
};

inline AngularPowerSpectrum power_law_spectrum(double alpha, int L_max) {
  return AngularPowerSpectrum::power_law(alpha, L_max);
}

/// sum_{L < l <= L_max} A_l l^{1+eps}.
inline double truncation_tail(const AngularPowerSpectrum& spec, int L, double eps) {
  if (auto beta = spec.beta_bound(); beta && !(eps < *beta))
    throw std::invalid_argument("truncation_tail: eps must be below alpha - 2");
  double sum = 0.0;
  // Summed from the far end so the small terms accumulate first.
  for (int l = spec.max_degree(); l > std::max(L, 0); --l) sum += spec[l] * std::pow(static_cast<double>(l), 1.0 + eps);
  return sum;
}

/// Draws a_lm for 0 <= m <= l <= L.
///
/// a_00 ~ N(2 sqrt(pi) mean, A_0); a_l0 ~ N(0, A_l); for m >= 1 the real and
/// imaginary parts are independent N(0, A_l / 2). Coefficient (l, m) depends only
/// on the stream and (l, m), so raising L extends a draw without changing it.
inline SHCoefficients sample_coeffs(const AngularPowerSpectrum& spec, double mean, int L, const RandomStream& stream) {
  if (L < 0 || L > spec.max_degree())
    throw std::invalid_argument("sample_coeffs: L must lie in [0, spectrum max degree]");
  SHCoefficients c(L);
  for (int l = 0; l <= L; ++l) {
    const double a = spec[l];
    if (a == 0.0) {
      if (l == 0) c.set(0, 0, 2.0 * std::sqrt(std::numbers::pi) * mean);
      continue;
    }
    const double sd = std::sqrt(a);
    const double sd_half = std::sqrt(0.5 * a);
    for (int m = 0; m <= l; ++m) {
      const auto [z0, z1] = stream.gaussians(l, m);
      if (m == 0) {
        const double shift = l == 0 ? 2.0 * std::sqrt(std::numbers::pi) * mean : 0.0;
        c.set(l, 0, shift + sd * z0);
      } else {
        c.set(l, m, cplx(sd_half * z0, sd_half * z1));
      }
    }
  }
  return c;
}

/// One lognormal realization on a grid: T^L, a^L = exp(T^L) and its extrema.
struct FieldSample {
  SHCoefficients coeffs;
  GridField log_field;  // T^L
  GridField field;      // a^L
  double a_min = 0.0;   // min over grid nodes
  double a_max = 0.0;   // max over grid nodes
};

/// exp() arguments above this are rejected rather than overflowing.
inline constexpr double kMaxLogCoefficient = 700.0;

inline FieldSample synthesize_lognormal(const SHCoefficients& coeffs, const QuadGrid& grid) {
  if (!grid.resolves(coeffs.band_limit()))
    throw ResolutionError("synthesize_lognormal: grid does not resolve degree " + std::to_string(coeffs.band_limit()));
  FieldSample s;
  s.coeffs = coeffs;
  s.log_field = sht_inverse(coeffs, grid);
  s.field = GridField(grid);
  s.a_min = std::numeric_limits<double>::infinity();
  s.a_max = 0.0;
  for (std::size_t k = 0; k < s.log_field.values.size(); ++k) {
    const double t = s.log_field.values[k];
    if (!(std::abs(t) <= kMaxLogCoefficient))
      throw OverflowError("synthesize_lognormal: |T^L| = " + std::to_string(t) + " exceeds " +
                          std::to_string(kMaxLogCoefficient));
    const double a = std::exp(t);
    s.field.values[k] = a;
    s.a_min = std::min(s.a_min, a);
    s.a_max = std::max(s.a_max, a);
  }
  return s;
}

/// Monte Carlo estimate of E[max_x |a^{L_big} - a^{L_small}|^p]^{1/p} over grid
/// nodes, with both fields built from the same coefficient draw.
inline double empirical_sup_error(const AngularPowerSpectrum& spec, double mean, int L_small, int L_big, int n_samples,
                                  const QuadGrid& grid, const RandomStream& base, double p = 2.0) {
  if (L_small > L_big) throw std::invalid_argument("empirical_sup_error: L_small must not exceed L_big");
  if (n_samples < 1) throw std::invalid_argument("empirical_sup_error: need at least one sample");
  if (L_small == L_big) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const RandomStream stream = base.with_sample(static_cast<std::uint32_t>(i));
    const SHCoefficients big = sample_coeffs(spec, mean, L_big, stream);
    const GridField t_big = sht_inverse(big, grid);
    const GridField t_small = sht_inverse(project(big, L_small), grid);
    double sup = 0.0;
    for (std::size_t k = 0; k < t_big.values.size(); ++k)
      sup = std::max(sup, std::abs(std::exp(t_big.values[k]) - std::exp(t_small.values[k])));
    acc += std::pow(sup, p);
  }
  return std::pow(acc / n_samples, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Spectrum CSV: header "l,A_l", one row per degree starting at 0.

inline void write_spectrum_csv(std::ostream& os, const AngularPowerSpectrum& spec) {
  os << "l,A_l\n";
  char buf[64];
  for (int l = 0; l <= spec.max_degree(); ++l) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", l, spec[l]);
    os << buf;
  }
}

inline AngularPowerSpectrum read_spectrum_csv(std::istream& is) {
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("l,", 0) == 0) continue;
    std::istringstream ss(line);
    int l;
    char comma;
    double a;
    if (!(ss >> l >> comma >> a) || comma != ',')
      throw std::runtime_error("read_spectrum_csv: malformed line " + std::to_string(lineno));
    if (l != static_cast<int>(v.size()))
      throw std::runtime_error("read_spectrum_csv: degrees must be consecutive from 0 (line " + std::to_string(lineno) + ")");
    v.push_back(a);
  }
  return AngularPowerSpectrum(std::move(v));
}

}  // namespace sphmlmc
