#pragma once

// Associated Legendre functions with the Condon-Shortley phase.
//
// Two families are provided:
//   * P_lm(x): the unnormalized functions (-1)^m (1-x^2)^{m/2} d^m/dx^m P_l(x),
//     which overflow for large degree and exist mostly for checking.
//   * Pbar_lm(x) = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_lm(x): the orthonormalized
//     functions, so that Y_lm(theta, phi) = Pbar_lm(cos theta) e^{i m phi}.
//     These are what every transform and evaluator uses.
//
// Tables are stored triangularly: entry (l, m) with 0 <= m <= l lives at
// tri_index(l, m).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphmlmc {

constexpr std::size_t tri_index(int l, int m) noexcept {
  return static_cast<std::size_t>(l) * static_cast<std::size_t>(l + 1) / 2 +
         static_cast<std::size_t>(m);
}

constexpr std::size_t tri_size(int L) noexcept {
  return static_cast<std::size_t>(L + 1) * static_cast<std::size_t>(L + 2) / 2;
}

/// Unnormalized P_lm(rho) for 0 <= m <= l <= L by the classical upward recurrence.
inline std::vector<double> assoc_legendre_all(int L, double rho) {
  if (L < 0) throw std::invalid_argument("assoc_legendre_all: negative degree");
  if (!(std::abs(rho) <= 1.0))
    throw std::domain_error("assoc_legendre_all: |rho| > 1 (rho = " + std::to_string(rho) + ")");

  std::vector<double> p(tri_size(L), 0.0);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  double pmm = 1.0;
  for (int m = 0; m <= L; ++m) {
    if (m > 0) pmm *= -static_cast<double>(2 * m - 1) * s;
    p[tri_index(m, m)] = pmm;
    if (m == L) break;
    double p0 = pmm;
    double p1 = rho * static_cast<double>(2 * m + 1) * pmm;
    p[tri_index(m + 1, m)] = p1;
    for (int l = m + 2; l <= L; ++l) {
      const double p2 = (rho * static_cast<double>(2 * l - 1) * p1 -
                         static_cast<double>(l + m - 1) * p0) /
                        static_cast<double>(l - m);
      p[tri_index(l, m)] = p2;
      p0 = p1;
      p1 = p2;
    }
  }
  return p;
}

/// Normalization sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) linking P_lm to Pbar_lm.
inline double legendre_normalization(int l, int m) {
  const double log_n = 0.5 * (std::log((2.0 * l + 1.0) / (4.0 * std::numbers::pi)) +
                              std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0));
  return std::exp(log_n);
}

/// Precomputed coefficients of the orthonormalized recurrence up to degree L.
///
///   Pbar_00        = 1 / sqrt(4 pi)
///   Pbar_mm        = -diag(m) sin(theta) Pbar_{m-1,m-1}
///   Pbar_{m+1,m}   = sub(m) x Pbar_mm
///   Pbar_lm        = a(l,m) x Pbar_{l-1,m} - ab(l,m) Pbar_{l-2,m}
///
/// a and ab are stored column by column (fixed m, l = m..L contiguous) so that
/// inner loops over l stream through memory.
class LegendreRecurrence {
 public:
  LegendreRecurrence() : LegendreRecurrence(0) {}

  explicit LegendreRecurrence(int L) : L_(L) {
    if (L < 0) throw std::invalid_argument("LegendreRecurrence: negative degree");
    diag_.resize(L + 1);
    sub_.resize(L + 1);
    a_.resize(tri_size(L));
    ab_.resize(tri_size(L));
    for (int m = 0; m <= L; ++m) {
      diag_[m] = m == 0 ? 1.0 : std::sqrt((2.0 * m + 1.0) / (2.0 * m));
      sub_[m] = std::sqrt(2.0 * m + 3.0);
      for (int l = m + 2; l <= L; ++l) {
        const double l2 = static_cast<double>(l) * l;
        const double m2 = static_cast<double>(m) * m;
        const double a = std::sqrt((4.0 * l2 - 1.0) / (l2 - m2));
        const double lm1 = static_cast<double>(l - 1);
        const double b = std::sqrt((lm1 * lm1 - m2) / (4.0 * lm1 * lm1 - 1.0));
        a_[col_index(l, m)] = a;
        ab_[col_index(l, m)] = a * b;
      }
    }
  }

  int band_limit() const noexcept { return L_; }
  double diag(int m) const noexcept { return diag_[m]; }
  double sub(int m) const noexcept { return sub_[m]; }
  double a(int l, int m) const noexcept { return a_[col_index(l, m)]; }
  double ab(int l, int m) const noexcept { return ab_[col_index(l, m)]; }

  /// Pointers to a(l, m), ab(l, m) for l = m, m+1, ..., L (first two unused).
  const double* a_column(int m) const noexcept { return a_.data() + col_offset(m); }
  const double* ab_column(int m) const noexcept { return ab_.data() + col_offset(m); }

  static constexpr double p00() noexcept { return 0.28209479177387814347; }  // 1/sqrt(4 pi)

  /// Pbar_lm(x) for all 0 <= m <= l <= L, where s = sqrt(1 - x^2) >= 0.
  void fill(double x, double s, std::span<double> out) const { fill_impl(x, s, out, false); }

  /// Pbar_lm(x) / s for m >= 1 (finite at the poles); entries with m = 0 are zero.
  void fill_over_sin(double x, double s, std::span<double> out) const { fill_impl(x, s, out, true); }

 private:
  std::size_t col_offset(int m) const noexcept {
    return static_cast<std::size_t>(m) * (L_ + 1) - static_cast<std::size_t>(m) * (m - 1) / 2;
  }
  std::size_t col_index(int l, int m) const noexcept { return col_offset(m) + static_cast<std::size_t>(l - m); }

  void fill_impl(double x, double s, std::span<double> out, bool divide_by_sin) const {
    double pmm = p00();
    for (int m = 0; m <= L_; ++m) {
      double seed;
      if (m == 0) {
        seed = divide_by_sin ? 0.0 : pmm;
      } else {
        // Pbar_mm / s = -diag(m) Pbar_{m-1,m-1}: the sin^m factor absorbs the division.
        seed = divide_by_sin ? -diag_[m] * pmm : -diag_[m] * s * pmm;
        pmm *= -diag_[m] * s;
      }
      out[tri_index(m, m)] = seed;
      if (m == L_) break;
      double p0 = seed;
      double p1 = sub_[m] * x * seed;
      out[tri_index(m + 1, m)] = p1;
      const double* a = a_column(m);
      const double* ab = ab_column(m);
      for (int l = m + 2; l <= L_; ++l) {
        const double p2 = a[l - m] * x * p1 - ab[l - m] * p0;
        out[tri_index(l, m)] = p2;
        p0 = p1;
        p1 = p2;
      }
    }
  }

  int L_;
  std::vector<double> diag_, sub_, a_, ab_;
};

/// Orthonormalized Legendre values together with theta-derivatives and the
/// pole-safe quotient Pbar_lm / sin(theta), all at a single colatitude.
struct LegendreValues {
  int L = 0;
  std::vector<double> p;       // Pbar_lm(cos theta)
  std::vector<double> dp;      // d/dtheta Pbar_lm(cos theta)
  std::vector<double> p_sin;   // Pbar_lm(cos theta) / sin theta, m >= 1

  double value(int l, int m) const { return p[tri_index(l, m)]; }
  double dtheta(int l, int m) const { return dp[tri_index(l, m)]; }
  double over_sin(int l, int m) const { return p_sin[tri_index(l, m)]; }
};

/// Fills `out` for degree rec.band_limit() at colatitude theta.
inline void legendre_values(const LegendreRecurrence& rec, double cos_t, double sin_t, LegendreValues& out) {
  const int L = rec.band_limit();
  out.L = L;
  out.p.resize(tri_size(L));
  out.dp.resize(tri_size(L));
  out.p_sin.resize(tri_size(L));
  rec.fill(cos_t, sin_t, out.p);
  rec.fill_over_sin(cos_t, sin_t, out.p_sin);
  // Ladder-operator identity, free of 1/sin(theta):
  //   d/dtheta Pbar_lm = (sqrt((l-m)(l+m+1)) Pbar_{l,m+1} - sqrt((l+m)(l-m+1)) Pbar_{l,m-1}) / 2
  // with Pbar_{l,-1} = -Pbar_{l,1}.
  for (int l = 0; l <= L; ++l) {
    for (int m = 0; m <= l; ++m) {
      const double up = m < l ? out.p[tri_index(l, m + 1)] : 0.0;
      const double cu = std::sqrt(static_cast<double>(l - m) * (l + m + 1));
      if (m == 0) {
        out.dp[tri_index(l, 0)] = cu * up;
      } else {
        const double cd = std::sqrt(static_cast<double>(l + m) * (l - m + 1));
        out.dp[tri_index(l, m)] = 0.5 * (cu * up - cd * out.p[tri_index(l, m - 1)]);
      }
    }
  }
}

inline LegendreValues legendre_values(const LegendreRecurrence& rec, double theta) {
  LegendreValues v;
  legendre_values(rec, std::cos(theta), std::sin(theta), v);
  return v;
}

}  // namespace sphmlmc
