#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphmlmc/legendre.hpp"

namespace sphmlmc {

using cplx = std::complex<double>;

/// Harmonic coefficients c_lm, 0 <= m <= l <= L, of a real field.
///
/// Negative orders are implied by c_{l,-m} = (-1)^m conj(c_lm) and never stored.
/// c_l0 is kept real.
class SHCoefficients {
 public:
  SHCoefficients() : SHCoefficients(0) {}
  explicit SHCoefficients(int L) : L_(L), c_(tri_size(L)) {
    if (L < 0) throw std::invalid_argument("SHCoefficients: negative band limit");
  }

  int band_limit() const noexcept { return L_; }
  std::size_t size() const noexcept { return c_.size(); }

  cplx operator()(int l, int m) const { return c_[tri_index(l, m)]; }

  void set(int l, int m, cplx v) {
    check(l, m);
    if (m == 0 && v.imag() != 0.0)
      throw std::invalid_argument("SHCoefficients: c_l0 must be real for a real field");
    c_[tri_index(l, m)] = v;
  }

  /// Any order -l <= m <= l, negative orders through conjugate symmetry.
  cplx at(int l, int m) const {
    if (l < 0 || l > L_ || std::abs(m) > l) throw std::out_of_range("SHCoefficients::at");
    if (m >= 0) return c_[tri_index(l, m)];
    const cplx c = std::conj(c_[tri_index(l, -m)]);
    return (m % 2 == 0) ? c : -c;
  }

  const std::vector<cplx>& raw() const noexcept { return c_; }

  /// Real degrees of freedom of the full basis H_{0:L}.
  static constexpr std::size_t real_dimension(int L) noexcept {
    return static_cast<std::size_t>(L + 1) * static_cast<std::size_t>(L + 1);
  }

  friend bool operator==(const SHCoefficients&, const SHCoefficients&) = default;

 private:
  void check(int l, int m) const {
    if (l < 0 || l > L_ || m < 0 || m > l) throw std::out_of_range("SHCoefficients: index out of range");
  }

  int L_;
  std::vector<cplx> c_;
};

// ---------------------------------------------------------------------------
// Real orthonormal basis
//
// {Y_l0, sqrt2 Re Y_lm, sqrt2 Im Y_lm (m >= 1)}, ordered by l, then m = 0, then
// the cosine parts m = 1..l, then the sine parts m = 1..l. Degree l occupies the
// index range [l^2, (l+1)^2). A field with coefficients c_lm has real coordinates
//   r_l0 = c_l0,  r_lm^cos = sqrt2 Re c_lm,  r_lm^sin = -sqrt2 Im c_lm.

enum class RealPart { cosine, sine };

constexpr std::size_t real_index(int l, int m, RealPart part = RealPart::cosine) noexcept {
  const std::size_t base = static_cast<std::size_t>(l) * static_cast<std::size_t>(l);
  if (m == 0) return base;
  return base + static_cast<std::size_t>(m) + (part == RealPart::sine ? static_cast<std::size_t>(l) : 0);
}

/// Real coordinates for degrees l_min..L (index shifted by l_min^2).
inline Eigen::VectorXd to_real_basis(const SHCoefficients& c, int l_min = 0) {
  const int L = c.band_limit();
  const std::size_t off = static_cast<std::size_t>(l_min) * l_min;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(SHCoefficients::real_dimension(L) - off));
  const double rt2 = std::numbers::sqrt2;
  for (int l = l_min; l <= L; ++l) {
    r[real_index(l, 0) - off] = c(l, 0).real();
    for (int m = 1; m <= l; ++m) {
      r[real_index(l, m, RealPart::cosine) - off] = rt2 * c(l, m).real();
      r[real_index(l, m, RealPart::sine) - off] = -rt2 * c(l, m).imag();
    }
  }
  return r;
}

inline SHCoefficients from_real_basis(int L, const Eigen::Ref<const Eigen::VectorXd>& r, int l_min = 0) {
  const std::size_t off = static_cast<std::size_t>(l_min) * l_min;
  if (static_cast<std::size_t>(r.size()) + off != SHCoefficients::real_dimension(L))
    throw std::invalid_argument("from_real_basis: vector length does not match band limit");
  SHCoefficients c(L);
  const double inv_rt2 = 1.0 / std::numbers::sqrt2;
  for (int l = l_min; l <= L; ++l) {
    c.set(l, 0, r[real_index(l, 0) - off]);
    for (int m = 1; m <= l; ++m)
      c.set(l, m, cplx(inv_rt2 * r[real_index(l, m, RealPart::cosine) - off],
                       -inv_rt2 * r[real_index(l, m, RealPart::sine) - off]));
  }
  return c;
}

// ---------------------------------------------------------------------------

/// ||(Id - Delta)^{s/2} f||_{L^2}, negative orders included through symmetry.
inline double sobolev_norm(const SHCoefficients& c, double s) {
  double sum = 0.0;
  for (int l = 0; l <= c.band_limit(); ++l) {
    double shell = std::norm(c(l, 0));
    for (int m = 1; m <= l; ++m) shell += 2.0 * std::norm(c(l, m));
    sum += std::pow(1.0 + static_cast<double>(l) * (l + 1), s) * shell;
  }
  return std::sqrt(sum);
}

/// Truncation Pi_L onto H_{0:L}.
inline SHCoefficients project(const SHCoefficients& c, int L) {
  if (L < 0 || L > c.band_limit())
    throw std::invalid_argument("project: target band limit must lie in [0, band_limit]");
  SHCoefficients out(L);
  for (int l = 0; l <= L; ++l)
    for (int m = 0; m <= l; ++m) out.set(l, m, c(l, m));
  return out;
}

/// Zero-padding to a larger band limit (inverse of project on H_{0:L}).
inline SHCoefficients extend(const SHCoefficients& c, int L) {
  if (L < c.band_limit()) throw std::invalid_argument("extend: target band limit below current");
  SHCoefficients out(L);
  for (int l = 0; l <= c.band_limit(); ++l)
    for (int m = 0; m <= l; ++m) out.set(l, m, c(l, m));
  return out;
}

/// Scales degree l by (1 + l(l+1))^{r/2}, i.e. applies (Id - Delta)^{r/2}.
inline SHCoefficients apply_bessel_potential(const SHCoefficients& c, double r) {
  SHCoefficients out(c.band_limit());
  for (int l = 0; l <= c.band_limit(); ++l) {
    const double f = std::pow(1.0 + static_cast<double>(l) * (l + 1), 0.5 * r);
    for (int m = 0; m <= l; ++m) out.set(l, m, f * c(l, m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: rows "l,m,re,im" for 0 <= m <= l, preceded by a header line.

inline void write_coefficients_csv(std::ostream& os, const SHCoefficients& c) {
  os << "l,m,re,im\n";
  char buf[96];
  for (int l = 0; l <= c.band_limit(); ++l)
    for (int m = 0; m <= l; ++m) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", l, m, c(l, m).real(), c(l, m).imag());
      os << buf;
    }
}

inline SHCoefficients read_coefficients_csv(std::istream& is) {
  struct Row {
    int l, m;
    double re, im;
  };
  std::vector<Row> rows;
  std::string line;
  int L = 0;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("l,", 0) == 0) continue;
    Row r{};
    char c1, c2, c3;
    std::istringstream ss(line);
    if (!(ss >> r.l >> c1 >> r.m >> c2 >> r.re >> c3 >> r.im) || c1 != ',' || c2 != ',' || c3 != ',')
      throw std::runtime_error("read_coefficients_csv: malformed line " + std::to_string(lineno));
    if (r.l < 0 || r.m < 0 || r.m > r.l)
      throw std::runtime_error("read_coefficients_csv: invalid index on line " + std::to_string(lineno));
    L = std::max(L, r.l);
    rows.push_back(r);
  }
  SHCoefficients c(L);
  for (const auto& r : rows) c.set(r.l, r.m, cplx(r.re, r.im));
  return c;
}

}  // namespace sphmlmc
