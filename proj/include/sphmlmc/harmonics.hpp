#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "sphmlmc/legendre.hpp"
#include "sphmlmc/sh_coefficients.hpp"

namespace sphmlmc {

using Vec3 = Eigen::Vector3d;

/// Tangent vector v_theta e_theta + v_phi e_phi in the orthonormal spherical frame.
struct TangentVector {
  double theta = 0.0;
  double phi = 0.0;

  double squared_norm() const noexcept { return theta * theta + phi * phi; }
};

/// Complex-valued tangent field value (gradient of a complex harmonic).
struct ComplexTangent {
  cplx theta;
  cplx phi;

  TangentVector real() const noexcept { return {theta.real(), phi.real()}; }
  TangentVector imag() const noexcept { return {theta.imag(), phi.imag()}; }
  /// v . conj(v)
  double squared_norm() const noexcept { return std::norm(theta) + std::norm(phi); }
};

inline Vec3 unit_vector(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

inline Vec3 e_theta(double theta, double phi) {
  return {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta)};
}

inline Vec3 e_phi(double /*theta*/, double phi) { return {-std::sin(phi), std::cos(phi), 0.0}; }

inline Vec3 to_cartesian(const TangentVector& v, double theta, double phi) {
  return v.theta * e_theta(theta, phi) + v.phi * e_phi(theta, phi);
}

/// (theta, phi) of a nonzero point, phi in [0, 2 pi).
inline std::pair<double, double> spherical_angles(const Vec3& x) {
  const double theta = std::atan2(std::hypot(x.x(), x.y()), x.z());
  double phi = std::atan2(x.y(), x.x());
  if (phi < 0.0) phi += 2.0 * std::numbers::pi;
  return {theta, phi};
}

namespace detail {
inline void check_lm(int l, int m, double theta) {
  if (l < 0 || m < 0 || m > l) throw std::domain_error("spherical harmonic index requires 0 <= m <= l");
  if (!(theta >= 0.0 && theta <= std::numbers::pi)) throw std::domain_error("colatitude outside [0, pi]");
}
}  // namespace detail

/// Y_lm(theta, phi) for 0 <= m <= l (Condon-Shortley phase).
inline cplx eval_ylm(int l, int m, double theta, double phi) {
  detail::check_lm(l, m, theta);
  const LegendreRecurrence rec(l);
  std::vector<double> p(tri_size(l));
  rec.fill(std::cos(theta), std::sin(theta), p);
  return p[tri_index(l, m)] * std::polar(1.0, m * phi);
}

/// Surface gradient of Y_lm as (d_theta Y, (1/sin theta) d_phi Y).
///
/// The phi component is i m Pbar_lm / sin(theta) e^{i m phi}, evaluated through
/// the sin^m factor of Pbar_lm, so the poles return the limit along the meridian phi.
inline ComplexTangent grad_ylm(int l, int m, double theta, double phi) {
  detail::check_lm(l, m, theta);
  const LegendreRecurrence rec(l);
  const LegendreValues v = legendre_values(rec, theta);
  const cplx e = std::polar(1.0, m * phi);
  return {v.dtheta(l, m) * e, cplx(0.0, m) * v.over_sin(l, m) * e};
}

// ---------------------------------------------------------------------------

/// Pointwise evaluation of band-limited real fields at arbitrary points.
///
/// Points are given as nonzero vectors in R^3 and radially projected. Points
/// sharing |cos theta| and sin theta bit for bit (mirror images in the
/// coordinate planes) share one Legendre recurrence, split into the parts with
/// l + m even and odd; the recurrence runs over a batch of such groups in
/// lockstep so the inner loop vectorizes.
class FieldEvaluator {
 public:
  static constexpr int lanes = 8;
  static constexpr int groups = 2;
  static constexpr int batch = lanes * groups;

 private:
  struct Polar {
    double ax, s, sign, cp, sp;
  };

 public:
  /// Points in polar form, sorted so that points sharing a recurrence are adjacent.
  class Plan {
   public:
    Plan() = default;
    explicit Plan(std::span<const Vec3> points) {
      const std::size_t n = points.size();
      std::vector<Polar> pol(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = points[i];
        const double r = p.norm();
        const double rho = std::hypot(p.x(), p.y());
        const double x = p.z() / r;
        pol[i] = {std::abs(x), rho / r, std::signbit(x) ? -1.0 : 1.0, rho > 0.0 ? p.x() / rho : 1.0,
                  rho > 0.0 ? p.y() / rho : 0.0};
      }
      index_.resize(n);
      for (std::size_t i = 0; i < n; ++i) index_[i] = static_cast<std::uint32_t>(i);
      std::sort(index_.begin(), index_.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (pol[a].ax != pol[b].ax) return pol[a].ax < pol[b].ax;
        if (pol[a].s != pol[b].s) return pol[a].s < pol[b].s;
        return a < b;
      });
      pol_.resize(n);
      group_.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        pol_[k] = pol[index_[k]];
        if (k == 0 || pol_[k].ax != pol_[k - 1].ax || pol_[k].s != pol_[k - 1].s)
          start_.push_back(static_cast<std::uint32_t>(k));
        group_[k] = static_cast<std::uint32_t>(start_.size() - 1);
      }
      start_.push_back(static_cast<std::uint32_t>(n));
    }

    std::size_t size() const noexcept { return pol_.size(); }
    std::size_t group_count() const noexcept { return start_.empty() ? 0 : start_.size() - 1; }

   private:
    friend class FieldEvaluator;
    std::vector<Polar> pol_;            // sorted
    std::vector<std::uint32_t> index_;  // sorted position -> input position
    std::vector<std::uint32_t> group_;  // sorted position -> group
    std::vector<std::uint32_t> start_;  // group g is [start_[g], start_[g+1])
  };

  explicit FieldEvaluator(int L) : rec_(L) {}

  int band_limit() const noexcept { return rec_.band_limit(); }

  void evaluate(const SHCoefficients& c, std::span<const Vec3> points, std::span<double> out) const {
    evaluate(c, Plan(points), out);
  }

  void evaluate(const SHCoefficients& c, const Plan& plan, std::span<double> out) const {
    if (c.band_limit() > rec_.band_limit())
      throw std::invalid_argument("FieldEvaluator: coefficients exceed evaluator band limit");
    if (out.size() != plan.size()) throw std::invalid_argument("FieldEvaluator: output size mismatch");
    const int L = c.band_limit();
    std::vector<double> sums(static_cast<std::size_t>(L + 1) * 4 * batch);
    const std::size_t ng = plan.group_count();
    for (std::size_t g0 = 0; g0 < ng; g0 += batch) {
      const std::size_t cnt = std::min<std::size_t>(batch, ng - g0);
      double xs[batch], ss[batch];
      for (std::size_t b = 0; b < batch; ++b) {
        const Polar& q = plan.pol_[plan.start_[g0 + std::min(b, cnt - 1)]];
        xs[b] = q.ax;
        ss[b] = q.s;
      }
      const int m_end = legendre_sums(c, xs, ss, sums.data());
      combine(plan, g0, cnt, sums.data(), m_end, out);
    }
  }

  std::vector<double> evaluate(const SHCoefficients& c, std::span<const Vec3> points) const {
    std::vector<double> out(points.size());
    evaluate(c, points, out);
    return out;
  }

 private:
  typedef double vec __attribute__((vector_size(lanes * sizeof(double))));
  static constexpr int K = groups;

  // sums[(m * 4 + q) * batch + b], q = even re, even im, odd re, odd im: the
  // partial sums over l of c_lm Pbar_lm(|x|). Returns one past the last m filled.
  int legendre_sums(const SHCoefficients& c, const double* xs, const double* ss, double* sums) const {
    vec x[K], s[K], pmm[K];
    for (int k = 0; k < K; ++k)
      for (int b = 0; b < lanes; ++b) {
        x[k][b] = xs[k * lanes + b];
        s[k][b] = ss[k * lanes + b];
        pmm[k][b] = LegendreRecurrence::p00();
      }
    const int L = c.band_limit();
    const cplx* coef = c.raw().data();
    for (int m = 0; m <= L; ++m) {
      if (m > 0) {
        const double d = -rec_.diag(m);
        double peak = 0.0;
        for (int k = 0; k < K; ++k) {
          pmm[k] *= d * s[k];
          for (int b = 0; b < lanes; ++b) peak = std::max(peak, std::abs(pmm[k][b]));
        }
        // Columns with a seed this small contribute nothing representable;
        // |Pbar_mm| keeps decreasing in m once it is this small.
        if (peak < 1e-280) return m;
      }
      vec p0[K], p1[K], er[K], ei[K], orr[K], oi[K];
      const cplx cmm = coef[tri_index(m, m)];
      for (int k = 0; k < K; ++k) {
        p0[k] = pmm[k];
        er[k] = cmm.real() * p0[k];
        ei[k] = cmm.imag() * p0[k];
        orr[k] = vec{};
        oi[k] = vec{};
      }
      if (m < L) {
        const double sub = rec_.sub(m);
        const cplx c1 = coef[tri_index(m + 1, m)];
        for (int k = 0; k < K; ++k) {
          p1[k] = sub * x[k] * p0[k];
          orr[k] += c1.real() * p1[k];
          oi[k] += c1.imag() * p1[k];
        }
        const double* a = rec_.a_column(m);
        const double* ab = rec_.ab_column(m);
        int l = m + 2;
        for (; l + 1 <= L; l += 2) {
          const double a2 = a[l - m], ab2 = ab[l - m];
          const double a3 = a[l + 1 - m], ab3 = ab[l + 1 - m];
          const cplx c2 = coef[tri_index(l, m)];
          const cplx c3 = coef[tri_index(l + 1, m)];
          for (int k = 0; k < K; ++k) {
            const vec p2 = a2 * x[k] * p1[k] - ab2 * p0[k];
            const vec p3 = a3 * x[k] * p2 - ab3 * p1[k];
            er[k] += c2.real() * p2;
            ei[k] += c2.imag() * p2;
            orr[k] += c3.real() * p3;
            oi[k] += c3.imag() * p3;
            p0[k] = p2;
            p1[k] = p3;
          }
        }
        if (l == L) {
          const cplx c2 = coef[tri_index(l, m)];
          for (int k = 0; k < K; ++k) {
            const vec p2 = a[l - m] * x[k] * p1[k] - ab[l - m] * p0[k];
            er[k] += c2.real() * p2;
            ei[k] += c2.imag() * p2;
          }
        }
      }
      double* dst = sums + static_cast<std::size_t>(m) * 4 * batch;
      for (int k = 0; k < K; ++k)
        for (int b = 0; b < lanes; ++b) {
          dst[0 * batch + k * lanes + b] = er[k][b];
          dst[1 * batch + k * lanes + b] = ei[k][b];
          dst[2 * batch + k * lanes + b] = orr[k][b];
          dst[3 * batch + k * lanes + b] = oi[k][b];
        }
    }
    return L + 1;
  }

  // T = sum_m eps_m Re[(E_m + sign O_m) e^{i m phi}], using
  // Pbar_lm(-x) = (-1)^(l+m) Pbar_lm(x). The members of one group run in vector lanes.
  static void combine(const Plan& plan, std::size_t g0, std::size_t cnt, const double* sums, int m_end,
                      std::span<double> out) {
    for (std::size_t b = 0; b < cnt; ++b) {
      const std::size_t begin = plan.start_[g0 + b], end = plan.start_[g0 + b + 1];
      for (std::size_t k0 = begin; k0 < end; k0 += lanes) {
        const std::size_t n = std::min<std::size_t>(lanes, end - k0);
        vec sign, cp, sp, cm, sm, acc = vec{};
        for (int i = 0; i < lanes; ++i) {
          const Polar& q = plan.pol_[k0 + std::min<std::size_t>(i, n - 1)];
          sign[i] = q.sign;
          cp[i] = q.cp;
          sp[i] = q.sp;
          cm[i] = 1.0;
          sm[i] = 0.0;
        }
        for (int m = 0; m < m_end; ++m) {
          if (m > 0) {
            const vec cn = cm * cp - sm * sp;
            sm = sm * cp + cm * sp;
            cm = cn;
          }
          const double* src = sums + static_cast<std::size_t>(m) * 4 * batch + b;
          const double eps = m == 0 ? 1.0 : 2.0;
          acc += eps * ((src[0] + sign * src[2 * batch]) * cm - (src[batch] + sign * src[3 * batch]) * sm);
        }
        for (std::size_t i = 0; i < n; ++i) out[plan.index_[k0 + i]] = acc[i];
      }
    }
  }

  LegendreRecurrence rec_;
};

/// Value of a real band-limited field at (theta, phi).
inline double field_value(const SHCoefficients& c, double theta, double phi) {
  const FieldEvaluator ev(c.band_limit());
  const Vec3 p = unit_vector(theta, phi);
  double v = 0.0;
  ev.evaluate(c, std::span<const Vec3>(&p, 1), std::span<double>(&v, 1));
  return v;
}

namespace detail {
inline TangentVector gradient_components(const SHCoefficients& c, const LegendreValues& v, double phi) {
  TangentVector g;
  for (int l = 1; l <= c.band_limit(); ++l) {
    g.theta += c(l, 0).real() * v.dtheta(l, 0);
    for (int m = 1; m <= l; ++m) {
      const cplx e = std::polar(1.0, m * phi);
      const cplx cm = c(l, m);
      g.theta += 2.0 * (cm * e).real() * v.dtheta(l, m);
      g.phi += 2.0 * (cm * cplx(0.0, m) * e).real() * v.over_sin(l, m);
    }
  }
  return g;
}
}  // namespace detail

/// Surface gradient of a real band-limited field, in frame components.
inline TangentVector field_gradient(const SHCoefficients& c, double theta, double phi) {
  const LegendreRecurrence rec(c.band_limit());
  return detail::gradient_components(c, legendre_values(rec, theta), phi);
}

/// Surface gradient of a real band-limited field as a vector in R^3.
class GradientEvaluator {
 public:
  explicit GradientEvaluator(SHCoefficients c) : c_(std::move(c)), rec_(c_.band_limit()) {}

  Vec3 operator()(const Vec3& x) const {
    const auto [theta, phi] = spherical_angles(x);
    const double r = x.norm();
    LegendreValues v;
    legendre_values(rec_, x.z() / r, std::hypot(x.x(), x.y()) / r, v);
    return to_cartesian(detail::gradient_components(c_, v, phi), theta, phi);
  }

 private:
  SHCoefficients c_;
  LegendreRecurrence rec_;
};

}  // namespace sphmlmc
