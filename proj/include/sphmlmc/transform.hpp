#pragma once

// Truncated spherical harmonic transforms on a QuadGrid.
//
// Both directions split into a Legendre stage per ring and a direct Fourier sum
// along the ring. Cost is O(n_theta (n_phi L + L^2)).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "sphmlmc/errors.hpp"
#include "sphmlmc/legendre.hpp"
#include "sphmlmc/quad_grid.hpp"
#include "sphmlmc/sh_coefficients.hpp"

namespace sphmlmc {

namespace detail {
/// cos(m phi_j), sin(m phi_j) for m = 0..L, j = 0..n_phi-1, using exact angle reduction.
struct RingTrig {
  int L = 0, n_phi = 0;
  std::vector<double> c, s;  // index m * n_phi + j

  RingTrig(int L_, int n_phi_) : L(L_), n_phi(n_phi_), c((L_ + 1) * n_phi_), s((L_ + 1) * n_phi_) {
    for (int m = 0; m <= L; ++m)
      for (int j = 0; j < n_phi; ++j) {
        const long long k = (static_cast<long long>(m) * j) % n_phi;
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / n_phi;
        c[m * n_phi + j] = std::cos(ang);
        s[m * n_phi + j] = std::sin(ang);
      }
  }
};
}  // namespace detail

/// c_lm = sum_ij w_ij f(theta_i, phi_j) conj(Y_lm(theta_i, phi_j)).
inline SHCoefficients sht_forward(const GridField& field, int L) {
  const QuadGrid& g = field.grid;
  if (L < 0) throw std::invalid_argument("sht_forward: negative band limit");
  if (!g.resolves(L))
    throw ResolutionError("sht_forward: grid " + std::to_string(g.n_theta()) + "x" + std::to_string(g.n_phi()) +
                          " does not resolve degree " + std::to_string(L));
  const LegendreRecurrence rec(L);
  const detail::RingTrig trig(L, g.n_phi());
  std::vector<double> p(tri_size(L));
  std::vector<cplx> acc(tri_size(L), cplx(0.0, 0.0));
  std::vector<cplx> fourier(L + 1);

  for (int i = 0; i < g.n_theta(); ++i) {
    for (int m = 0; m <= L; ++m) {
      double re = 0.0, im = 0.0;
      const double* cm = &trig.c[m * g.n_phi()];
      const double* sm = &trig.s[m * g.n_phi()];
      for (int j = 0; j < g.n_phi(); ++j) {
        re += field(i, j) * cm[j];
        im -= field(i, j) * sm[j];
      }
      fourier[m] = g.weight(i, 0) * cplx(re, im);
    }
    rec.fill(g.cos_theta(i), g.sin_theta(i), p);
    for (int m = 0; m <= L; ++m)
      for (int l = m; l <= L; ++l) acc[tri_index(l, m)] += p[tri_index(l, m)] * fourier[m];
  }

  SHCoefficients c(L);
  for (int l = 0; l <= L; ++l) {
    c.set(l, 0, acc[tri_index(l, 0)].real());
    for (int m = 1; m <= l; ++m) c.set(l, m, acc[tri_index(l, m)]);
  }
  return c;
}

/// Samples the real field sum_lm c_lm Y_lm on every node of `grid`.
inline GridField sht_inverse(const SHCoefficients& c, const QuadGrid& grid) {
  const int L = c.band_limit();
  const LegendreRecurrence rec(L);
  const detail::RingTrig trig(L, grid.n_phi());
  std::vector<double> p(tri_size(L));
  std::vector<cplx> ring(L + 1);
  GridField out(grid);

  for (int i = 0; i < grid.n_theta(); ++i) {
    rec.fill(grid.cos_theta(i), grid.sin_theta(i), p);
    for (int m = 0; m <= L; ++m) {
      cplx s(0.0, 0.0);
      for (int l = m; l <= L; ++l) s += c(l, m) * p[tri_index(l, m)];
      ring[m] = s;
    }
    for (int j = 0; j < grid.n_phi(); ++j) {
      double v = ring[0].real();
      for (int m = 1; m <= L; ++m)
        v += 2.0 * (ring[m].real() * trig.c[m * grid.n_phi() + j] - ring[m].imag() * trig.s[m * grid.n_phi() + j]);
      out(i, j) = v;
    }
  }
  return out;
}

}  // namespace sphmlmc
