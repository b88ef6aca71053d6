#pragma once

// Spherical-harmonic substrate: Legendre recurrences, harmonics and their
// gradients, quadrature grids, truncated transforms and Sobolev norms.

#include "sphmlmc/errors.hpp"
#include "sphmlmc/harmonics.hpp"
#include "sphmlmc/legendre.hpp"
#include "sphmlmc/quad_grid.hpp"
#include "sphmlmc/sh_coefficients.hpp"
#include "sphmlmc/transform.hpp"
