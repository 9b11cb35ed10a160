#pragma once
// Truncated Fourier-series Gaussian field on the unit circle.
//
// X(theta) = sum_{n=1..N} sqrt(2/n) (A_n cos n theta + B_n sin n theta) with
// independent standard Gaussian coefficients.  Its covariance at angular
// separation dtheta is sum_{n<=N} (2/n) cos(n dtheta), which converges to
// -2 log|e^{i dtheta} - 1| as N grows, and the pointwise variance is exactly
// twice the N-th harmonic number.  The `normalized` flag divides the field by
// sqrt(2), giving variance H_N and the usual 1-d log-correlated convention.

#include <cstddef>
#include <vector>

#include "chaoslab/field.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab::fields {

struct CircleField {
  size_t modes = 0;  // N
  size_t grid = 0;   // M sample points theta_m = 2 pi m / M
  bool normalized = false;
  std::vector<double> coeff_a;  // A_n, n = 1..N
  std::vector<double> coeff_b;  // B_n, n = 1..N
  std::vector<double> values;   // X(theta_m)
  double var_total = 0.0;       // 2 H_N, or H_N when normalized

  // 1-d view over the theta-grid: cell volume 2 pi / M, domain volume 2 pi.
  FieldView view() const;
};

double harmonic_number(size_t n);

// Covariance of the unnormalized truncated field at angular separation dtheta.
double circle_covariance_partial_sum(size_t modes, double dtheta);

// Large-N limit of the partial sum: -2 log|e^{i dtheta} - 1|.
double circle_covariance_limit(double dtheta);

// Draw order: (A_1, B_1), (A_2, B_2), ...  Requires grid >= 2 * modes so the
// highest mode is resolved; synthesis is FFT-based and exact on the grid.
CircleField sample_circle_gff(size_t modes, size_t grid, bool normalized,
                              rng::Stream& stream);

}  // namespace chaoslab::fields
