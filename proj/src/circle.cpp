#include "chaoslab/circle.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "chaoslab/fft.hpp"

namespace chaoslab::fields {

FieldView CircleField::view() const {
  const double two_pi = 2.0 * std::numbers::pi;
  return FieldView{1,
                   grid,
                   grid,
                   two_pi / static_cast<double>(grid),
                   two_pi / static_cast<double>(grid),
                   two_pi,
                   var_total,
                   values.data(),
                   nullptr,
                   gamma_c(1)};
}

double harmonic_number(size_t n) {
  double h = 0.0;
  for (size_t k = 1; k <= n; ++k) h += 1.0 / static_cast<double>(k);
  return h;
}

double circle_covariance_partial_sum(size_t modes, double dtheta) {
  double c = 0.0;
  for (size_t n = 1; n <= modes; ++n)
    c += 2.0 / static_cast<double>(n) * std::cos(static_cast<double>(n) * dtheta);
  return c;
}

double circle_covariance_limit(double dtheta) {
  const double s = std::abs(2.0 * std::sin(dtheta / 2.0));
  return -2.0 * std::log(s);
}

CircleField sample_circle_gff(size_t modes, size_t grid, bool normalized,
                              rng::Stream& stream) {
  if (modes < 1) throw std::invalid_argument("sample_circle_gff: need modes >= 1");
  if (grid < 2 * modes)
    throw std::invalid_argument("sample_circle_gff: grid must be at least 2 * modes");

  CircleField f;
  f.modes = modes;
  f.grid = grid;
  f.normalized = normalized;
  f.coeff_a.resize(modes);
  f.coeff_b.resize(modes);
  for (size_t n = 0; n < modes; ++n) {
    f.coeff_a[n] = stream.gaussian();
    f.coeff_b[n] = stream.gaussian();
  }

  // Pack sqrt(2/n)(A_n cos + B_n sin) into the half spectrum: bin n carries
  // Re = sqrt(2/n) A_n / 2, Im = -sqrt(2/n) B_n / 2; when 2N == M the top
  // mode lands in the Nyquist bin, where cos(N theta_m) = (-1)^m on-grid and
  // sin(N theta_m) = 0, so that bin carries sqrt(2/N) A_N alone.
  std::vector<std::complex<double>> spec(grid / 2 + 1, {0.0, 0.0});
  for (size_t n = 1; n <= modes; ++n) {
    const double amp = std::sqrt(2.0 / static_cast<double>(n));
    if (grid % 2 == 0 && n == grid / 2) {
      spec[n] = std::complex<double>(amp * f.coeff_a[n - 1], 0.0);
    } else {
      spec[n] = std::complex<double>(0.5 * amp * f.coeff_a[n - 1],
                                     -0.5 * amp * f.coeff_b[n - 1]);
    }
  }
  f.values.resize(grid);
  fft::half_spectrum_to_real(spec.data(), f.values.data(), grid);

  f.var_total = 2.0 * harmonic_number(modes);
  if (normalized) {
    const double inv = 1.0 / std::sqrt(2.0);
    for (double& v : f.values) v *= inv;
    f.var_total *= 0.5;
  }
  return f;
}

}  // namespace chaoslab::fields
