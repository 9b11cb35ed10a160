#include "chaoslab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "chaoslab/fft.hpp"
#include "chaoslab/quadrature.hpp"

namespace chaoslab::fields {

double gamma_c(int d) {
  if (d < 1) throw std::invalid_argument("gamma_c: dimension must be >= 1");
  return std::sqrt(2.0 * d);
}

std::string KernelValidation::to_json() const {
  nlohmann::json j;
  j["ok"] = ok;
  j["value_at_zero"] = value_at_zero;
  j["max_abs_outside_support"] = max_abs_outside_support;
  j["min_fourier_eigenvalue_rel"] = min_fourier_eigenvalue;
  j["max_derivative_jump"] = max_derivative_jump;
  j["max_monotonicity_violation"] = max_monotonicity_violation;
  j["failure"] = failure;
  return j.dump(2);
}

double Kernel::raw(double r) const {
  switch (spec_.family) {
    case KernelFamily::wendland_c2: {
      // (1-r)^4 (4r+1): C^2, positive definite for d <= 3.
      const double s = 1.0 - r;
      const double s2 = s * s;
      return s2 * s2 * (4.0 * r + 1.0);
    }
    case KernelFamily::triangular:
      return 1.0 - r;
    case KernelFamily::tabulated: {
      const size_t n = spec_.table.size();
      const double x = r * static_cast<double>(n - 1);
      size_t i = std::min(static_cast<size_t>(x), n - 2);
      const double u = x - static_cast<double>(i);
      // cubic Hermite with precomputed centered-difference slopes
      const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
      const double h10 = u * (1 - u) * (1 - u);
      const double h01 = u * u * (3 - 2 * u);
      const double h11 = u * u * (u - 1);
      return h00 * spec_.table[i] + h10 * slopes_[i] + h01 * spec_.table[i + 1] +
             h11 * slopes_[i + 1];
    }
  }
  return 0.0;
}

double Kernel::operator()(double r) const {
  r = std::abs(r);
  if (r >= 1.0) return 0.0;
  return raw(r);
}

double Kernel::increment_covariance(double r, double t, double dt) const {
  if (dt < 0) throw std::invalid_argument("increment_covariance: dt must be >= 0");
  if (dt == 0) return 0.0;
  r = std::abs(r);
  if (r == 0.0) return dt;  // integrand k(0)/u = 1/u exactly
  if (r >= std::exp(-t)) return 0.0;  // support already resolved at scale t
  double a = std::exp(t);
  double b = std::exp(t + dt);
  b = std::min(b, 1.0 / r);  // integrand vanishes once u*r >= 1
  if (b <= a) return 0.0;
  return quad::integrate([this, r](double u) { return (*this)(u * r) / u; }, a, b);
}

double Kernel::analytic_covariance(double r, double t) const {
  return increment_covariance(r, 0.0, t);
}

namespace {

// Relative nonnegativity tolerance for the Fourier check.
constexpr double kFourierTol = 1e-8;

// Smallest circulant eigenvalue of the kernel sampled on a periodic grid of
// extent 4 (>= 2x the support, so circular correlation equals linear),
// relative to the largest.
double min_fourier_eig(const Kernel& k, int dim) {
  const double period = 4.0;
  if (dim == 1) {
    const size_t P = 4096;
    std::vector<double> samples(P);
    for (size_t j = 0; j < P; ++j) {
      const double x = period * static_cast<double>(j) / static_cast<double>(P);
      samples[j] = k(std::min(x, period - x));
    }
    std::vector<std::complex<double>> spec(P / 2 + 1);
    fft::real_to_half_spectrum(samples.data(), spec.data(), P);
    double mn = spec[0].real(), mx = spec[0].real();
    for (const auto& c : spec) {
      mn = std::min(mn, c.real());
      mx = std::max(mx, c.real());
    }
    return mn / mx;
  }
  const size_t P = 256;
  std::vector<std::complex<double>> samples(P * P);
  for (size_t jy = 0; jy < P; ++jy) {
    const double y = period * static_cast<double>(jy) / static_cast<double>(P);
    const double dy = std::min(y, period - y);
    for (size_t jx = 0; jx < P; ++jx) {
      const double x = period * static_cast<double>(jx) / static_cast<double>(P);
      const double dx = std::min(x, period - x);
      samples[jy * P + jx] = k(std::hypot(dx, dy));
    }
  }
  fft::c2c_2d(samples.data(), P, P, /*backward=*/false);
  double mn = samples[0].real(), mx = samples[0].real();
  for (const auto& c : samples) {
    mn = std::min(mn, c.real());
    mx = std::max(mx, c.real());
  }
  return mn / mx;
}

}  // namespace

Kernel make_kernel(const KernelSpec& spec) {
  if (spec.dim != 1 && spec.dim != 2)
    throw std::invalid_argument("make_kernel: dim must be 1 or 2");
  Kernel k;
  k.spec_ = spec;
  if (spec.family == KernelFamily::tabulated) {
    if (spec.table.size() < 4)
      throw std::invalid_argument("make_kernel: tabulated profile needs >= 4 points");
    const size_t n = spec.table.size();
    k.slopes_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      if (i == 0)
        k.slopes_[i] = spec.table[1] - spec.table[0];
      else if (i == n - 1)
        k.slopes_[i] = spec.table[n - 1] - spec.table[n - 2];
      else
        k.slopes_[i] = 0.5 * (spec.table[i + 1] - spec.table[i - 1]);
    }
  }

  KernelValidation& v = k.validation_;
  v.value_at_zero = k(0.0);
  if (std::abs(v.value_at_zero - 1.0) > 1e-12) {
    v.failure = "normalization: k(0) = " + std::to_string(v.value_at_zero) + ", expected 1";
  }

  if (v.failure.empty()) {
    // The clamped evaluation is zero beyond the support by construction, so
    // the profile itself must vanish at the edge for the clamp to be honest.
    v.max_abs_outside_support = std::abs(k.raw(1.0));
    for (int i = 0; i <= 64; ++i) {
      const double r = 1.0 + 1.0 * i / 64.0;
      v.max_abs_outside_support = std::max(v.max_abs_outside_support, std::abs(k(r)));
    }
    if (v.max_abs_outside_support > 1e-12) v.failure = "compact_support";
  }

  if (v.failure.empty()) {
    // C^1 proxy on the open support: one-sided finite differences must agree.
    const double h = 1e-5;
    for (int i = 1; i < 256; ++i) {
      const double r = i / 256.0;
      const double dplus = (k.raw(r + h) - k.raw(r)) / h;
      const double dminus = (k.raw(r) - k.raw(r - h)) / h;
      v.max_derivative_jump = std::max(v.max_derivative_jump, std::abs(dplus - dminus));
    }
    if (v.max_derivative_jump > 1e-2) v.failure = "smoothness";
  }

  if (v.failure.empty()) {
    for (int i = 0; i < 512; ++i) {
      const double r0 = i / 512.0, r1 = (i + 1) / 512.0;
      v.max_monotonicity_violation =
          std::max(v.max_monotonicity_violation, k(r1) - k(r0));
    }
    if (v.max_monotonicity_violation > 1e-10) v.failure = "radial_monotonicity";
  }

  if (v.failure.empty()) {
    v.min_fourier_eigenvalue = min_fourier_eig(k, spec.dim);
    if (v.min_fourier_eigenvalue < -kFourierTol) v.failure = "fourier_nonnegativity";
  }

  v.ok = v.failure.empty();
  if (!v.ok) throw std::invalid_argument("make_kernel: " + v.failure);
  return k;
}

}  // namespace chaoslab::fields
