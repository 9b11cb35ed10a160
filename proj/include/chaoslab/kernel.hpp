#pragma once
// Seed covariance profiles for scale-decomposed log-correlated fields.
//
// A kernel is a rotationally symmetric profile k(r) with k(0)=1, compact
// support in r<1, C^1 on the open support, radially non-increasing, and
// positive definite in the target dimension (checked via a discrete Fourier
// transform on a validation grid).  The covariance contributed by scales
// between cutoffs t and t+dt at separation r is
//     \int_{e^t}^{e^{t+dt}} k(u r)/u du,
// evaluated by adaptive quadrature to absolute tolerance 1e-10.

#include <string>
#include <vector>

namespace chaoslab::fields {

// Critical chaos parameter sqrt(2d).
double gamma_c(int d);

enum class KernelFamily { wendland_c2, triangular, tabulated };

struct KernelSpec {
  KernelFamily family = KernelFamily::wendland_c2;
  int dim = 1;  // dimension the kernel must be positive definite in (1 or 2)
  // For `tabulated`: k sampled at uniform r-grid over [0,1] (front()==1,
  // back()==0); evaluated by cubic Hermite interpolation.
  std::vector<double> table;
};

struct KernelValidation {
  double value_at_zero = 0.0;
  double max_abs_outside_support = 0.0;
  double min_fourier_eigenvalue = 0.0;  // relative to the largest eigenvalue
  double max_derivative_jump = 0.0;     // C^1 proxy: one-sided slope mismatch
  double max_monotonicity_violation = 0.0;
  bool ok = false;
  std::string failure;  // names the first violated invariant when !ok
  std::string to_json() const;
};

class Kernel {
 public:
  // Profile value k(r); exactly 0 for r >= 1.
  double operator()(double r) const;

  // Covariance of the increment over cutoff window [t, t+dt] at separation r.
  // r=0 reduces to the exact log integral dt (k(0)=1), returned analytically
  // so accumulated variances are exact.
  double increment_covariance(double r, double t, double dt) const;

  // Covariance of the field at cutoff t: \int_1^{e^t} k(ur)/u du. Zero for
  // r >= 1; equals t at r = 0.
  double analytic_covariance(double r, double t) const;

  int dim() const { return spec_.dim; }
  KernelFamily family() const { return spec_.family; }
  const KernelValidation& validation() const { return validation_; }

 private:
  friend Kernel make_kernel(const KernelSpec&);
  Kernel() = default;
  double raw(double r) const;  // profile without support clamp
  KernelSpec spec_;
  KernelValidation validation_;
  std::vector<double> slopes_;  // Hermite slopes for tabulated profiles
};

// Validates the profile and returns an evaluable kernel; throws
// std::invalid_argument with a diagnostic naming the violated invariant
// (normalization, compact_support, smoothness, radial_monotonicity,
// fourier_nonnegativity) otherwise.
Kernel make_kernel(const KernelSpec& spec);

}  // namespace chaoslab::fields
