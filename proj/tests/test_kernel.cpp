// Kernel profiles, scale-increment covariances, and profile validation.
//
// The covariance integrals are cross-checked against an independent
// fixed-panel Gauss-Legendre oracle built directly from the closed-form
// profile, so the library's adaptive quadrature is never trusted twice.
#include <doctest.h>

#include <chaoslab/kernel.hpp>

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

using namespace chaoslab;

namespace {

// Closed-form profile, written out independently of src/kernel.cpp.
double wendland_profile(double r) {
  r = std::abs(r);
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  return s * s * s * s * (4.0 * r + 1.0);
}

// Non-adaptive composite Gauss-Legendre: 15-point rule on `panels` equal
// panels. The integrand is piecewise-smooth, so 2000 panels put the error
// far below 1e-12 even with the support kink inside one panel.
double oracle_increment_cov(double r, double t, double dt, int panels = 2000) {
  if (r == 0.0) return dt;
  const double a = std::exp(t);
  const double b = std::exp(t + dt);
  double total = 0.0;
  const double width = (b - a) / panels;
  auto f = [r](double u) { return wendland_profile(u * r) / u; };
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * width;
    total += boost::math::quadrature::gauss<double, 15>::integrate(f, lo, lo + width);
  }
  return total;
}

}  // namespace

TEST_CASE("kernel: gamma_c is sqrt(2d)") {
  CHECK(fields::gamma_c(1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(fields::gamma_c(2) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("kernel: wendland profile point values") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 2, {}});
  CHECK(k(0.0) == 1.0);
  CHECK(k(0.5) == 0.1875);  // (1/2)^4 * 3, exact in binary
  CHECK(k(1.0) == 0.0);
  CHECK(k(1.2) == 0.0);
  CHECK(k(-0.5) == 0.1875);  // even in r
  CHECK(k.validation().ok);
  CHECK(k.validation().failure.empty());
  CHECK(k.validation().value_at_zero == 1.0);
  // Grid of profile values against the independent closed form.
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    CHECK(k(r) == doctest::Approx(wendland_profile(r)).epsilon(1e-15));
  }
}

TEST_CASE("kernel: increment covariance at r=0 is exactly dt") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  CHECK(k.increment_covariance(0.0, 0.0, 0.1) == 0.1);
  CHECK(k.increment_covariance(0.0, 3.7, 0.25) == 0.25);
  CHECK(k.increment_covariance(0.0, 12.0, 0.01) == 0.01);
}

TEST_CASE("kernel: increments vanish once the scale resolves the distance") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  for (double t : {0.5, 1.0, 2.0, 4.0}) {
    CHECK(k.increment_covariance(std::exp(-t), t, 0.1) == 0.0);
    CHECK(k.increment_covariance(2.0 * std::exp(-t), t, 0.1) == 0.0);
  }
  // dt = 0 contributes nothing; negative dt is rejected.
  CHECK(k.increment_covariance(0.3, 1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(k.increment_covariance(0.3, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("kernel: adaptive quadrature matches the fixed-panel oracle") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 2, {}});
  CHECK(std::abs(k.increment_covariance(0.25, 1.0, 0.1) -
                 oracle_increment_cov(0.25, 1.0, 0.1)) <= 1e-9);
  for (double r : {0.01, 0.1, 0.35, 0.7}) {
    for (double t : {0.0, 0.5, 1.5, 3.0}) {
      for (double dt : {0.05, 0.1, 0.5}) {
        const double got = k.increment_covariance(r, t, dt);
        const double want = oracle_increment_cov(r, t, dt);
        CHECK(std::abs(got - want) <= 1e-9);
      }
    }
  }
}

TEST_CASE("kernel: total covariance telescopes over increments") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  const double t = 3.0, dt = 0.1;
  for (double r : {0.0, 0.05, 0.2, 0.6}) {
    double acc = 0.0;
    for (int j = 0; j < 30; ++j) acc += k.increment_covariance(r, j * dt, dt);
    CHECK(acc == doctest::Approx(k.analytic_covariance(r, t)).epsilon(1e-8));
  }
}

TEST_CASE("kernel: analytic covariance boundary values") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  CHECK(k.analytic_covariance(0.0, 4.0) == 4.0);
  CHECK(k.analytic_covariance(0.0, 0.0) == 0.0);
  CHECK(k.analytic_covariance(1.0, 4.0) == 0.0);
  CHECK(k.analytic_covariance(1.5, 4.0) == 0.0);
}

TEST_CASE("kernel: covariance is log-like with a bounded correction") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  const double t = 4.0;
  for (int i = 0; i <= 200; ++i) {
    const double r = std::exp(-t) * std::pow(std::exp(t), i / 200.0);  // geometric sweep
    CHECK(std::abs(k.analytic_covariance(r, t) + std::log(r)) <= 2.0);
  }
}

TEST_CASE("kernel: covariance is non-increasing in distance") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 2, {}});
  double prev = k.analytic_covariance(0.0, 3.0);
  for (int i = 1; i <= 128; ++i) {
    const double cur = k.analytic_covariance(i / 128.0, 3.0);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("kernel: triangular profile is valid in d=1 only") {
  const fields::Kernel k1 = fields::make_kernel({fields::KernelFamily::triangular, 1, {}});
  CHECK(k1(0.0) == 1.0);
  CHECK(k1(0.5) == 0.5);
  CHECK(k1(1.0) == 0.0);
  CHECK(k1.validation().ok);

  try {
    fields::make_kernel({fields::KernelFamily::triangular, 2, {}});
    FAIL("expected make_kernel to reject the triangular profile in d=2");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("fourier_nonnegativity") != std::string::npos);
  }

  // The C^1 diagnostic is still computed and reported for valid profiles.
  CHECK(k1.validation().max_derivative_jump < 1e-2);
}

TEST_CASE("kernel: tabulated profile reproduces its source within interpolation error") {
  std::vector<double> table(1001);
  for (size_t i = 0; i < table.size(); ++i)
    table[i] = wendland_profile(static_cast<double>(i) / (table.size() - 1));
  const fields::Kernel k =
      fields::make_kernel({fields::KernelFamily::tabulated, 1, table});
  CHECK(k.validation().ok);
  for (int i = 0; i <= 333; ++i) {
    const double r = i / 333.0;
    CHECK(k(r) == doctest::Approx(wendland_profile(r)).epsilon(1e-6));
  }
  // Covariance integrals inherit the small interpolation error.
  CHECK(std::abs(k.increment_covariance(0.25, 1.0, 0.1) -
                 oracle_increment_cov(0.25, 1.0, 0.1)) <= 1e-6);
}

TEST_CASE("kernel: validation failures name the violated invariant") {
  auto expect_failure = [](const fields::KernelSpec& spec, const std::string& name) {
    try {
      fields::make_kernel(spec);
      FAIL("expected make_kernel to reject profile: " << name);
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
  };

  // k(0) != 1.
  expect_failure({fields::KernelFamily::tabulated, 1, {0.9, 0.6, 0.3, 0.0}},
                 "normalization");

  // Profile does not vanish at the support edge.
  expect_failure({fields::KernelFamily::tabulated, 1, {1.0, 0.7, 0.4, 0.1}},
                 "compact_support");

  // Smooth but locally increasing profile.
  {
    std::vector<double> table(101);
    for (size_t i = 0; i < table.size(); ++i) {
      const double r = static_cast<double>(i) / (table.size() - 1);
      table[i] = wendland_profile(r) + 0.05 * std::exp(-std::pow((r - 0.5) / 0.08, 2));
    }
    table[0] = 1.0;
    table.back() = 0.0;
    expect_failure({fields::KernelFamily::tabulated, 1, table}, "radial_monotonicity");
  }

  // Tables shorter than 4 points cannot define a cubic profile.
  CHECK_THROWS_AS(fields::make_kernel({fields::KernelFamily::tabulated, 1, {1.0, 0.0}}),
                  std::invalid_argument);
  // Only d = 1 and d = 2 are supported.
  CHECK_THROWS_AS(fields::make_kernel({fields::KernelFamily::wendland_c2, 3, {}}),
                  std::invalid_argument);
}

TEST_CASE("kernel: validation report serializes its diagnostics") {
  const fields::Kernel k = fields::make_kernel({fields::KernelFamily::wendland_c2, 1, {}});
  const std::string j = k.validation().to_json();
  CHECK(j.find("value_at_zero") != std::string::npos);
  CHECK(j.find("min_fourier_eigenvalue") != std::string::npos);
  CHECK(j.find("\"ok\"") != std::string::npos);
}
