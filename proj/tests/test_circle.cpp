// Spectral circle-field synthesis: exactness of the FFT path against direct
// trigonometric resummation, on-grid covariance identities, and the view
// exposed to the measure constructors.
#include <doctest.h>

#include <chaoslab/circle.hpp>
#include <chaoslab/stats.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

using namespace chaoslab;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

TEST_CASE("circle: harmonic numbers and total variance") {
  CHECK(fields::harmonic_number(1) == 1.0);
  CHECK(fields::harmonic_number(4) == doctest::Approx(25.0 / 12.0).epsilon(1e-15));
  rng::Stream s(rng::StreamKey{1, rng::hash_tag("circle"), 0, 0});
  const auto f = fields::sample_circle_gff(4, 8, false, s);
  CHECK(f.var_total == doctest::Approx(25.0 / 6.0).epsilon(1e-15));
  CHECK(f.modes == 4);
  CHECK(f.grid == 8);
  CHECK(f.coeff_a.size() == 4);
  CHECK(f.coeff_b.size() == 4);
  CHECK(f.values.size() == 8);
}

TEST_CASE("circle: partial covariance sum approaches the log limit") {
  // Antipodal points: the limit is -2 log 2 and the tail alternates.
  const double limit = fields::circle_covariance_limit(std::numbers::pi);
  CHECK(limit == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  const double partial = fields::circle_covariance_partial_sum(4096, std::numbers::pi);
  CHECK(std::abs(partial - limit) < 0.02);

  // Generic angle: limit is -2 log(2 sin(theta/2)).
  const double th = 0.7;
  CHECK(fields::circle_covariance_limit(th) ==
        doctest::Approx(-2.0 * std::log(2.0 * std::sin(th / 2.0))).epsilon(1e-12));
  CHECK(std::abs(fields::circle_covariance_partial_sum(20000, th) -
                 fields::circle_covariance_limit(th)) < 1e-3);
}

TEST_CASE("circle: FFT synthesis equals direct trigonometric resummation") {
  for (size_t grid : {size_t{16}, size_t{32}}) {
    rng::Stream s(rng::StreamKey{7, rng::hash_tag("circle"), 3, 0});
    const auto f = fields::sample_circle_gff(8, grid, false, s);
    for (size_t m = 0; m < grid; ++m) {
      const double theta = kTwoPi * static_cast<double>(m) / static_cast<double>(grid);
      double direct = 0.0;
      for (size_t n = 1; n <= 8; ++n) {
        const double amp = std::sqrt(2.0 / static_cast<double>(n));
        // On the critical grid (grid = 2 modes) the top-mode sine vanishes at
        // every sample point, so the resummation is convention-free there.
        direct += amp * (f.coeff_a[n - 1] * std::cos(n * theta) +
                         f.coeff_b[n - 1] * std::sin(n * theta));
      }
      CHECK(f.values[m] == doctest::Approx(direct).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("circle: sampling is deterministic and needs grid >= 2 modes") {
  rng::Stream s1(rng::StreamKey{9, rng::hash_tag("circle"), 1, 0});
  rng::Stream s2(rng::StreamKey{9, rng::hash_tag("circle"), 1, 0});
  const auto a = fields::sample_circle_gff(16, 32, false, s1);
  const auto b = fields::sample_circle_gff(16, 32, false, s2);
  CHECK(a.values == b.values);
  rng::Stream s3(rng::StreamKey{9, rng::hash_tag("circle"), 1, 0});
  CHECK_THROWS_AS(fields::sample_circle_gff(16, 31, false, s3), std::invalid_argument);
}

TEST_CASE("circle: normalized field is the unnormalized one over sqrt(2)") {
  rng::Stream s1(rng::StreamKey{11, rng::hash_tag("circle"), 2, 0});
  rng::Stream s2(rng::StreamKey{11, rng::hash_tag("circle"), 2, 0});
  const auto raw = fields::sample_circle_gff(32, 64, false, s1);
  const auto norm = fields::sample_circle_gff(32, 64, true, s2);
  CHECK(norm.var_total == doctest::Approx(fields::harmonic_number(32)).epsilon(1e-15));
  const double inv = 1.0 / std::sqrt(2.0);
  for (size_t m = 0; m < raw.values.size(); ++m)
    CHECK(norm.values[m] == doctest::Approx(raw.values[m] * inv).epsilon(1e-12).scale(1.0));
}

TEST_CASE("circle: view exposes the theta-grid geometry") {
  rng::Stream s(rng::StreamKey{13, rng::hash_tag("circle"), 0, 0});
  const auto f = fields::sample_circle_gff(16, 32, true, s);
  const auto v = f.view();
  CHECK(v.d == 1);
  CHECK(v.num_cells == 32);
  CHECK(v.spacing == doctest::Approx(kTwoPi / 32.0).epsilon(1e-15));
  CHECK(v.cell_volume == doctest::Approx(kTwoPi / 32.0).epsilon(1e-15));
  CHECK(v.domain_volume == doctest::Approx(kTwoPi).epsilon(1e-15));
  CHECK(v.var_total == f.var_total);
  CHECK(v.gamma_c == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(v.values == f.values.data());
  CHECK(v.barrier_min == nullptr);
}

TEST_CASE("circle: empirical covariance matches the partial sum at every lag") {
  const size_t N = 64, M = 128, reps = 2000;
  std::vector<std::vector<double>> lagprod(M / 2 + 1, std::vector<double>(reps));
  for (size_t r = 0; r < reps; ++r) {
    rng::Stream s(rng::StreamKey{17, rng::hash_tag("circle"), r, 0});
    const auto f = fields::sample_circle_gff(N, M, false, s);
    for (size_t lag = 0; lag <= M / 2; ++lag) {
      double acc = 0.0;
      for (size_t m = 0; m < M; ++m) acc += f.values[m] * f.values[(m + lag) % M];
      lagprod[lag][r] = acc / static_cast<double>(M);
    }
  }
  for (size_t lag = 0; lag <= M / 2; ++lag) {
    const double target =
        fields::circle_covariance_partial_sum(N, kTwoPi * static_cast<double>(lag) / M);
    const auto est = stats::mean_result(lagprod[lag]);
    CHECK(std::abs(est.estimate - target) <= 4.0 * est.std_error);
  }
}
