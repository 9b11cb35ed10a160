#pragma once
// Rooted (tilted) samplers and the spine checks built on them.
//
// Rooting at gamma: pick a uniform grid cell x*, then add the deterministic
// mean shift gamma * Cov_layer(x, x*) at every layer.  This leaves the
// covariance untouched and gives X(x*) mean gamma * Var — the size-biased
// field whose marginal of x* given the field is proportional to the chaos
// weights.  Two consequences are testable without any new machinery:
//   - importance identities  E_tilted[g] = E_plain[sum_cells w(cell) g(cell)] / |A|
//     for bounded functionals g (the plain side is evaluated cell-by-cell);
//   - under the critical tilt plus barrier reweighting, the spine value
//     V_t = beta + gamma_c t - X_t(x*) follows a Bessel(3) process from beta,
//     which we verify against a direct |3-d Brownian motion| oracle.

#include <cstddef>
#include <string>
#include <vector>

#include "chaoslab/field.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab::spine {

struct RootedSample {
  size_t root_cell = 0;
  double gamma = 0.0;
  fields::ScaleField field;
};

// x* is drawn from the level-0 stream of `base` (field layers use levels
// >= 1), so the rooted replica is reproducible from the same key.
// Requires 0 <= gamma <= gamma_c.
RootedSample sample_rooted_field(const fields::StarFieldSampler& sampler, double gamma,
                                 const rng::StreamKey& base,
                                 const fields::StarFieldOptions& opts = {});

// One two-estimator comparison: plain-measure side vs tilted-sampler side.
struct ImportanceCheck {
  std::string functional;
  double plain_mean = 0.0;
  double plain_se = 0.0;
  double tilted_mean = 0.0;
  double tilted_se = 0.0;
  double z = 0.0;  // difference over pooled standard error
  size_t replicas = 0;
};

// Battery of five bounded functionals: constant one, indicator that the root
// value exceeds its tilted mean, the clipped value at cell 0, exp(-total
// mass), and the fraction of positive cells.  Plain and tilted runs use
// distinct stream tags derived from `base.tag`.
std::vector<ImportanceCheck> importance_identity_check(
    const fields::StarFieldSampler& sampler, double gamma, size_t replicas,
    const rng::StreamKey& base);

struct BesselCheck {
  double beta = 0.0;
  double t_max = 0.0;
  size_t walks = 0;         // raw tilted walks simulated
  double ess = 0.0;         // effective sample size of the weights
  bool ess_warning = false; // ess < 100
  double r2_estimate = 0.0; // weighted estimate of E[R_t^2]
  double r2_se = 0.0;
  double r2_exact = 0.0;    // beta^2 + 3 t
  double ks_distance = 0.0; // weighted sample vs oracle sample
  size_t oracle_n = 0;
  std::vector<double> values;   // per-walk endpoint V_t
  std::vector<double> weights;  // per-walk importance weight
  std::string to_json() const;
};

// Spine-marginal check: V is a Brownian motion from beta under the critical
// tilt; reweighting by (V_t / beta) times per-step bridge non-crossing
// factors turns it into Bessel(3) from beta, compared here against
// |(beta,0,0) + sqrt(t) N(0,I_3)| draws.  Requires beta > 0.
BesselCheck bessel_spine_check(double beta, double t_max, double dt, size_t walks,
                               size_t oracle_n, const rng::StreamKey& base);

// Kolmogorov–Smirnov distance between a weighted sample and an unweighted
// oracle sample (weights >= 0, not all zero).  Exposed for tests.
double weighted_ks_distance(std::vector<double> values, std::vector<double> weights,
                            std::vector<double> oracle);

}  // namespace chaoslab::spine
