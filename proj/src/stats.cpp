#include "chaoslab/stats.hpp"

#include <json.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace chaoslab::stats {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double sample_se(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1) /
                   static_cast<double>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------- basics --

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

EstimateResult mean_result(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("mean_result: empty sample");
  double m = 0.0;
  for (double x : samples) m += x;
  m /= static_cast<double>(samples.size());
  EstimateResult r;
  r.estimate = m;
  r.std_error = sample_se(samples, m);
  r.n = samples.size();
  r.ci_lo = m - 1.96 * r.std_error;
  r.ci_hi = m + 1.96 * r.std_error;
  return r;
}

double median_of(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("median_of: empty sample");
  std::sort(samples.begin(), samples.end());
  return quantile_sorted(samples, 0.5);
}

EstimateResult median_result(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("median_result: empty sample");
  std::sort(samples.begin(), samples.end());
  const size_t n = samples.size();
  EstimateResult r;
  r.estimate = quantile_sorted(samples, 0.5);
  r.n = n;
  // distribution-free order-statistic interval at ~95%
  const double half = 0.98 * std::sqrt(static_cast<double>(n));  // 1.96 sqrt(n) / 2
  const double mid = 0.5 * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(std::max(0.0, std::floor(mid - half)));
  const size_t hi = std::min(n - 1, static_cast<size_t>(std::ceil(mid + half)));
  r.ci_lo = samples[lo];
  r.ci_hi = samples[hi];
  // normal-approximation SE of a median is not distribution-free; report the
  // interval half-width as a conservative proxy
  r.std_error = 0.5 * (r.ci_hi - r.ci_lo) / 1.96;
  return r;
}

// ------------------------------------------------------- hypothesis tests --

double one_sample_ks(std::vector<double> samples,
                     const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("one_sample_ks: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("two_sample_ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t na = a.size(), nb = b.size();
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < na || j < nb) {
    const double x = (i < na && (j >= nb || a[i] <= b[j])) ? a[i] : b[j];
    while (i < na && a[i] <= x) ++i;
    while (j < nb && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(na) -
                             static_cast<double>(j) / static_cast<double>(nb)));
  }
  return d;
}

double ks_pvalue(double d, double n_eff) {
  if (d <= 0.0) return 1.0;
  const double rn = std::sqrt(n_eff);
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::exp(-2.0 * lambda * lambda *
                                       static_cast<double>(k) * static_cast<double>(k));
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

LjungBoxResult ljung_box(const std::vector<double>& series, size_t lags) {
  const size_t n = series.size();
  if (n < lags + 2) throw std::invalid_argument("ljung_box: series too short");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double x : series) denom += (x - mean) * (x - mean);
  if (!(denom > 0.0)) throw std::invalid_argument("ljung_box: constant series");

  double q = 0.0;
  for (size_t k = 1; k <= lags; ++k) {
    double num = 0.0;
    for (size_t i = 0; i + k < n; ++i)
      num += (series[i] - mean) * (series[i + k] - mean);
    const double rho = num / denom;
    q += rho * rho / static_cast<double>(n - k);
  }
  q *= static_cast<double>(n) * (static_cast<double>(n) + 2.0);

  LjungBoxResult r;
  r.statistic = q;
  r.lags = lags;
  // survival of chi^2 with `lags` degrees of freedom
  r.p_value = boost::math::gamma_q(static_cast<double>(lags) / 2.0, q / 2.0);
  return r;
}

MartingaleCheck martingale_check(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("martingale_check: need >= 2 pairs");
  std::vector<double> diffs;
  diffs.reserve(pairs.size());
  for (const auto& [before, after] : pairs) diffs.push_back(after - before);
  const EstimateResult m = mean_result(diffs);
  MartingaleCheck c;
  c.mean_diff = m.estimate;
  c.std_error = m.std_error;
  c.z = m.std_error > 0.0 ? m.estimate / m.std_error : 0.0;
  c.pairs = pairs.size();
  c.flagged = std::abs(c.z) > 3.0;
  c.low_pairs = pairs.size() < 100;
  return c;
}

// --------------------------------------------------------- moment scaling --

double critical_moment_exponent(int d, double q) {
  return 2.0 * d * q - d * q * q;
}

double subcritical_moment_exponent(int d, double gamma, double q) {
  return (d + 0.5 * gamma * gamma) * q - 0.5 * gamma * gamma * q * q;
}

ScalingFit moment_scaling(const std::function<measures::MeasureApprox(size_t)>& sample,
                          double q, const std::vector<double>& radii, size_t replicas,
                          double target_exponent) {
  if (radii.size() < 3)
    throw std::invalid_argument("moment_scaling: need at least 3 radii");
  if (replicas < 2) throw std::invalid_argument("moment_scaling: need >= 2 replicas");

  std::vector<double> moment_sum(radii.size(), 0.0);
  size_t used = 0, skipped = 0;
  double domain_side = 0.0, cutoff = 0.0;
  for (size_t r = 0; r < replicas; ++r) {
    const measures::MeasureApprox m = sample(r);
    if (r == 0) {
      cutoff = m.cutoff_var;
      domain_side = static_cast<double>(m.cells_per_side) * m.spacing;
      const double lo = 8.0 * std::exp(-cutoff);
      for (double rad : radii) {
        if (rad < lo * (1.0 - 1e-9) || rad > 0.5 * domain_side * (1.0 + 1e-9) ||
            !(rad > 0.0))
          throw std::invalid_argument(
              "moment_scaling: radius outside the resolved range");
      }
    }
    const double mid = 0.5 * domain_side;
    bool ok = true;
    std::vector<double> masses(radii.size());
    for (size_t k = 0; k < radii.size(); ++k) {
      measures::Box box;
      for (int ax = 0; ax < m.d; ++ax) {
        box.lo[ax] = mid - 0.5 * radii[k];
        box.hi[ax] = mid + 0.5 * radii[k];
      }
      masses[k] = m.box_mass(box);
      if (!(masses[k] > 0.0)) ok = false;
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    for (size_t k = 0; k < radii.size(); ++k)
      moment_sum[k] += std::pow(masses[k], q);
    ++used;
  }
  if (used < 2) throw std::runtime_error("moment_scaling: too few usable replicas");

  ScalingFit fit;
  fit.radii = radii;
  fit.target_exponent = target_exponent;
  fit.skipped_replicas = skipped;
  for (size_t k = 0; k < radii.size(); ++k) {
    fit.log_r.push_back(std::log(radii[k]));
    fit.log_moment.push_back(std::log(moment_sum[k] / static_cast<double>(used)));
  }
  const size_t np = radii.size();
  double mx = 0.0, my = 0.0;
  for (size_t k = 0; k < np; ++k) {
    mx += fit.log_r[k];
    my += fit.log_moment[k];
  }
  mx /= static_cast<double>(np);
  my /= static_cast<double>(np);
  double sxx = 0.0, sxy = 0.0;
  for (size_t k = 0; k < np; ++k) {
    sxx += (fit.log_r[k] - mx) * (fit.log_r[k] - mx);
    sxy += (fit.log_r[k] - mx) * (fit.log_moment[k] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (size_t k = 0; k < np; ++k) {
    const double resid = fit.log_moment[k] - (fit.intercept + fit.slope * fit.log_r[k]);
    ss_res += resid * resid;
  }
  fit.slope_se =
      np > 2 ? std::sqrt(ss_res / static_cast<double>(np - 2) / sxx) : 0.0;
  return fit;
}

// ------------------------------------------------------------ tail / laws --

TailReport tail_estimate(const std::vector<double>& samples,
                         const std::vector<double>& thresholds, double domain_volume,
                         int d) {
  if (samples.size() < 10000)
    throw std::invalid_argument("tail_estimate: need at least 1e4 samples");
  TailReport rep;
  rep.target = domain_volume / std::sqrt(std::numbers::pi * static_cast<double>(d));
  const double n = static_cast<double>(samples.size());
  for (double u : thresholds) {
    size_t count = 0;
    for (double x : samples)
      if (x > u) ++count;
    TailPoint p;
    p.threshold = u;
    const double phat = static_cast<double>(count) / n;
    p.t_times_p = u * phat;
    p.std_error = u * std::sqrt(std::max(phat * (1.0 - phat), 0.0) / n);
    p.exceedances = count;
    p.flagged = count < 30;
    rep.points.push_back(p);
  }
  return rep;
}

bool tail_plateau_ok(const TailReport& report, double rel_tol, size_t min_run) {
  size_t run = 0;
  for (const TailPoint& p : report.points) {
    const bool hit = !p.flagged &&
                     std::abs(p.t_times_p - report.target) <= rel_tol * report.target;
    run = hit ? run + 1 : 0;
    if (run >= min_run) return true;
  }
  return false;
}

std::string TailReport::to_json() const {
  nlohmann::json j;
  j["target"] = target;
  j["points"] = nlohmann::json::array();
  for (const TailPoint& p : points) {
    j["points"].push_back({{"threshold", p.threshold},
                           {"t_times_p", p.t_times_p},
                           {"std_error", p.std_error},
                           {"exceedances", p.exceedances},
                           {"flagged", p.flagged}});
  }
  return j.dump(2);
}

GumbelReport gumbel_test(const std::vector<double>& masses) {
  GumbelReport rep;
  std::vector<double> logs, scaled;
  for (double m : masses) {
    if (m > 0.0) {
      scaled.push_back(std::numbers::sqrt2 * m);
      logs.push_back(std::log(scaled.back()));
    } else {
      ++rep.excluded_nonpositive;
    }
  }
  if (logs.empty()) throw std::runtime_error("gumbel_test: no positive masses");
  rep.n_used = logs.size();
  rep.ks_distance =
      one_sample_ks(logs, [](double x) { return std::exp(-std::exp(-x)); });
  rep.median_scaled_mass = median_of(scaled);
  rep.median_target = 1.0 / std::log(2.0);
  return rep;
}

std::string GumbelReport::to_json() const {
  nlohmann::json j;
  j["n_used"] = n_used;
  j["excluded_nonpositive"] = excluded_nonpositive;
  j["ks_distance"] = ks_distance;
  j["median_scaled_mass"] = median_scaled_mass;
  j["median_target"] = median_target;
  return j.dump(2);
}

ShRatioReport sh_ratio(const std::vector<double>& sh_masses,
                       const std::vector<double>& derivative_masses) {
  if (sh_masses.size() != derivative_masses.size())
    throw std::invalid_argument("sh_ratio: sample size mismatch");
  std::vector<double> ratios;
  ShRatioReport rep;
  for (size_t i = 0; i < sh_masses.size(); ++i) {
    if (derivative_masses[i] > 0.0) {
      ratios.push_back(sh_masses[i] / derivative_masses[i]);
    } else {
      ++rep.excluded_nonpositive;
    }
  }
  if (ratios.empty())
    throw std::runtime_error("sh_ratio: no replicas with positive derivative mass");
  rep.n_used = ratios.size();
  rep.median = median_result(ratios);
  rep.mean = mean_result(ratios);
  rep.target = std::sqrt(2.0 / std::numbers::pi);
  return rep;
}

std::string ShRatioReport::to_json() const {
  nlohmann::json j;
  j["n_used"] = n_used;
  j["excluded_nonpositive"] = excluded_nonpositive;
  j["median"] = median.estimate;
  j["median_ci"] = {median.ci_lo, median.ci_hi};
  j["mean"] = mean.estimate;
  j["mean_se"] = mean.std_error;
  j["target"] = target;
  return j.dump(2);
}

// --------------------------------------------------------------- meander --

MeanderSample sample_meander_endpoints(size_t n, size_t steps,
                                       const rng::StreamKey& base) {
  if (n == 0 || steps < 2)
    throw std::invalid_argument("sample_meander_endpoints: bad parameters");
  MeanderSample out;
  out.endpoints.reserve(n);
  rng::Stream stream(base);
  const double sd = 1.0 / std::sqrt(static_cast<double>(steps));
  while (out.endpoints.size() < n) {
    ++out.attempts;
    double x = 0.0;
    bool alive = true;
    for (size_t j = 0; j < steps; ++j) {
      x += sd * stream.gaussian();
      if (x <= 0.0) {
        alive = false;
        break;
      }
    }
    if (alive) out.endpoints.push_back(x);
    if (out.attempts >= 10000 && out.attempts > 10000 * (out.endpoints.size() + 1))
      throw std::runtime_error("sample_meander_endpoints: acceptance rate below 1e-4");
  }
  out.acceptance = static_cast<double>(n) / static_cast<double>(out.attempts);
  return out;
}

double meander_laplace_exact(double c) {
  return 1.0 + std::sqrt(2.0 * std::numbers::pi) * c * std::exp(0.5 * c * c) *
                   normal_cdf(c);
}

MeanderReport meander_laplace(double c, size_t replicas, size_t steps,
                              const rng::StreamKey& base) {
  if (c < 0.0 || c > 3.0)
    throw std::invalid_argument("meander_laplace: c must lie in [0, 3]");
  const MeanderSample ms = sample_meander_endpoints(replicas, steps, base);
  std::vector<double> vals;
  vals.reserve(ms.endpoints.size());
  for (double r : ms.endpoints) vals.push_back(std::exp(c * r));
  MeanderReport rep;
  rep.c = c;
  rep.laplace = mean_result(vals);
  rep.exact = meander_laplace_exact(c);
  rep.asymptote = std::sqrt(2.0 * std::numbers::pi) * c * std::exp(0.5 * c * c);
  rep.acceptance = ms.acceptance;
  rep.steps = steps;
  return rep;
}

std::string MeanderReport::to_json() const {
  nlohmann::json j;
  j["c"] = c;
  j["estimate"] = laplace.estimate;
  j["std_error"] = laplace.std_error;
  j["n"] = laplace.n;
  j["exact"] = exact;
  j["asymptote"] = asymptote;
  j["acceptance"] = acceptance;
  j["steps"] = steps;
  return j.dump(2);
}

// ---------------------------------------------------------------- kahane --

KahaneReport kahane_compare(const fields::StarFieldSampler& sampler, double shift_var,
                            double gamma, const std::function<double(double)>& convex_f,
                            size_t replicas, const rng::StreamKey& base) {
  if (replicas < 2) throw std::invalid_argument("kahane_compare: need >= 2 replicas");
  // verify pointwise covariance domination K_B = K_A + shift_var >= K_A on
  // a grid of lags before any sampling
  const size_t n = sampler.grid().num_cells();
  const size_t step = std::max<size_t>(1, n / 512);
  for (size_t j = 0; j < n; j += step) {
    const double ka = sampler.total_cov_cells(0, j);
    const double kb = ka + shift_var;
    if (kb < ka - 1e-12)
      throw std::invalid_argument(
          "kahane_compare: covariance domination fails on the grid");
  }

  fields::StarFieldOptions opts;
  opts.track_barrier = false;
  std::vector<double> fa, fb;
  fa.reserve(replicas);
  fb.reserve(replicas);
  const double sd_shift = std::sqrt(std::max(shift_var, 0.0));
  for (size_t r = 0; r < replicas; ++r) {
    fields::ScaleField a =
        sampler.sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "a"), r, 0}, opts);
    fa.push_back(convex_f(measures::subcritical_measure(a.view(), gamma).total_mass()));

    fields::ScaleField b =
        sampler.sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "b"), r, 0}, opts);
    rng::Stream shift_stream(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "b-shift"), r, 0});
    const double shift = sd_shift * shift_stream.gaussian();
    for (double& v : b.values) v += shift;
    b.var_total += shift_var;
    fb.push_back(convex_f(measures::subcritical_measure(b.view(), gamma).total_mass()));
  }

  KahaneReport rep;
  rep.side_a = mean_result(fa);
  rep.side_b = mean_result(fb);
  const double pooled = std::hypot(rep.side_a.std_error, rep.side_b.std_error);
  rep.z = pooled > 0.0 ? (rep.side_a.estimate - rep.side_b.estimate) / pooled : 0.0;
  rep.reject = rep.z > 3.0;
  rep.f_a = std::move(fa);
  rep.f_b = std::move(fb);
  return rep;
}

std::string KahaneReport::to_json() const {
  nlohmann::json j;
  j["side_a_mean"] = side_a.estimate;
  j["side_a_se"] = side_a.std_error;
  j["side_b_mean"] = side_b.estimate;
  j["side_b_se"] = side_b.std_error;
  j["z"] = z;
  j["reject"] = reject;
  j["replicas"] = side_a.n;
  return j.dump(2);
}

// ---------------------------------------------------------- scale fixpoint --

StarEqReport star_equation_check(const fields::Kernel& kernel, size_t cells_per_unit,
                                 double gamma, double t, double deep_t, double dt,
                                 size_t replicas, const rng::StreamKey& base) {
  if (kernel.dim() != 1)
    throw std::invalid_argument("star_equation_check: implemented for d=1 grids");
  const double gc = fields::gamma_c(1);
  if (gamma < 0.0 || !(gamma < gc))
    throw std::invalid_argument("star_equation_check: gamma must lie in [0, gamma_c)");
  if (!(deep_t > 0.0) || t < 0.0)
    throw std::invalid_argument("star_equation_check: need deep_t > 0 and t >= 0");
  if (replicas < 10) throw std::invalid_argument("star_equation_check: too few replicas");

  const double h = 1.0 / static_cast<double>(cells_per_unit);
  const double scale = std::exp(t);
  const double dilated_extent = scale + 2.0 * h;
  if (dilated_extent * static_cast<double>(cells_per_unit) > 4.0e6)
    throw std::invalid_argument(
        "star_equation_check: rescaled window leaves the resolved grid");

  const fields::GridSpec unit_grid{1, cells_per_unit, 1.0};
  const fields::GridSpec dilated_grid{1, cells_per_unit, dilated_extent};
  const fields::StarFieldSampler direct(kernel, unit_grid, t + deep_t, dt);
  const fields::StarFieldSampler deep(kernel, dilated_grid, deep_t, dt);
  fields::StarFieldOptions opts;
  opts.track_barrier = false;

  StarEqReport rep;
  rep.gamma = gamma;
  rep.t = t;
  rep.deep_t = deep_t;
  rep.replicas = replicas;

  const size_t m = unit_grid.num_cells();
  const bool has_small_field = t > 0.0;
  std::unique_ptr<fields::StarFieldSampler> small;
  if (has_small_field)
    small = std::make_unique<fields::StarFieldSampler>(kernel, unit_grid, t, dt);

  std::vector<double> prefix(deep.grid().num_cells() + 1);
  for (size_t r = 0; r < replicas; ++r) {
    // direct side: total mass at the combined cutoff
    fields::ScaleField fd =
        direct.sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "direct"), r, 0}, opts);
    rep.direct_samples.push_back(
        measures::subcritical_measure(fd.view(), gamma).total_mass());

    // composite side: independent coarse field times deep-cutoff box masses
    fields::ScaleField fz =
        deep.sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "deep"), r, 0}, opts);
    const measures::MeasureApprox mu_deep =
        measures::subcritical_measure(fz.view(), gamma);
    prefix[0] = 0.0;
    for (size_t i = 0; i < mu_deep.weights.size(); ++i)
      prefix[i + 1] = prefix[i] + mu_deep.weights[i];
    const double deep_len =
        static_cast<double>(mu_deep.weights.size()) * mu_deep.spacing;
    auto cum = [&](double x) {
      x = std::min(std::max(x, 0.0), deep_len);
      const double pos = x / mu_deep.spacing;
      size_t idx = static_cast<size_t>(pos);
      if (idx >= mu_deep.weights.size()) return prefix.back();
      return prefix[idx] + (pos - static_cast<double>(idx)) * mu_deep.weights[idx];
    };

    double composite = 0.0;
    if (has_small_field) {
      fields::ScaleField ft =
          small->sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "coarse"), r, 0}, opts);
      const double var_t = ft.var_total;
      const double damp = std::exp(-1.0 * var_t);  // e^{-d t} with d = 1
      const double shift = 0.5 * gamma * gamma * var_t;
      for (size_t i = 0; i < m; ++i) {
        const double w = std::exp(gamma * ft.values[i] - shift) * damp;
        composite +=
            w * (cum(scale * static_cast<double>(i + 1) * h) -
                 cum(scale * static_cast<double>(i) * h));
      }
    } else {
      composite = cum(1.0) - cum(0.0);
    }
    rep.composite_samples.push_back(composite);
  }

  rep.ks_distance = two_sample_ks(rep.direct_samples, rep.composite_samples);
  const double n_eff = static_cast<double>(replicas) / 2.0;
  rep.p_value = ks_pvalue(rep.ks_distance, n_eff);
  rep.direct_median = median_of(rep.direct_samples);
  rep.composite_median = median_of(rep.composite_samples);
  return rep;
}

std::string StarEqReport::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["t"] = t;
  j["deep_t"] = deep_t;
  j["replicas"] = replicas;
  j["ks_distance"] = ks_distance;
  j["p_value"] = p_value;
  j["direct_median"] = direct_median;
  j["composite_median"] = composite_median;
  return j.dump(2);
}

// ------------------------------------------------------------ thick points --

EstimateResult thick_point_statistic(const fields::StarFieldSampler& sampler,
                                     double gamma, size_t replicas,
                                     const rng::StreamKey& base) {
  if (!(gamma < fields::gamma_c(sampler.grid().d)) || gamma < 0.0)
    throw std::invalid_argument("thick_point_statistic: gamma must lie in [0, gamma_c)");
  if (!(sampler.t_max() > 0.0))
    throw std::invalid_argument("thick_point_statistic: needs t > 0");
  fields::StarFieldOptions opts;
  opts.track_barrier = false;
  std::vector<double> vals;
  vals.reserve(replicas);
  for (size_t r = 0; r < replicas; ++r) {
    fields::ScaleField f =
        sampler.sample(rng::StreamKey{base.seed, base.tag, r, 0}, opts);
    const measures::MeasureApprox mu = measures::subcritical_measure(f.view(), gamma);
    const double mass = mu.total_mass();
    if (!(mass > 0.0)) throw std::runtime_error("thick_point_statistic: zero mass");
    rng::Stream pick(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "pick"), r, 0});
    double u = pick.uniform() * mass;
    size_t cell = mu.weights.size() - 1;
    for (size_t i = 0; i < mu.weights.size(); ++i) {
      u -= mu.weights[i];
      if (u <= 0.0) {
        cell = i;
        break;
      }
    }
    vals.push_back(f.values[cell] / f.var_total);
  }
  return mean_result(vals);
}

// ---------------------------------------------------------------- extremes --

double recentring_m_t(int d, double t) {
  const double a = std::sqrt(2.0 * static_cast<double>(d));
  return a * t - 1.5 / a * std::log(t);
}

bool ExtremesReport::iqr_stable(double rel_tol) const {
  if (iqr.empty()) return false;
  double mean = 0.0;
  for (double v : iqr) mean += v;
  mean /= static_cast<double>(iqr.size());
  for (double v : iqr)
    if (std::abs(v - mean) > rel_tol * mean) return false;
  return true;
}

std::string ExtremesReport::to_json() const {
  nlohmann::json j;
  j["t_values"] = t_values;
  j["m_t"] = m_t;
  j["iqr"] = iqr;
  j["cstar"] = cstar;
  j["cstar_rmse"] = cstar_rmse;
  j["replicas"] = recentred_max.empty() ? 0 : recentred_max[0].size();
  return j.dump(2);
}

ExtremesReport extremes(const fields::Kernel& kernel, int d, size_t cells_per_unit,
                        const std::vector<double>& t_values, double dt,
                        size_t replicas, const rng::StreamKey& base) {
  if (t_values.empty()) throw std::invalid_argument("extremes: no cutoffs given");
  std::vector<double> ts = t_values;
  std::sort(ts.begin(), ts.end());
  const double t_max = ts.back();
  if (1.0 / static_cast<double>(cells_per_unit) > std::exp(-t_max) * (1.0 + 1e-9))
    throw std::invalid_argument(
        "extremes: grid too coarse to resolve the supremum at the deepest cutoff");

  const fields::GridSpec grid{d, cells_per_unit, 1.0};
  const fields::StarFieldSampler sampler(kernel, grid, t_max, dt);
  fields::StarFieldOptions opts;
  opts.track_barrier = false;
  for (double t : ts)
    opts.snapshot_levels.push_back(static_cast<size_t>(std::llround(t / dt)));

  ExtremesReport rep;
  rep.t_values = ts;
  for (double t : ts) rep.m_t.push_back(recentring_m_t(d, t));
  rep.recentred_max.assign(ts.size(), {});
  std::vector<double> deriv_mass;
  deriv_mass.reserve(replicas);

  for (size_t r = 0; r < replicas; ++r) {
    fields::ScaleField f =
        sampler.sample(rng::StreamKey{base.seed, base.tag, r, 0}, opts);
    for (size_t k = 0; k < ts.size(); ++k) {
      const fields::FieldView v =
          f.view_snapshot(static_cast<size_t>(std::llround(ts[k] / dt)));
      double mx = v.values[0];
      for (size_t i = 1; i < v.num_cells; ++i) mx = std::max(mx, v.values[i]);
      rep.recentred_max[k].push_back(mx - rep.m_t[k]);
    }
    deriv_mass.push_back(measures::derivative_measure(f.view()).total_mass());
  }

  for (size_t k = 0; k < ts.size(); ++k) {
    std::vector<double> sorted = rep.recentred_max[k];
    std::sort(sorted.begin(), sorted.end());
    rep.iqr.push_back(quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));
  }

  // fit the free constant of P(max - m_t <= y) = E exp(-C e^{-sqrt(2d) y} W)
  // on decile points of the deepest-cutoff samples; never asserted, only
  // reported
  const std::vector<double>& z = rep.recentred_max.back();
  std::vector<double> zs = z;
  std::sort(zs.begin(), zs.end());
  std::vector<double> ys, fs;
  for (int qd = 1; qd <= 9; ++qd) {
    ys.push_back(quantile_sorted(zs, 0.1 * qd));
    fs.push_back(0.1 * qd);
  }
  const double a = std::sqrt(2.0 * static_cast<double>(d));
  auto rmse_at = [&](double cc) {
    double acc = 0.0;
    for (size_t k = 0; k < ys.size(); ++k) {
      double model = 0.0;
      size_t used = 0;
      for (double w : deriv_mass) {
        if (w <= 0.0) continue;
        model += std::exp(-cc * std::exp(-a * ys[k]) * w);
        ++used;
      }
      if (used == 0) return 1e9;
      model /= static_cast<double>(used);
      acc += (model - fs[k]) * (model - fs[k]);
    }
    return std::sqrt(acc / static_cast<double>(ys.size()));
  };
  double best_c = 1.0, best_r = rmse_at(1.0);
  for (double lc = -6.0; lc <= 6.0; lc += 0.05) {
    const double cc = std::pow(10.0, lc);
    const double rr = rmse_at(cc);
    if (rr < best_r) {
      best_r = rr;
      best_c = cc;
    }
  }
  rep.cstar = best_c;
  rep.cstar_rmse = best_r;
  return rep;
}

}  // namespace chaoslab::stats
