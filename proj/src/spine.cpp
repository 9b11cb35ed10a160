#include "chaoslab/spine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "chaoslab/measure.hpp"

namespace chaoslab::spine {

namespace {

struct Accum {
  double sum = 0.0, sum2 = 0.0;
  size_t n = 0;
  void add(double v) { sum += v; sum2 += v * v; ++n; }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    const double m = mean();
    const double var = (sum2 / static_cast<double>(n) - m * m) *
                       static_cast<double>(n) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

RootedSample sample_rooted_field(const fields::StarFieldSampler& sampler, double gamma,
                                 const rng::StreamKey& base,
                                 const fields::StarFieldOptions& opts) {
  const double gc = fields::gamma_c(sampler.grid().d);
  if (gamma < 0.0 || gamma > gc * (1.0 + 1e-12))
    throw std::invalid_argument("sample_rooted_field: gamma must lie in [0, gamma_c]");
  rng::Stream root_stream(rng::StreamKey{base.seed, base.tag, base.replica, 0});
  const size_t n = sampler.grid().num_cells();
  size_t cell = static_cast<size_t>(root_stream.uniform() * static_cast<double>(n));
  if (cell >= n) cell = n - 1;

  fields::StarFieldOptions tilted = opts;
  tilted.tilt.enabled = true;
  tilted.tilt.gamma = gamma;
  tilted.tilt.cell = cell;

  RootedSample r;
  r.root_cell = cell;
  r.gamma = gamma;
  r.field = sampler.sample(base, tilted);
  return r;
}

std::vector<ImportanceCheck> importance_identity_check(
    const fields::StarFieldSampler& sampler, double gamma, size_t replicas,
    const rng::StreamKey& base) {
  const double gc = fields::gamma_c(sampler.grid().d);
  if (!(gamma > 0.0) || gamma > gc * (1.0 + 1e-12))
    throw std::invalid_argument("importance_identity_check: gamma must lie in (0, gamma_c]");
  if (replicas < 2)
    throw std::invalid_argument("importance_identity_check: need at least 2 replicas");

  constexpr size_t kFunctionals = 5;
  const char* names[kFunctionals] = {"constant_one", "root_above_tilted_mean",
                                     "value_at_origin_clipped", "exp_neg_total_mass",
                                     "fraction_positive_cells"};
  Accum plain[kFunctionals], tilted[kFunctionals];

  fields::StarFieldOptions opts;
  opts.track_barrier = false;
  const double var = sampler.var_total();
  const double mean_at_root = gamma * var;

  for (size_t r = 0; r < replicas; ++r) {
    // plain side: cell-weighted expectations under the chaos measure
    fields::ScaleField f =
        sampler.sample(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "plain"), r, 0}, opts);
    const fields::FieldView v = f.view();
    measures::MeasureApprox mu = measures::subcritical_measure(v, gamma);
    const double inv_vol = 1.0 / v.domain_volume;
    double mass = 0.0, above = 0.0;
    size_t pos = 0;
    for (size_t i = 0; i < v.num_cells; ++i) {
      mass += mu.weights[i];
      if (v.values[i] > mean_at_root) above += mu.weights[i];
      if (v.values[i] > 0.0) ++pos;
    }
    plain[0].add(mass * inv_vol);
    plain[1].add(above * inv_vol);
    plain[2].add(clip(v.values[0], -10.0, 10.0) * mass * inv_vol);
    plain[3].add(std::exp(-mass) * mass * inv_vol);
    plain[4].add(static_cast<double>(pos) / static_cast<double>(v.num_cells) * mass *
                 inv_vol);

    // tilted side: plain functionals of the rooted sample
    RootedSample rs = sample_rooted_field(
        sampler, gamma, rng::StreamKey{base.seed, rng::derive_tag(base.tag, "tilted"), r, 0}, opts);
    const fields::FieldView tv = rs.field.view();
    measures::MeasureApprox tmu = measures::subcritical_measure(tv, gamma);
    double tmass = 0.0;
    size_t tpos = 0;
    for (size_t i = 0; i < tv.num_cells; ++i) {
      tmass += tmu.weights[i];
      if (tv.values[i] > 0.0) ++tpos;
    }
    tilted[0].add(1.0);
    tilted[1].add(tv.values[rs.root_cell] > mean_at_root ? 1.0 : 0.0);
    tilted[2].add(clip(tv.values[0], -10.0, 10.0));
    tilted[3].add(std::exp(-tmass));
    tilted[4].add(static_cast<double>(tpos) / static_cast<double>(tv.num_cells));
  }

  std::vector<ImportanceCheck> out(kFunctionals);
  for (size_t k = 0; k < kFunctionals; ++k) {
    ImportanceCheck& c = out[k];
    c.functional = names[k];
    c.plain_mean = plain[k].mean();
    c.plain_se = plain[k].se();
    c.tilted_mean = tilted[k].mean();
    c.tilted_se = tilted[k].se();
    const double pooled = std::hypot(c.plain_se, c.tilted_se);
    c.z = pooled > 0.0 ? (c.plain_mean - c.tilted_mean) / pooled : 0.0;
    c.replicas = replicas;
  }
  return out;
}

double weighted_ks_distance(std::vector<double> values, std::vector<double> weights,
                            std::vector<double> oracle) {
  if (values.size() != weights.size())
    throw std::invalid_argument("weighted_ks_distance: size mismatch");
  if (oracle.empty()) throw std::invalid_argument("weighted_ks_distance: empty oracle");
  std::vector<std::pair<double, double>> vw;
  vw.reserve(values.size());
  double total = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0.0)
      throw std::invalid_argument("weighted_ks_distance: negative weight");
    if (weights[i] > 0.0) {
      vw.emplace_back(values[i], weights[i]);
      total += weights[i];
    }
  }
  if (!(total > 0.0)) throw std::invalid_argument("weighted_ks_distance: zero total weight");
  std::sort(vw.begin(), vw.end());
  std::sort(oracle.begin(), oracle.end());

  const size_t nv = vw.size(), no = oracle.size();
  size_t i = 0, j = 0;
  double cw = 0.0, d = 0.0;
  while (i < nv || j < no) {
    const double x = (i < nv && (j >= no || vw[i].first <= oracle[j])) ? vw[i].first
                                                                       : oracle[j];
    while (i < nv && vw[i].first <= x) cw += vw[i++].second;
    while (j < no && oracle[j] <= x) ++j;
    d = std::max(d, std::abs(cw / total -
                             static_cast<double>(j) / static_cast<double>(no)));
  }
  return d;
}

std::string BesselCheck::to_json() const {
  nlohmann::json j;
  j["beta"] = beta;
  j["t_max"] = t_max;
  j["walks"] = walks;
  j["effective_sample_size"] = ess;
  j["ess_warning"] = ess_warning;
  j["r2_estimate"] = r2_estimate;
  j["r2_se"] = r2_se;
  j["r2_exact"] = r2_exact;
  j["ks_distance"] = ks_distance;
  j["oracle_n"] = oracle_n;
  return j.dump(2);
}

BesselCheck bessel_spine_check(double beta, double t_max, double dt, size_t walks,
                               size_t oracle_n, const rng::StreamKey& base) {
  if (!(beta > 0.0)) throw std::invalid_argument("bessel_spine_check: beta must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("bessel_spine_check: dt must be > 0");
  if (t_max < 0.0) throw std::invalid_argument("bessel_spine_check: t_max must be >= 0");
  if (walks < 2 || oracle_n < 2)
    throw std::invalid_argument("bessel_spine_check: need at least 2 samples per side");
  const size_t steps = static_cast<size_t>(std::llround(t_max / dt));
  if (std::abs(static_cast<double>(steps) * dt - t_max) > 1e-9)
    throw std::invalid_argument("bessel_spine_check: t_max must be a multiple of dt");

  // tilted walks: V is Brownian from beta; weight (V_t/beta) * bridge factors
  std::vector<double> val(walks), wgt(walks, 0.0);
  const double sd = std::sqrt(dt);
  double wsum = 0.0, wsum2 = 0.0;
  for (size_t r = 0; r < walks; ++r) {
    rng::Stream stream(rng::StreamKey{base.seed, base.tag, r, 1});
    double v = beta, w = 1.0;
    for (size_t j = 0; j < steps; ++j) {
      const double vn = v - sd * stream.gaussian();
      w = (v > 0.0 && vn > 0.0) ? w * (1.0 - std::exp(-2.0 * v * vn / dt)) : 0.0;
      v = vn;
      if (w == 0.0) break;
    }
    if (w > 0.0) w *= v / beta;
    val[r] = v;
    wgt[r] = w;
    wsum += w;
    wsum2 += w * w;
  }
  if (!(wsum > 0.0))
    throw std::runtime_error("bessel_spine_check: all walks crossed the barrier");

  BesselCheck out;
  out.beta = beta;
  out.t_max = t_max;
  out.walks = walks;
  out.ess = wsum * wsum / wsum2;
  out.ess_warning = out.ess < 100.0;
  out.r2_exact = beta * beta + 3.0 * t_max;

  double est = 0.0;
  for (size_t r = 0; r < walks; ++r) est += wgt[r] * val[r] * val[r];
  est /= wsum;
  double se2 = 0.0;
  for (size_t r = 0; r < walks; ++r) {
    const double dres = val[r] * val[r] - est;
    se2 += wgt[r] * wgt[r] * dres * dres;
  }
  out.r2_estimate = est;
  out.r2_se = std::sqrt(se2) / wsum;

  // oracle: |(beta,0,0) + sqrt(t) N(0,I_3)|
  std::vector<double> oracle(oracle_n);
  rng::Stream ostream(rng::StreamKey{base.seed, rng::derive_tag(base.tag, "oracle"), 0, 0});
  const double st = std::sqrt(t_max);
  for (size_t i = 0; i < oracle_n; ++i) {
    const double a = beta + st * ostream.gaussian();
    const double b = st * ostream.gaussian();
    const double c = st * ostream.gaussian();
    oracle[i] = std::sqrt(a * a + b * b + c * c);
  }
  out.oracle_n = oracle_n;
  out.ks_distance = weighted_ks_distance(val, wgt, oracle);
  out.values = std::move(val);
  out.weights = std::move(wgt);
  return out;
}

}  // namespace chaoslab::spine
