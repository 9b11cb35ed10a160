#include "chaoslab/measure.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace chaoslab::measures {

namespace {

MeasureApprox base_from_view(const fields::FieldView& v, MeasureKind kind) {
  MeasureApprox m;
  m.kind = kind;
  m.cutoff_var = v.var_total;
  m.d = v.d;
  m.cells_per_side = v.cells_per_side;
  m.spacing = v.spacing;
  m.cell_volume = v.cell_volume;
  m.gamma_c = v.gamma_c;
  m.weights.resize(v.num_cells);
  return m;
}

}  // namespace

const char* kind_name(MeasureKind k) {
  switch (k) {
    case MeasureKind::subcritical: return "subcritical";
    case MeasureKind::seneta_heyde: return "seneta_heyde";
    case MeasureKind::derivative: return "derivative";
    case MeasureKind::barrier: return "barrier";
    case MeasureKind::subcritical_rescaled: return "subcritical_rescaled";
  }
  return "unknown";
}

double MeasureApprox::total_mass() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double MeasureApprox::positive_part() const {
  double s = 0.0;
  for (double w : weights)
    if (w > 0.0) s += w;
  return s;
}

double MeasureApprox::negative_part() const {
  double s = 0.0;
  for (double w : weights)
    if (w < 0.0) s -= w;
  return s;
}

size_t MeasureApprox::negative_count() const {
  size_t c = 0;
  for (double w : weights)
    if (w < 0.0) ++c;
  return c;
}

double MeasureApprox::box_mass(const Box& box) const {
  auto overlap = [this](double lo, double hi, size_t cell) {
    const double a = static_cast<double>(cell) * spacing;
    const double b = a + spacing;
    const double len = std::min(hi, b) - std::max(lo, a);
    return len > 0.0 ? len / spacing : 0.0;
  };
  double s = 0.0;
  if (d == 1) {
    for (size_t i = 0; i < weights.size(); ++i) {
      const double f = overlap(box.lo[0], box.hi[0], i);
      if (f > 0.0) s += f * weights[i];
    }
    return s;
  }
  const size_t side = cells_per_side;
  for (size_t iy = 0; iy < side; ++iy) {
    const double fy = overlap(box.lo[1], box.hi[1], iy);
    if (fy <= 0.0) continue;
    for (size_t ix = 0; ix < side; ++ix) {
      const double fx = overlap(box.lo[0], box.hi[0], ix);
      if (fx > 0.0) s += fx * fy * weights[iy * side + ix];
    }
  }
  return s;
}

void MeasureApprox::write_csv(std::ostream& os) const {
  os << "cell,weight\n";
  char buf[40];
  for (size_t i = 0; i < weights.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, weights[i]);
    os << buf;
  }
}

std::string MeasureApprox::summary_json() const {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  j["gamma"] = gamma;
  if (kind == MeasureKind::barrier) j["beta"] = beta;
  j["cutoff_variance"] = cutoff_var;
  j["dimension"] = d;
  j["cells_per_side"] = cells_per_side;
  j["total"] = total_mass();
  j["positive_part"] = positive_part();
  j["negative_part"] = negative_part();
  j["negative_count"] = negative_count();
  return j.dump(2);
}

MeasureApprox subcritical_measure(const fields::FieldView& view, double gamma) {
  if (gamma < 0.0)
    throw std::invalid_argument("subcritical_measure: gamma must be >= 0");
  MeasureApprox m = base_from_view(view, MeasureKind::subcritical);
  m.gamma = gamma;
  const double shift = 0.5 * gamma * gamma * view.var_total;
  for (size_t i = 0; i < m.weights.size(); ++i)
    m.weights[i] = std::exp(gamma * view.values[i] - shift) * view.cell_volume;
  return m;
}

MeasureApprox derivative_measure(const fields::FieldView& view) {
  MeasureApprox m = base_from_view(view, MeasureKind::derivative);
  const double gc = view.gamma_c;
  m.gamma = gc;
  const double shift = 0.5 * gc * gc * view.var_total;
  const double drift = gc * view.var_total;
  for (size_t i = 0; i < m.weights.size(); ++i) {
    const double x = view.values[i];
    m.weights[i] = (drift - x) * std::exp(gc * x - shift) * view.cell_volume;
  }
  return m;
}

MeasureApprox seneta_heyde_measure(const fields::FieldView& view) {
  if (!(view.var_total > 0.0))
    throw std::invalid_argument("seneta_heyde_measure: cutoff variance must be positive");
  MeasureApprox m = base_from_view(view, MeasureKind::seneta_heyde);
  const double gc = view.gamma_c;
  m.gamma = gc;
  const double shift = 0.5 * gc * gc * view.var_total;
  const double fac = std::sqrt(view.var_total);
  for (size_t i = 0; i < m.weights.size(); ++i)
    m.weights[i] = fac * std::exp(gc * view.values[i] - shift) * view.cell_volume;
  return m;
}

MeasureApprox barrier_measure(const fields::FieldView& view, double beta) {
  if (beta < 0.0) throw std::invalid_argument("barrier_measure: beta must be >= 0");
  if (view.barrier_min == nullptr)
    throw std::invalid_argument("barrier_measure: field does not carry barrier minima");
  MeasureApprox m = base_from_view(view, MeasureKind::barrier);
  const double gc = view.gamma_c;
  m.gamma = gc;
  m.beta = beta;
  const double shift = 0.5 * gc * gc * view.var_total;
  const double drift = gc * view.var_total;
  for (size_t i = 0; i < m.weights.size(); ++i) {
    if (view.barrier_min[i] < -beta) {
      m.weights[i] = 0.0;
      continue;
    }
    const double x = view.values[i];
    m.weights[i] = (drift - x + beta) * std::exp(gc * x - shift) * view.cell_volume;
  }
  return m;
}

MeasureApprox subcritical_rescaled(const fields::FieldView& view, double gamma) {
  if (!(gamma < view.gamma_c))
    throw std::invalid_argument("subcritical_rescaled: gamma must be below gamma_c");
  if (!(gamma > 0.0))
    throw std::invalid_argument("subcritical_rescaled: gamma must be positive");
  MeasureApprox m = subcritical_measure(view, gamma);
  m.kind = MeasureKind::subcritical_rescaled;
  const double inv = 1.0 / (view.gamma_c - gamma);
  for (double& w : m.weights) w *= inv;
  return m;
}

}  // namespace chaoslab::measures
