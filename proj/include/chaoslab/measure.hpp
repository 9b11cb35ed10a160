#pragma once
// Approximate multiplicative-chaos measures built from a sampled field view.
//
// All constructors are pure functions of an immutable FieldView; every weight
// uses the field's realized discrete variance, so unit-mean and martingale
// properties hold exactly in expectation at any cutoff.  Kinds:
//   subcritical(gamma):      exp(gamma X - gamma^2/2 Var) * cellvol
//   derivative:              (-X + gamma_c Var) * subcritical(gamma_c) density (signed)
//   seneta_heyde:            sqrt(Var) * subcritical(gamma_c)
//   barrier(beta):           (-X + gamma_c Var + beta) * subcritical(gamma_c)
//                            density, restricted to {barrier_min >= -beta}
//   subcritical_rescaled:    subcritical(gamma) / (gamma_c - gamma)
//
// On the event that no cell ever crossed the barrier, the exact per-replica
// identity  derivative = barrier(beta) - beta * subcritical(gamma_c)  holds.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "chaoslab/field.hpp"

namespace chaoslab::measures {

enum class MeasureKind {
  subcritical,
  seneta_heyde,
  derivative,
  barrier,
  subcritical_rescaled,
};

const char* kind_name(MeasureKind k);

// Axis-aligned box in domain units; only the first d components are used.
struct Box {
  double lo[2] = {0.0, 0.0};
  double hi[2] = {0.0, 0.0};
};

struct MeasureApprox {
  MeasureKind kind = MeasureKind::subcritical;
  double gamma = 0.0;       // exponent actually applied
  double beta = 0.0;        // barrier offset (barrier kind only)
  double cutoff_var = 0.0;  // realized variance at the cutoff
  int d = 1;
  size_t cells_per_side = 0;
  double spacing = 0.0;
  double cell_volume = 0.0;
  double gamma_c = 0.0;
  std::vector<double> weights;  // signed only for kind=derivative

  double total_mass() const;
  double positive_part() const;
  double negative_part() const;  // >= 0; sum of |negative weights|
  size_t negative_count() const;

  // Pro-rata mass of an axis-aligned box: partial cells contribute by the
  // volume fraction of their overlap.  Empty or inverted boxes give 0.
  double box_mass(const Box& box) const;

  void write_csv(std::ostream&) const;  // header "cell,weight"
  std::string summary_json() const;
};

MeasureApprox subcritical_measure(const fields::FieldView& view, double gamma);
MeasureApprox derivative_measure(const fields::FieldView& view);
MeasureApprox seneta_heyde_measure(const fields::FieldView& view);
MeasureApprox barrier_measure(const fields::FieldView& view, double beta);
MeasureApprox subcritical_rescaled(const fields::FieldView& view, double gamma);

}  // namespace chaoslab::measures
