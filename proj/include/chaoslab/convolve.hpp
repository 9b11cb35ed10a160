#pragma once
// Mollification of grid fields: discrete convolution with a nonnegative,
// compactly supported profile of unit mass and support radius eps.
//
// Near the domain boundary the window is truncated and renormalized by its
// in-domain mass (periodic wrap is available for circle fields), so constant
// fields are preserved exactly everywhere and the weights always sum to one.

#include <cstddef>
#include <vector>

#include "chaoslab/field.hpp"

namespace chaoslab::fields {

enum class MollifierProfile {
  bump,      // exp(-1/(1-r^2)) on |r|<1, smooth with compact support
  triangle,  // 1-|r| on |r|<=1
};

struct MollifierSpec {
  MollifierProfile profile = MollifierProfile::bump;
  double eps = 0.0;  // support radius in domain units
};

// Normalized 1-d window at integer lags -K..K (K = ceil(eps/spacing) - 1);
// entries are >= 0 and sum to 1 within 1e-10.
std::vector<double> mollifier_weights(const MollifierSpec& spec, double spacing);

// Smooth `view.values` with the profile at scale eps.  Requires
// eps >= 2 * spacing.  d = 1 uses the 1-d window, d = 2 a radial one.
std::vector<double> convolve_field(const FieldView& view, const MollifierSpec& spec,
                                   bool periodic = false);

}  // namespace chaoslab::fields
