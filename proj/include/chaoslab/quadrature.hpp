#pragma once
// Thin wrapper around adaptive Gauss-Kronrod integration with a hard
// absolute-error guarantee: if the error estimate exceeds the requested
// tolerance the call throws instead of returning a silently bad value.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <stdexcept>
#include <string>

namespace chaoslab::quad {

inline constexpr double kAbsTol = 1e-10;

template <class F>
double integrate(const F& f, double a, double b, double abs_tol = kAbsTol) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, /*max_depth=*/18, /*rel_tol=*/1e-13, &err);
  if (err > abs_tol) {
    throw std::runtime_error("quadrature: error estimate " + std::to_string(err) +
                             " above tolerance on [" + std::to_string(a) + "," +
                             std::to_string(b) + "]");
  }
  return val;
}

}  // namespace chaoslab::quad
