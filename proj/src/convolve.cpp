#include "chaoslab/convolve.hpp"

#include <cmath>
#include <stdexcept>

namespace chaoslab::fields {

namespace {

double profile_value(MollifierProfile p, double r) {
  r = std::abs(r);
  if (r >= 1.0) return 0.0;
  switch (p) {
    case MollifierProfile::bump:
      return std::exp(-1.0 / (1.0 - r * r));
    case MollifierProfile::triangle:
      return 1.0 - r;
  }
  return 0.0;
}

// largest lag with |k| * spacing < eps
long window_lags(double eps, double spacing) {
  long k = static_cast<long>(std::ceil(eps / spacing)) - 1;
  return k < 0 ? 0 : k;
}

}  // namespace

std::vector<double> mollifier_weights(const MollifierSpec& spec, double spacing) {
  if (!(spec.eps >= 2.0 * spacing))
    throw std::invalid_argument("mollifier: eps must be at least two grid spacings");
  const long K = window_lags(spec.eps, spacing);
  std::vector<double> w(2 * K + 1);
  double sum = 0.0;
  for (long k = -K; k <= K; ++k) {
    const double v = profile_value(spec.profile, static_cast<double>(k) * spacing / spec.eps);
    w[static_cast<size_t>(k + K)] = v;
    sum += v;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("mollifier: window has no mass on the grid");
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> convolve_field(const FieldView& view, const MollifierSpec& spec,
                                   bool periodic) {
  if (!(spec.eps >= 2.0 * view.spacing))
    throw std::invalid_argument("convolve_field: eps must be at least two grid spacings");
  const long K = window_lags(spec.eps, view.spacing);
  std::vector<double> out(view.num_cells, 0.0);

  if (view.d == 1) {
    const long n = static_cast<long>(view.num_cells);
    std::vector<double> w(2 * K + 1);
    for (long k = -K; k <= K; ++k)
      w[static_cast<size_t>(k + K)] =
          profile_value(spec.profile, static_cast<double>(k) * view.spacing / spec.eps);
    for (long i = 0; i < n; ++i) {
      double acc = 0.0, mass = 0.0;
      for (long k = -K; k <= K; ++k) {
        long j = i + k;
        if (periodic) {
          j = ((j % n) + n) % n;
        } else if (j < 0 || j >= n) {
          continue;
        }
        const double wk = w[static_cast<size_t>(k + K)];
        acc += wk * view.values[j];
        mass += wk;
      }
      out[static_cast<size_t>(i)] = acc / mass;
    }
    return out;
  }

  const long side = static_cast<long>(view.cells_per_side);
  std::vector<double> w((2 * K + 1) * (2 * K + 1));
  for (long ky = -K; ky <= K; ++ky)
    for (long kx = -K; kx <= K; ++kx) {
      const double r = std::hypot(static_cast<double>(kx), static_cast<double>(ky)) *
                       view.spacing / spec.eps;
      w[static_cast<size_t>((ky + K) * (2 * K + 1) + (kx + K))] =
          profile_value(spec.profile, r);
    }
  for (long iy = 0; iy < side; ++iy) {
    for (long ix = 0; ix < side; ++ix) {
      double acc = 0.0, mass = 0.0;
      for (long ky = -K; ky <= K; ++ky) {
        long jy = iy + ky;
        if (periodic) {
          jy = ((jy % side) + side) % side;
        } else if (jy < 0 || jy >= side) {
          continue;
        }
        for (long kx = -K; kx <= K; ++kx) {
          long jx = ix + kx;
          if (periodic) {
            jx = ((jx % side) + side) % side;
          } else if (jx < 0 || jx >= side) {
            continue;
          }
          const double wk = w[static_cast<size_t>((ky + K) * (2 * K + 1) + (kx + K))];
          acc += wk * view.values[jy * side + jx];
          mass += wk;
        }
      }
      out[static_cast<size_t>(iy * side + ix)] = acc / mass;
    }
  }
  return out;
}

}  // namespace chaoslab::fields
