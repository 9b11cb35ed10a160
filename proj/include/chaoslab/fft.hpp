#pragma once
// FFTW wrappers with per-thread plan caches.  Plan creation is serialized
// behind a global mutex (the FFTW planner is not thread-safe); execution
// runs concurrently on thread-local buffers, so transforms are safe to call
// from replica-parallel loops and bit-deterministic for a given build.

#include <complex>
#include <cstddef>

namespace chaoslab::fft {

// In-place unnormalized complex DFT, e^{-2pi i jk/n} forward / e^{+...} backward.
void c2c(std::complex<double>* data, size_t n, bool backward);

// In-place unnormalized 2-d complex DFT on row-major n0 x n1 data.
void c2c_2d(std::complex<double>* data, size_t n0, size_t n1, bool backward);

// Unnormalized real DFT of x[0..n-1]: spectrum[k] = sum_j x[j] e^{-2pi i jk/n},
// k = 0..n/2.  n must be even; `spectrum` holds n/2+1 entries.
void real_to_half_spectrum(const double* in, std::complex<double>* spectrum, size_t n);

// Inverse of the above up to the usual factor:
// out[m] = Re h[0] + 2*sum_{k=1}^{n/2-1} (Re h[k] cos(2pi km/n) - Im h[k] sin(2pi km/n))
//          + Re h[n/2] (-1)^m.
// Input is preserved.
void half_spectrum_to_real(const std::complex<double>* spectrum, double* out, size_t n);

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace chaoslab::fft
