#include "chaoslab/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

namespace chaoslab::fft {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// One cached plan + its working buffers.  Buffers are fftw_malloc'd so every
// execution sees the alignment the plan was created with.
struct PlanEntry {
  fftw_plan plan = nullptr;
  void* in = nullptr;
  void* out = nullptr;
  ~PlanEntry() {
    if (plan) {
      std::lock_guard<std::mutex> lk(planner_mutex());
      fftw_destroy_plan(plan);
    }
    if (in) fftw_free(in);
    if (out && out != in) fftw_free(out);
  }
};

// key: (kind, n0, n1) with kind 0=c2c fwd, 1=c2c bwd, 2=c2c2d fwd, 3=c2c2d bwd,
// 4=r2c, 5=c2r.
using PlanKey = std::tuple<int, size_t, size_t>;

PlanEntry& get_plan(int kind, size_t n0, size_t n1) {
  thread_local std::map<PlanKey, PlanEntry> cache;
  auto [it, inserted] = cache.try_emplace({kind, n0, n1});
  PlanEntry& e = it->second;
  if (!inserted) return e;
  std::lock_guard<std::mutex> lk(planner_mutex());
  switch (kind) {
    case 0:
    case 1: {
      e.in = fftw_malloc(sizeof(fftw_complex) * n0);
      e.out = e.in;
      e.plan = fftw_plan_dft_1d(static_cast<int>(n0),
                                static_cast<fftw_complex*>(e.in),
                                static_cast<fftw_complex*>(e.out),
                                kind == 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE);
      break;
    }
    case 2:
    case 3: {
      e.in = fftw_malloc(sizeof(fftw_complex) * n0 * n1);
      e.out = e.in;
      e.plan = fftw_plan_dft_2d(static_cast<int>(n0), static_cast<int>(n1),
                                static_cast<fftw_complex*>(e.in),
                                static_cast<fftw_complex*>(e.out),
                                kind == 2 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE);
      break;
    }
    case 4: {
      e.in = fftw_malloc(sizeof(double) * n0);
      e.out = fftw_malloc(sizeof(fftw_complex) * (n0 / 2 + 1));
      e.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n0),
                                    static_cast<double*>(e.in),
                                    static_cast<fftw_complex*>(e.out),
                                    FFTW_ESTIMATE);
      break;
    }
    case 5: {
      e.in = fftw_malloc(sizeof(fftw_complex) * (n0 / 2 + 1));
      e.out = fftw_malloc(sizeof(double) * n0);
      e.plan = fftw_plan_dft_c2r_1d(static_cast<int>(n0),
                                    static_cast<fftw_complex*>(e.in),
                                    static_cast<double*>(e.out),
                                    FFTW_ESTIMATE);
      break;
    }
  }
  return e;
}

}  // namespace

void c2c(std::complex<double>* data, size_t n, bool backward) {
  PlanEntry& e = get_plan(backward ? 1 : 0, n, 1);
  std::memcpy(e.in, data, sizeof(fftw_complex) * n);
  fftw_execute(e.plan);
  std::memcpy(data, e.out, sizeof(fftw_complex) * n);
}

void c2c_2d(std::complex<double>* data, size_t n0, size_t n1, bool backward) {
  PlanEntry& e = get_plan(backward ? 3 : 2, n0, n1);
  std::memcpy(e.in, data, sizeof(fftw_complex) * n0 * n1);
  fftw_execute(e.plan);
  std::memcpy(data, e.out, sizeof(fftw_complex) * n0 * n1);
}

void real_to_half_spectrum(const double* in, std::complex<double>* spectrum, size_t n) {
  PlanEntry& e = get_plan(4, n, 1);
  std::memcpy(e.in, in, sizeof(double) * n);
  fftw_execute(e.plan);
  std::memcpy(spectrum, e.out, sizeof(fftw_complex) * (n / 2 + 1));
}

void half_spectrum_to_real(const std::complex<double>* spectrum, double* out, size_t n) {
  PlanEntry& e = get_plan(5, n, 1);
  std::memcpy(e.in, spectrum, sizeof(fftw_complex) * (n / 2 + 1));
  fftw_execute(e.plan);
  std::memcpy(out, e.out, sizeof(double) * n);
}

}  // namespace chaoslab::fft
