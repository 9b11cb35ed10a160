#include "chaoslab/brw.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace chaoslab::brw {

namespace {
constexpr int kMaxDepthBits = 24;  // guard on d * n

double norm_shift(int d, double gamma, size_t m) {
  return (0.5 * gamma * gamma + static_cast<double>(d)) * static_cast<double>(m) * kStepVar;
}
}  // namespace

size_t BrwState::branch_generation(size_t i, size_t j) const {
  if (i == j) return generation;
  const size_t x = i ^ j;
  const size_t hb = static_cast<size_t>(std::bit_width(x)) - 1;
  return generation - 1 - hb / static_cast<size_t>(d);
}

BrwState simulate_brw(int d, size_t n, const rng::StreamKey& base) {
  if (d < 1) throw std::invalid_argument("simulate_brw: d must be >= 1");
  if (static_cast<size_t>(d) * n > kMaxDepthBits)
    throw std::invalid_argument("simulate_brw: d*n exceeds the particle guard (24)");

  BrwState s;
  s.d = d;
  s.generation = n;
  s.levels.resize(n + 1);
  s.levels[0] = {0.0};

  const double sd = std::sqrt(kStepVar);
  const double gc = fields::gamma_c(d);
  std::vector<double> bmin_prev = {0.0};
  std::vector<double> bmin;
  for (size_t m = 1; m <= n; ++m) {
    const size_t cnt = size_t{1} << (static_cast<size_t>(d) * m);
    rng::Stream stream(rng::StreamKey{base.seed, base.tag, base.replica, m});
    std::vector<double>& lvl = s.levels[m];
    lvl.resize(cnt);
    bmin.resize(cnt);
    const double drift = gc * static_cast<double>(m) * kStepVar;
    for (size_t i = 0; i < cnt; ++i) {
      lvl[i] = s.levels[m - 1][i >> d] + sd * stream.gaussian();
      bmin[i] = std::min(bmin_prev[i >> d], drift - lvl[i]);
    }
    bmin_prev.swap(bmin);
  }
  s.barrier_min = std::move(bmin_prev);
  return s;
}

double additive_martingale_at(const BrwState& s, double gamma, size_t m) {
  if (m > s.generation) throw std::out_of_range("additive_martingale_at: generation");
  const double shift = norm_shift(s.d, gamma, m);
  double acc = 0.0;
  for (double x : s.levels[m]) acc += std::exp(gamma * x - shift);
  return acc;
}

double additive_martingale(const BrwState& s, double gamma) {
  return additive_martingale_at(s, gamma, s.generation);
}

double derivative_martingale_at(const BrwState& s, double beta, size_t m, BarrierMode mode) {
  if (beta < 0.0) throw std::invalid_argument("derivative_martingale: beta must be >= 0");
  if (m > s.generation) throw std::out_of_range("derivative_martingale_at: generation");
  const double gc = fields::gamma_c(s.d);
  const double shift = norm_shift(s.d, gc, m);
  const double drift = gc * static_cast<double>(m) * kStepVar;
  const size_t cnt = s.levels[m].size();
  double acc = 0.0;

  if (mode == BarrierMode::checkpoint) {
    for (size_t i = 0; i < cnt; ++i) {
      const double x = s.levels[m][i];
      double bm;
      if (m == s.generation) {
        bm = s.barrier_min[i];
      } else {
        bm = 0.0;
        size_t a = i;
        for (size_t g = m; g >= 1; --g) {
          bm = std::min(bm, gc * static_cast<double>(g) * kStepVar - s.levels[g][a]);
          a >>= s.d;
        }
      }
      if (bm < -beta) continue;
      acc += (drift - x + beta) * std::exp(gc * x - shift);
    }
    return acc;
  }

  // bridge mode: multiply per-step non-crossing probabilities of the
  // Brownian bridge between consecutive checkpoint values of
  // V_g = beta + gamma_c g ln2 - X_g.
  double traj[kMaxDepthBits + 1];
  for (size_t i = 0; i < cnt; ++i) {
    size_t a = i;
    for (size_t g = m; g >= 1; --g) {
      traj[g] = s.levels[g][a];
      a >>= s.d;
    }
    traj[0] = 0.0;
    double p = 1.0;
    double v_prev = beta;
    for (size_t g = 1; g <= m && p > 0.0; ++g) {
      const double v = beta + gc * static_cast<double>(g) * kStepVar - traj[g];
      p = (v_prev > 0.0 && v > 0.0)
              ? p * (1.0 - std::exp(-2.0 * v_prev * v / kStepVar))
              : 0.0;
      v_prev = v;
    }
    if (p <= 0.0) continue;
    const double x = s.levels[m][i];
    acc += (drift - x + beta) * std::exp(gc * x - shift) * p;
  }
  return acc;
}

double derivative_martingale(const BrwState& s, double beta, BarrierMode mode) {
  return derivative_martingale_at(s, beta, s.generation, mode);
}

double derivative_martingale_plain_at(const BrwState& s, size_t m) {
  if (m > s.generation) throw std::out_of_range("derivative_martingale_plain_at: generation");
  const double gc = fields::gamma_c(s.d);
  const double shift = norm_shift(s.d, gc, m);
  const double drift = gc * static_cast<double>(m) * kStepVar;
  double acc = 0.0;
  for (double x : s.levels[m]) acc += (drift - x) * std::exp(gc * x - shift);
  return acc;
}

double derivative_martingale_plain(const BrwState& s) {
  return derivative_martingale_plain_at(s, s.generation);
}

double seneta_heyde_brw(const BrwState& s) {
  if (s.generation < 1)
    throw std::invalid_argument("seneta_heyde_brw: needs at least one generation");
  return std::sqrt(static_cast<double>(s.generation)) *
         additive_martingale(s, fields::gamma_c(s.d));
}

fields::FieldView BrwField::view() const {
  const size_t side = size_t{1} << generation;
  const double spacing = 1.0 / static_cast<double>(side);
  return fields::FieldView{d,
                           side,
                           values.size(),
                           spacing,
                           d == 1 ? spacing : spacing * spacing,
                           1.0,
                           var_total,
                           values.data(),
                           barrier_min.data(),
                           fields::gamma_c(d)};
}

BrwField brw_to_field(const BrwState& s) {
  if (s.d != 1 && s.d != 2)
    throw std::invalid_argument("brw_to_field: only d=1 and d=2 embed on a grid");
  BrwField f;
  f.d = s.d;
  f.generation = s.generation;
  f.var_total = static_cast<double>(s.generation) * kStepVar;
  const size_t n = s.generation;
  const size_t cells = s.num_particles();
  f.values.resize(cells);
  f.barrier_min.resize(cells);
  const size_t side = size_t{1} << n;
  for (size_t i = 0; i < cells; ++i) {
    size_t cell = i;
    if (s.d == 2) {
      // generation m contributes one x-bit (low) and one y-bit (high)
      size_t ix = 0, iy = 0;
      for (size_t m = 1; m <= n; ++m) {
        const size_t c = (i >> (2 * (n - m))) & 3u;
        ix = (ix << 1) | (c & 1u);
        iy = (iy << 1) | ((c >> 1) & 1u);
      }
      cell = iy * side + ix;
    }
    f.values[cell] = s.positions()[i];
    f.barrier_min[cell] = s.barrier_min[i];
  }
  return f;
}

void write_tree_csv(const BrwState& s, std::ostream& os) {
  os << "generation,index,parent,position\n";
  char buf[80];
  for (size_t m = 0; m <= s.generation; ++m) {
    for (size_t i = 0; i < s.levels[m].size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", m, i,
                    m == 0 ? size_t{0} : (i >> s.d), s.levels[m][i]);
      os << buf;
    }
  }
}

void write_martingale_csv(const BrwState& s, double gamma, double beta,
                          BarrierMode mode, std::ostream& os) {
  os << "n,additive,derivative\n";
  char buf[80];
  for (size_t m = 0; m <= s.generation; ++m) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", m,
                  additive_martingale_at(s, gamma, m),
                  derivative_martingale_at(s, beta, m, mode));
    os << buf;
  }
}

}  // namespace chaoslab::brw
