#pragma once
// Branching random walk on the 2^d-ary tree with i.i.d. N(0, ln 2) steps.
//
// The full tree is retained: generation m holds 2^{dm} positions and particle
// i's parent is i >> d, so the branch time of any two particles is a pure
// index computation and ancestral trajectories can be replayed.  On top of
// the tree sit the additive martingale, two barrier-truncated derivative
// martingales, the sqrt(n) normalization, and an embedding of the leaves as
// a piecewise-constant field on [0,1]^d whose chaos integral reproduces the
// additive martingale exactly.
//
// Barrier handling for the derivative martingale comes in two modes:
//   checkpoint — the barrier is enforced at integer generations only.  This
//     is the natural discrete object but a strict submartingale: paths can
//     dip below the barrier between checkpoints, so one step gains
//     E[(beta - W)^+] - beta > 0 in expectation from the root.
//   bridge — each step is additionally weighted by the Brownian-bridge
//     non-crossing probability 1 - exp(-2 V_{m-1} V_m / s^2) given the two
//     endpoints.  This equals the conditional expectation of the
//     continuous-barrier object and is an exact martingale in n.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "chaoslab/field.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab::brw {

inline constexpr double kStepVar = 0.6931471805599453;  // ln 2

enum class BarrierMode { checkpoint, bridge };

struct BrwState {
  int d = 1;
  size_t generation = 0;                    // n
  std::vector<std::vector<double>> levels;  // levels[m]: 2^{dm} positions
  std::vector<double> barrier_min;  // per leaf: min_{m<=n} (gamma_c m ln2 - X_m)

  const std::vector<double>& positions() const { return levels.back(); }
  size_t num_particles() const { return levels.back().size(); }
  size_t parent(size_t i) const { return i >> d; }
  // Generation of the last common ancestor of leaves i and j (= n for i == j);
  // the covariance of their positions is this value times ln 2.
  size_t branch_generation(size_t i, size_t j) const;
};

// Per-generation randomness comes from (base.seed, base.tag, base.replica,
// level = m), so trees at different n agree on their shared generations.
// Guard: d * n <= 24.
BrwState simulate_brw(int d, size_t n, const rng::StreamKey& base);

// M_n^gamma = sum_i exp(gamma X_n(i) - (gamma^2/2 + d) n ln2).
double additive_martingale(const BrwState& s, double gamma);
double additive_martingale_at(const BrwState& s, double gamma, size_t m);

// Sum over leaves of (gamma_c n ln2 - X + beta) e^{gamma_c X - (gamma_c^2/2 + d) n ln2}
// restricted to the barrier event; see BarrierMode above.  n=0 gives beta.
double derivative_martingale(const BrwState& s, double beta,
                             BarrierMode mode = BarrierMode::checkpoint);
double derivative_martingale_at(const BrwState& s, double beta, size_t m,
                                BarrierMode mode = BarrierMode::checkpoint);

// Barrier-free signed variant: sum of (gamma_c m ln2 - X) e^{gamma_c X - shift}.
// Mean zero from the root; the positive-part limit normalizes sqrt(n) M_n.
double derivative_martingale_plain(const BrwState& s);
double derivative_martingale_plain_at(const BrwState& s, size_t m);

// sqrt(n) * M_n^{gamma_c}; requires n >= 1.
double seneta_heyde_brw(const BrwState& s);

// Leaves embedded as a piecewise-constant field on [0,1]^d (dyadic cells of
// side 2^{-n}; d=2 interleaves one axis bit per generation).  Carries the
// checkpoint barrier minima so barrier measures can be formed.
struct BrwField {
  int d = 1;
  size_t generation = 0;
  std::vector<double> values;
  std::vector<double> barrier_min;
  double var_total = 0.0;  // n ln 2
  fields::FieldView view() const;
};

BrwField brw_to_field(const BrwState& s);

// "generation,index,parent,position" rows for every node.
void write_tree_csv(const BrwState& s, std::ostream& os);
// "n,additive,derivative" rows for m = 0..n at the given parameters.
void write_martingale_csv(const BrwState& s, double gamma, double beta,
                          BarrierMode mode, std::ostream& os);

}  // namespace chaoslab::brw
