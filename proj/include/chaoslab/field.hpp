#pragma once
// Scale-decomposed Gaussian field sampler on uniform grids.
//
// The field at cutoff t is a sum of independent Gaussian increment layers;
// layer j adds the stationary covariance  C_j(r) = \int k(ur)/u du  over the
// scale window [e^{t_j}, e^{t_j+dt}].  Each grid value therefore runs a
// Brownian motion in t with per-layer variance exactly dt, and layers at
// cutoff >= t0 are independent across points further apart than e^{-t0}.
//
// Two exact sampling backends:
//   - dense Cholesky with ramped diagonal jitter (small grids, any dimension);
//   - circulant embedding via FFT (large 1-d and 2-d grids; the embedding is
//     exact because the layer covariances have compact support).
// Backend choice is automatic by grid size and can be overridden.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "chaoslab/kernel.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab::fields {

struct GridSpec {
  int d = 1;                    // 1 or 2
  size_t cells_per_unit = 256;  // M: cells per unit length (kernel-support units)
  double extent = 1.0;          // domain side length; cells are cell-centered

  size_t cells_per_side() const {
    return static_cast<size_t>(extent * static_cast<double>(cells_per_unit) + 0.5);
  }
  size_t num_cells() const {
    size_t n = cells_per_side();
    return d == 1 ? n : n * n;
  }
  double spacing() const { return 1.0 / static_cast<double>(cells_per_unit); }
  double cell_volume() const { return d == 1 ? spacing() : spacing() * spacing(); }
  double domain_volume() const {
    const double side = spacing() * static_cast<double>(cells_per_side());
    return d == 1 ? side : side * side;
  }
  // Euclidean distance between cell centers.
  double cell_distance(size_t a, size_t b) const;
};

enum class FieldBackend { automatic, cholesky, circulant };

// Everything measure constructors need to know about a sampled field.
struct FieldView {
  int d = 1;
  size_t cells_per_side = 0;
  size_t num_cells = 0;
  double spacing = 0.0;
  double cell_volume = 0.0;
  double domain_volume = 0.0;
  double var_total = 0.0;             // realized variance of each value
  const double* values = nullptr;
  const double* barrier_min = nullptr;  // running min of (-X + gamma_c Var); may be null
  double gamma_c = 0.0;
};

// Optional mean shift: adds gamma * Cov_layer(x, x*) at every layer, i.e. the
// field is sampled under the measure reweighted by the normalized chaos
// density at cell x*.
struct Tilt {
  bool enabled = false;
  double gamma = 0.0;
  size_t cell = 0;
};

struct StarFieldOptions {
  bool track_barrier = true;         // running min of (-X + gamma_c * Var)
  bool keep_previous_level = false;  // retain state at t_max - dt
  std::vector<size_t> snapshot_levels;  // completed-layer counts to snapshot
  std::vector<size_t> probe_cells;      // cells whose trajectories are recorded
  Tilt tilt;
};

struct ScaleField {
  GridSpec grid;
  double dt = 0.0;
  size_t levels = 0;
  std::vector<double> var_per_level;
  double var_total = 0.0;
  std::vector<double> values;       // X at t_max
  std::vector<double> barrier_min;  // empty unless tracked

  std::vector<double> prev_values;  // state at t_max - dt when requested
  std::vector<double> prev_barrier_min;
  double prev_var_total = 0.0;

  struct Snapshot {
    std::vector<double> values;
    double var_total = 0.0;
  };
  std::map<size_t, Snapshot> snapshots;            // completed-layer count -> state
  std::vector<std::vector<double>> probe_traj;     // [probe][level] values

  double t_max() const { return dt * static_cast<double>(levels); }
  FieldView view() const;
  FieldView view_previous() const;
  FieldView view_snapshot(size_t level_count) const;  // no barrier data

  // Layout: header (d, cells per side, number of stored levels), then
  // row-major values per stored level in increasing level order.  When no
  // snapshots were kept the final values are the single stored level.
  void write_csv(std::ostream&) const;
  void write_binary(std::ostream&) const;
};

class StarFieldSampler {
 public:
  // Warns (see resolution_warning) when the grid spacing exceeds e^{-t_max},
  // i.e. the finest sampled scale is below the grid resolution.
  StarFieldSampler(const Kernel& kernel, GridSpec grid, double t_max, double dt,
                   FieldBackend backend = FieldBackend::automatic);

  const GridSpec& grid() const { return grid_; }
  const Kernel& kernel() const { return kernel_; }
  size_t levels() const { return levels_; }
  double dt() const { return dt_; }
  double t_max() const { return dt_ * static_cast<double>(levels_); }
  double var_total() const;
  FieldBackend backend() const { return backend_; }
  bool resolution_warning() const { return resolution_warning_; }

  // One replica.  All randomness is derived from (base.seed, base.tag,
  // base.replica, layer index), so replicas are scheduling-independent.
  ScaleField sample(const rng::StreamKey& base, const StarFieldOptions& opts = {}) const;

  // Covariance of the layer-j increment between two cells, as realized by the
  // sampler (quadrature-exact stationary value).
  double increment_cov_cells(size_t level, size_t a, size_t b) const;
  // Total covariance between two cells at cutoff t_max (sum over layers).
  double total_cov_cells(size_t a, size_t b) const;

 private:
  double cov_at_distance(size_t level, double r) const;
  void build_circulant_1d();
  void build_circulant_2d();
  void build_cholesky();
  void add_layer(size_t level, rng::Stream& stream, std::vector<double>& x,
                 const Tilt& tilt) const;

  Kernel kernel_;
  GridSpec grid_;
  double dt_ = 0.0;
  size_t levels_ = 0;
  FieldBackend backend_ = FieldBackend::automatic;
  bool resolution_warning_ = false;

  // circulant (d=1): spectrum scale factors per level, length L/2+1
  size_t embed_n_ = 0;
  std::vector<std::vector<double>> spec_sd_;
  // circulant (d=2): scale factors per level over L x L bins
  std::vector<std::vector<double>> spec_sd_2d_;
  // cov at integer lags per level (d=1: by lag; d=2: by (|dy|,|dx|) row-major)
  std::vector<std::vector<double>> cov_rows_;
  std::vector<size_t> supp_lags_;
  // cholesky: row-major lower factor per level, n x n
  std::vector<std::vector<double>> chol_;
  std::vector<double> jitter_used_;
};

}  // namespace chaoslab::fields
