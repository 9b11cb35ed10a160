#include "chaoslab/field.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "chaoslab/fft.hpp"

namespace chaoslab::fields {

namespace {
constexpr double kEigClipRel = 1e-8;  // circulant eigenvalue tolerance
// auto backend: dense Cholesky only while the cached factors stay small
constexpr size_t kCholeskyMaxCells = 4096;
constexpr double kCholeskyMaxStorage = 2.5e8;  // doubles across all levels
}  // namespace

double GridSpec::cell_distance(size_t a, size_t b) const {
  if (d == 1) {
    const double lag = static_cast<double>(a > b ? a - b : b - a);
    return lag * spacing();
  }
  const size_t side = cells_per_side();
  const double dy = static_cast<double>(a / side) - static_cast<double>(b / side);
  const double dx = static_cast<double>(a % side) - static_cast<double>(b % side);
  return std::hypot(dx, dy) * spacing();
}

FieldView ScaleField::view() const {
  return FieldView{grid.d,
                   grid.cells_per_side(),
                   grid.num_cells(),
                   grid.spacing(),
                   grid.cell_volume(),
                   grid.domain_volume(),
                   var_total,
                   values.data(),
                   barrier_min.empty() ? nullptr : barrier_min.data(),
                   gamma_c(grid.d)};
}

FieldView ScaleField::view_previous() const {
  if (prev_values.empty())
    throw std::logic_error("ScaleField: previous level was not retained");
  FieldView v = view();
  v.var_total = prev_var_total;
  v.values = prev_values.data();
  v.barrier_min = prev_barrier_min.empty() ? nullptr : prev_barrier_min.data();
  return v;
}

FieldView ScaleField::view_snapshot(size_t level_count) const {
  auto it = snapshots.find(level_count);
  if (it == snapshots.end())
    throw std::logic_error("ScaleField: no snapshot at requested level");
  FieldView v = view();
  v.var_total = it->second.var_total;
  v.values = it->second.values.data();
  v.barrier_min = nullptr;
  return v;
}

void ScaleField::write_csv(std::ostream& os) const {
  const size_t nlev = snapshots.empty() ? 1 : snapshots.size();
  os << grid.d << "," << grid.cells_per_side() << "," << nlev << "\n";
  char buf[32];
  auto write_row = [&](const std::vector<double>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      os << (i ? "," : "") << buf;
    }
    os << "\n";
  };
  if (snapshots.empty()) {
    write_row(values);
  } else {
    for (const auto& [lev, snap] : snapshots) write_row(snap.values);
  }
}

void ScaleField::write_binary(std::ostream& os) const {
  auto put_u64 = [&](uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  const size_t nlev = snapshots.empty() ? 1 : snapshots.size();
  put_u64(static_cast<uint64_t>(grid.d));
  put_u64(grid.cells_per_side());
  put_u64(nlev);
  auto write_row = [&](const std::vector<double>& row) {
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(double)));
  };
  if (snapshots.empty()) {
    write_row(values);
  } else {
    for (const auto& [lev, snap] : snapshots) write_row(snap.values);
  }
}

StarFieldSampler::StarFieldSampler(const Kernel& kernel, GridSpec grid, double t_max,
                                   double dt, FieldBackend backend)
    : kernel_(kernel), grid_(grid), dt_(dt), backend_(backend) {
  if (grid.d != 1 && grid.d != 2) throw std::invalid_argument("StarFieldSampler: d must be 1 or 2");
  if (kernel.dim() != grid.d)
    throw std::invalid_argument("StarFieldSampler: kernel dimension does not match grid");
  if (!(dt > 0.0)) throw std::invalid_argument("StarFieldSampler: dt must be positive");
  if (t_max < 0.0) throw std::invalid_argument("StarFieldSampler: t_max must be >= 0");
  const double lv = t_max / dt;
  levels_ = static_cast<size_t>(std::llround(lv));
  if (std::abs(static_cast<double>(levels_) * dt - t_max) > 1e-9)
    throw std::invalid_argument("StarFieldSampler: t_max must be a multiple of dt");

  if (grid_.spacing() > std::exp(-t_max) * (1.0 + 1e-12)) {
    resolution_warning_ = true;
    std::fprintf(stderr,
                 "warning: grid spacing %.3g exceeds the finest sampled scale e^{-t_max}=%.3g; "
                 "increase cells_per_unit or lower t_max\n",
                 grid_.spacing(), std::exp(-t_max));
  }

  if (backend_ == FieldBackend::automatic) {
    const size_t n = grid_.num_cells();
    const double storage = static_cast<double>(levels_) * static_cast<double>(n) *
                           static_cast<double>(n);
    backend_ = (n <= kCholeskyMaxCells && storage <= kCholeskyMaxStorage)
                   ? FieldBackend::cholesky
                   : FieldBackend::circulant;
  }

  // lag-indexed covariance tables per level (also used for tilts and tests)
  cov_rows_.resize(levels_);
  supp_lags_.resize(levels_);
  const double h = grid_.spacing();
  const size_t side = grid_.cells_per_side();
  for (size_t j = 0; j < levels_; ++j) {
    const double t_j = static_cast<double>(j) * dt_;
    // the layer covariance vanishes beyond min(1, e^{-t_j})
    const double supp_r = std::min(1.0, std::exp(-t_j));
    const size_t supp = std::min(static_cast<size_t>(supp_r / h) + 1,
                                 grid_.d == 1 ? grid_.num_cells() : side);
    supp_lags_[j] = supp;
    if (grid_.d == 1) {
      cov_rows_[j].assign(supp + 1, 0.0);
      for (size_t k = 0; k <= supp; ++k)
        cov_rows_[j][k] = cov_at_distance(j, static_cast<double>(k) * h);
    } else {
      cov_rows_[j].assign(side * side, 0.0);
      for (size_t ky = 0; ky < side; ++ky) {
        if (ky > supp) continue;
        for (size_t kx = 0; kx < side; ++kx) {
          if (kx > supp) continue;
          const double r = std::hypot(static_cast<double>(kx), static_cast<double>(ky)) * h;
          cov_rows_[j][ky * side + kx] = cov_at_distance(j, r);
        }
      }
    }
  }

  if (backend_ == FieldBackend::cholesky) {
    build_cholesky();
  } else if (grid_.d == 1) {
    build_circulant_1d();
  } else {
    build_circulant_2d();
  }
}

double StarFieldSampler::cov_at_distance(size_t level, double r) const {
  return kernel_.increment_covariance(r, static_cast<double>(level) * dt_, dt_);
}

double StarFieldSampler::var_total() const {
  return static_cast<double>(levels_) * dt_;
}

double StarFieldSampler::increment_cov_cells(size_t level, size_t a, size_t b) const {
  if (level >= levels_) throw std::out_of_range("increment_cov_cells: level");
  if (grid_.d == 1) {
    const size_t lag = a > b ? a - b : b - a;
    return lag <= supp_lags_[level] ? cov_rows_[level][lag] : 0.0;
  }
  const size_t side = grid_.cells_per_side();
  const size_t ky = a / side > b / side ? a / side - b / side : b / side - a / side;
  const size_t kx = a % side > b % side ? a % side - b % side : b % side - a % side;
  return cov_rows_[level][ky * side + kx];
}

double StarFieldSampler::total_cov_cells(size_t a, size_t b) const {
  double c = 0.0;
  for (size_t j = 0; j < levels_; ++j) c += increment_cov_cells(j, a, b);
  return c;
}

void StarFieldSampler::build_circulant_1d() {
  const size_t n = grid_.num_cells();
  embed_n_ = fft::next_pow2(n + grid_.cells_per_unit + 1);
  const size_t L = embed_n_;
  spec_sd_.resize(levels_);
  std::vector<double> row(L);
  std::vector<std::complex<double>> spec(L / 2 + 1);
  for (size_t j = 0; j < levels_; ++j) {
    std::fill(row.begin(), row.end(), 0.0);
    const size_t supp = supp_lags_[j];
    row[0] = cov_rows_[j][0];
    for (size_t k = 1; k <= supp && k < L; ++k) {
      row[k] = cov_rows_[j][k];
      row[L - k] = cov_rows_[j][k];
    }
    fft::real_to_half_spectrum(row.data(), spec.data(), L);
    double mx = 0.0;
    for (const auto& c : spec) mx = std::max(mx, c.real());
    spec_sd_[j].resize(L / 2 + 1);
    for (size_t k = 0; k <= L / 2; ++k) {
      double lam = spec[k].real();
      if (lam < -kEigClipRel * mx)
        throw std::runtime_error("StarFieldSampler: circulant embedding not PSD at level " +
                                 std::to_string(j));
      lam = std::max(lam, 0.0);
      const double denom = (k == 0 || k == L / 2) ? static_cast<double>(L)
                                                  : 2.0 * static_cast<double>(L);
      spec_sd_[j][k] = std::sqrt(lam / denom);
    }
  }
}

void StarFieldSampler::build_circulant_2d() {
  const size_t side = grid_.cells_per_side();
  embed_n_ = fft::next_pow2(side + grid_.cells_per_unit + 1);
  const size_t L = embed_n_;
  const double h = grid_.spacing();
  spec_sd_2d_.resize(levels_);
  std::vector<std::complex<double>> grid_c(L * L);
  for (size_t j = 0; j < levels_; ++j) {
    std::fill(grid_c.begin(), grid_c.end(), std::complex<double>(0.0, 0.0));
    const size_t supp = supp_lags_[j];
    for (size_t ky = 0; ky < L; ++ky) {
      const size_t my = std::min(ky, L - ky);
      if (my > supp) continue;
      for (size_t kx = 0; kx < L; ++kx) {
        const size_t mx = std::min(kx, L - kx);
        if (mx > supp) continue;
        const double r = std::hypot(static_cast<double>(mx), static_cast<double>(my)) * h;
        grid_c[ky * L + kx] = cov_at_distance(j, r);
      }
    }
    fft::c2c_2d(grid_c.data(), L, L, /*backward=*/false);
    double mx = 0.0;
    for (const auto& c : grid_c) mx = std::max(mx, c.real());
    spec_sd_2d_[j].resize(L * L);
    const double Ltot = static_cast<double>(L) * static_cast<double>(L);
    for (size_t m = 0; m < L * L; ++m) {
      double lam = grid_c[m].real();
      if (lam < -kEigClipRel * mx)
        throw std::runtime_error("StarFieldSampler: 2-d circulant embedding not PSD at level " +
                                 std::to_string(j));
      lam = std::max(lam, 0.0);
      spec_sd_2d_[j][m] = std::sqrt(lam / Ltot);
    }
  }
}

void StarFieldSampler::build_cholesky() {
  const size_t n = grid_.num_cells();
  chol_.resize(levels_);
  jitter_used_.assign(levels_, 0.0);
  Eigen::MatrixXd C(n, n);
  for (size_t j = 0; j < levels_; ++j) {
    for (size_t a = 0; a < n; ++a) {
      C(a, a) = cov_rows_[j][0];
      for (size_t b = 0; b < a; ++b) {
        const double v = increment_cov_cells(j, a, b);
        C(a, b) = v;
        C(b, a) = v;
      }
    }
    const double diag = cov_rows_[j][0];
    bool done = false;
    for (double jit : {0.0, 1e-12, 1e-10, 1e-8}) {
      Eigen::MatrixXd A = C;
      if (jit > 0) A.diagonal().array() += jit * diag;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() == Eigen::Success) {
        Eigen::MatrixXd Lm = llt.matrixL();
        chol_[j].assign(n * n, 0.0);
        for (size_t a = 0; a < n; ++a)
          for (size_t b = 0; b <= a; ++b) chol_[j][a * n + b] = Lm(a, b);
        jitter_used_[j] = jit * diag;
        done = true;
        break;
      }
    }
    if (!done)
      throw std::runtime_error(
          "StarFieldSampler: covariance not positive semidefinite after jitter ramp at level " +
          std::to_string(j));
  }
}

void StarFieldSampler::add_layer(size_t level, rng::Stream& stream, std::vector<double>& x,
                                 const Tilt& tilt) const {
  const size_t n = grid_.num_cells();
  if (backend_ == FieldBackend::cholesky) {
    std::vector<double> z(n);
    stream.fill_gaussian(z.data(), n);
    const std::vector<double>& Lf = chol_[level];
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* rowp = &Lf[i * n];
      for (size_t k = 0; k <= i; ++k) acc += rowp[k] * z[k];
      x[i] += acc;
    }
  } else if (grid_.d == 1) {
    const size_t L = embed_n_;
    const std::vector<double>& sd = spec_sd_[level];
    std::vector<std::complex<double>> spec(L / 2 + 1);
    spec[0] = sd[0] * stream.gaussian();
    for (size_t k = 1; k < L / 2; ++k)
      spec[k] = std::complex<double>(sd[k] * stream.gaussian(), sd[k] * stream.gaussian());
    spec[L / 2] = sd[L / 2] * stream.gaussian();
    std::vector<double> buf(L);
    fft::half_spectrum_to_real(spec.data(), buf.data(), L);
    for (size_t i = 0; i < n; ++i) x[i] += buf[i];
  } else {
    const size_t L = embed_n_;
    const size_t side = grid_.cells_per_side();
    const std::vector<double>& sd = spec_sd_2d_[level];
    std::vector<std::complex<double>> w(L * L);
    for (size_t m = 0; m < L * L; ++m) {
      const double g1 = stream.gaussian();
      const double g2 = stream.gaussian();
      w[m] = std::complex<double>(sd[m] * g1, sd[m] * g2);
    }
    fft::c2c_2d(w.data(), L, L, /*backward=*/true);
    for (size_t iy = 0; iy < side; ++iy)
      for (size_t ix = 0; ix < side; ++ix) x[iy * side + ix] += w[iy * L + ix].real();
  }
  if (tilt.enabled && tilt.gamma != 0.0) {
    for (size_t i = 0; i < n; ++i)
      x[i] += tilt.gamma * increment_cov_cells(level, i, tilt.cell);
  }
}

ScaleField StarFieldSampler::sample(const rng::StreamKey& base,
                                    const StarFieldOptions& opts) const {
  const size_t n = grid_.num_cells();
  const double gc = gamma_c(grid_.d);
  ScaleField f;
  f.grid = grid_;
  f.dt = dt_;
  f.levels = levels_;
  f.var_per_level.assign(levels_, dt_);
  f.values.assign(n, 0.0);
  if (opts.track_barrier) f.barrier_min.assign(n, 0.0);
  f.probe_traj.assign(opts.probe_cells.size(), {});
  for (auto& tr : f.probe_traj) tr.reserve(levels_);

  double var_acc = 0.0;
  for (size_t j = 0; j < levels_; ++j) {
    if (opts.keep_previous_level && j + 1 == levels_) {
      f.prev_values = f.values;
      f.prev_barrier_min = f.barrier_min;
      f.prev_var_total = var_acc;
    }
    rng::Stream stream(rng::StreamKey{base.seed, base.tag, base.replica, j + 1});
    add_layer(j, stream, f.values, opts.tilt);
    var_acc += dt_;
    if (opts.track_barrier) {
      const double drift = gc * var_acc;
      for (size_t i = 0; i < n; ++i)
        f.barrier_min[i] = std::min(f.barrier_min[i], drift - f.values[i]);
    }
    for (size_t p = 0; p < opts.probe_cells.size(); ++p)
      f.probe_traj[p].push_back(f.values[opts.probe_cells[p]]);
    for (size_t lev : opts.snapshot_levels) {
      if (lev == j + 1) f.snapshots[lev] = ScaleField::Snapshot{f.values, var_acc};
    }
  }
  f.var_total = var_acc;
  return f;
}

}  // namespace chaoslab::fields
