#include "spanid/integrate.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spanid/fe_model.hpp"
#include "spanid/log.hpp"

namespace spanid {

Scheme scheme_from_string(const std::string& name) {
  if (name == "rk4") return Scheme::kRk4;
  if (name == "radau") return Scheme::kRadau;
  throw InputError("unknown integration scheme '" + name + "' (expected rk4 or radau)");
}

std::string scheme_name(Scheme s) { return s == Scheme::kRk4 ? "rk4" : "radau"; }

Vector rk4_step(const CoupledLtvSystem& system, const Vector& state, double t, double dt,
                const MassCache* cache) {
  Vector k1 = first_order_rhs(system, t, state, cache);
  Vector k2 = first_order_rhs(system, t + dt / 2, state + (dt / 2) * k1, cache);
  Vector k3 = first_order_rhs(system, t + dt / 2, state + (dt / 2) * k2, cache);
  Vector k4 = first_order_rhs(system, t + dt, state + dt * k3, cache);
  return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector radau_step_linear(const Matrix& jac, const Vector& affine, const Vector& state,
                         double dt) {
  const int n = static_cast<int>(state.size());
  Vector f = affine + jac * state;
  Matrix block = Matrix::Identity(2 * n, 2 * n);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      block.block(i * n, j * n, n, n) -= dt * RadauTableau::a[i][j] * jac;
    }
  }
  Vector rhs(2 * n);
  rhs.head(n) = f;
  rhs.tail(n) = f;
  Vector stages = block.partialPivLu().solve(rhs);
  return state + dt * (RadauTableau::b[0] * stages.head(n) + RadauTableau::b[1] * stages.tail(n));
}

RadauWorkspace::RadauWorkspace(const CoupledLtvSystem& system, double dt)
    : system_(&system), dt_(dt), n_(system.size()), rail_dofs_(system.rail_dof_count()) {
  if (!(dt > 0)) throw InputError("radau step requires dt > 0");
  const Matrix& m0 = system.mass_constant();
  const Matrix& c = system.damping();
  const Matrix& k = system.stiffness();

  // alpha = A^2 for the two-stage tableau.
  double alpha[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      alpha[i][j] = RadauTableau::a[i][0] * RadauTableau::a[0][j] +
                    RadauTableau::a[i][1] * RadauTableau::a[1][j];
    }
  }

  Matrix s0 = Matrix::Zero(2 * n_, 2 * n_);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Matrix blockm = dt * RadauTableau::a[i][j] * c + dt * dt * alpha[i][j] * k;
      if (i == j) blockm += m0;
      s0.block(i * n_, j * n_, n_, n_) = blockm;
    }
  }
  s0_lu_.compute(s0);

  const int nr = rail_dofs_;
  if (nr > 0) {
    Matrix e = Matrix::Zero(2 * n_, 2 * nr);
    for (int stage = 0; stage < 2; ++stage) {
      for (int r = 0; r < nr; ++r) e(stage * n_ + r, stage * nr + r) = 1.0;
    }
    s0_inv_e_ = s0_lu_.solve(e);
    s0t_inv_e_ = s0_lu_.transpose().solve(e);
    h_ = e.transpose() * s0_inv_e_;
    ht_ = e.transpose() * s0t_inv_e_;
  }
}

Vector RadauWorkspace::solve_stage_system(double t, const Vector& rhs, bool transposed) const {
  Vector y = transposed ? s0_lu_.transpose().solve(rhs).eval() : s0_lu_.solve(rhs).eval();
  const int nr = rail_dofs_;
  if (nr == 0) return y;
  Matrix dm = system_->rail_mass_delta(t);
  if (dm.cwiseAbs().maxCoeff() == 0.0) return y;

  // S = S0 + E G E' with G = blkdiag(dm, dm); the correction is
  // S^-1 b = y - S0^-1 E (I + G H)^-1 G E' y.
  Matrix g = Matrix::Zero(2 * nr, 2 * nr);
  g.topLeftCorner(nr, nr) = dm;
  g.bottomRightCorner(nr, nr) = dm;

  Vector ety(2 * nr);
  for (int stage = 0; stage < 2; ++stage) {
    ety.segment(stage * nr, nr) = y.segment(stage * n_, nr);
  }
  const Matrix& h = transposed ? ht_ : h_;
  const Matrix& s0e = transposed ? s0t_inv_e_ : s0_inv_e_;
  Matrix small = Matrix::Identity(2 * nr, 2 * nr) + g * h;
  Vector corr = small.partialPivLu().solve(g * ety);
  return y - s0e * corr;
}

Vector RadauWorkspace::step(double t, const Vector& state, Matrix* stages) const {
  const int n = n_;
  if (state.size() != 2 * n) throw InputError("state size does not match the system");
  const auto u = state.head(n);
  const auto v = state.tail(n);

  Vector p = system_->force(t);
  Vector ku = system_->stiffness() * u;
  Vector kv = system_->stiffness() * v;
  Vector cv = system_->damping() * v;
  Vector base = p - cv - ku;

  Vector rhs(2 * n);
  rhs.head(n) = base - dt_ * RadauTableau::c[0] * kv;
  rhs.tail(n) = base - dt_ * RadauTableau::c[1] * kv;

  Vector w = solve_stage_system(t, rhs, false);
  if (!w.allFinite()) {
    throw InstabilityError("radau stage solve produced a non-finite result at t=" +
                           std::to_string(t));
  }
  if (stages) {
    stages->resize(n, 2);
    stages->col(0) = w.head(n);
    stages->col(1) = w.tail(n);
  }

  // b'A = [1/2, 0], so only the first stage feeds the displacement update.
  Vector next(2 * n);
  next.head(n) = u + dt_ * v + 0.5 * dt_ * dt_ * w.head(n);
  next.tail(n) = v + dt_ * (RadauTableau::b[0] * w.head(n) + RadauTableau::b[1] * w.tail(n));
  return next;
}

Vector RadauWorkspace::solve_transposed(double t, const Vector& rhs) const {
  return solve_stage_system(t, rhs, true);
}

std::vector<double> simulation_time_grid(Scheme scheme, double dt, int steps) {
  std::vector<double> grid;
  if (scheme == Scheme::kRk4) {
    grid.reserve(2 * steps + 1);
    for (int i = 0; i < steps; ++i) {
      grid.push_back(i * dt);
      grid.push_back(i * dt + dt / 2);
    }
    grid.push_back(steps * dt);
  } else {
    grid.reserve(steps + 1);
    for (int i = 0; i <= steps; ++i) grid.push_back(i * dt);
  }
  return grid;
}

Trajectory simulate(const CoupledLtvSystem& system, const SimulateOptions& options) {
  if (!(options.dt > 0)) throw InputError("simulate requires dt > 0");
  const int n = system.size();
  const int steps = static_cast<int>(std::floor(options.duration / options.dt + 1e-9));

  Vector state;
  if (options.initial_state.size() == 0) {
    state = Vector::Zero(2 * n);
  } else if (options.initial_state.size() == 2 * n) {
    state = options.initial_state;
  } else {
    throw InputError("initial state size does not match the system");
  }

  Trajectory out;
  out.dt = options.dt;
  out.timestamps.resize(steps + 1);
  out.states.resize(steps + 1, 2 * n);
  out.states.row(0) = state;
  out.timestamps[0] = 0.0;

  MassCache local_cache;
  const MassCache* cache = options.cache;
  std::optional<RadauWorkspace> radau;
  if (options.scheme == Scheme::kRk4) {
    if (cache == nullptr) {
      local_cache = MassCache(system, simulation_time_grid(Scheme::kRk4, options.dt, steps));
      cache = &local_cache;
    }
  } else {
    radau.emplace(system, options.dt);
  }

  for (int i = 0; i < steps; ++i) {
    const double t = i * options.dt;
    if (options.scheme == Scheme::kRk4) {
      state = rk4_step(system, state, t, options.dt, cache);
    } else {
      state = radau->step(t, state);
    }
    if (!state.allFinite()) {
      throw InstabilityError("integration diverged at t=" + std::to_string(t + options.dt) +
                             "; the timestep is too large for this system");
    }
    out.states.row(i + 1) = state;
    out.timestamps[i + 1] = (i + 1) * options.dt;
  }

  if (options.want_accelerations) {
    out.accelerations.resize(steps + 1, n);
    const auto vel = out.states.rightCols(n);
    for (int i = 0; i <= steps; ++i) {
      if (i == 0) {
        out.accelerations.row(0) =
            steps >= 1 ? ((vel.row(1) - vel.row(0)) / options.dt).eval() : Vector::Zero(n).transpose().eval();
      } else if (i == steps) {
        out.accelerations.row(i) = (vel.row(i) - vel.row(i - 1)) / options.dt;
      } else {
        out.accelerations.row(i) = (vel.row(i + 1) - vel.row(i - 1)) / (2.0 * options.dt);
      }
    }
  }
  return out;
}

double round_to_one_significant_figure(double value) {
  if (value <= 0) throw InputError("cannot round a non-positive timestep");
  const double decade = std::pow(10.0, std::floor(std::log10(value)));
  double mantissa = std::round(value / decade);
  if (mantissa >= 10.0) return 10.0 * decade;
  return mantissa * decade;
}

double select_timestep(const CoupledLtvSystem& system, Scheme scheme,
                       std::optional<double> requested) {
  if (scheme == Scheme::kRadau) {
    if (!requested || !(*requested > 0)) {
      throw InputError("implicit scheme needs an accuracy-driven timestep from the caller");
    }
    return *requested;
  }
  Vector freqs = natural_frequencies_hz(system.stiffness(), system.mass_total(0.0));
  const double f_max = freqs[freqs.size() - 1];
  if (!(f_max > 0)) throw NumericalError("system has no positive natural frequency");
  const double dt_rule = 1.0 / (10.0 * f_max);
  return round_to_one_significant_figure(dt_rule);
}

MeasuredSeries observe_trajectory(const Trajectory& trajectory,
                                  const std::vector<int>& dof_ids,
                                  const std::vector<int>& state_offsets, int rail_dofs) {
  if (dof_ids.size() != state_offsets.size()) {
    throw InputError("observed dof id/offset length mismatch");
  }
  const int n = trajectory.state_size() / 2;
  const int rows = static_cast<int>(trajectory.timestamps.size());
  const int n_obs = static_cast<int>(dof_ids.size());
  MeasuredSeries series;
  series.dt = trajectory.dt;
  series.timestamps = trajectory.timestamps;
  series.dof_ids = dof_ids;
  series.disp.resize(rows, n_obs);
  series.vel.resize(rows, n_obs);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < n_obs; ++j) {
      series.disp(r, j) = trajectory.states(r, rail_dofs + state_offsets[j]);
      series.vel(r, j) = trajectory.states(r, n + rail_dofs + state_offsets[j]);
    }
  }
  return series;
}

void write_observed_csv(const std::string& path, const MeasuredSeries& series) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << "t";
  for (int dof : series.dof_ids) out << ",dof_" << dof << "_disp";
  for (int dof : series.dof_ids) out << ",dof_" << dof << "_vel";
  out << "\n";

  char buf[32];
  const int n_obs = static_cast<int>(series.dof_ids.size());
  for (int row = 0; row < static_cast<int>(series.timestamps.size()); ++row) {
    std::snprintf(buf, sizeof buf, "%.17g", series.timestamps[row]);
    out << buf;
    for (int j = 0; j < n_obs; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", series.disp(row, j));
      out << ',' << buf;
    }
    for (int j = 0; j < n_obs; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", series.vel(row, j));
      out << ',' << buf;
    }
    out << "\n";
  }
}

MeasuredSeries read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open measurements file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw InputError("measurements file '" + path + "' is empty");

  MeasuredSeries series;
  {
    std::stringstream ss(header);
    std::string col;
    bool first = true;
    while (std::getline(ss, col, ',')) {
      if (first) {
        if (col != "t") throw InputError("measurements file must start with a 't' column");
        first = false;
        continue;
      }
      int dof = -1;
      char kind[8] = {0};
      if (std::sscanf(col.c_str(), "dof_%d_%7s", &dof, kind) != 2) {
        throw InputError("unrecognized measurement column '" + col + "'");
      }
      if (std::string(kind) == "disp") series.dof_ids.push_back(dof);
    }
  }
  const int n_obs = static_cast<int>(series.dof_ids.size());
  if (n_obs == 0) throw InputError("measurements file has no displacement columns");

  std::vector<double> disp_flat, vel_flat;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      const double value = std::strtod(cell.c_str(), nullptr);
      if (col == 0) {
        series.timestamps.push_back(value);
      } else if (col <= n_obs) {
        disp_flat.push_back(value);
      } else {
        vel_flat.push_back(value);
      }
      ++col;
    }
    if (col != 1 + 2 * n_obs) {
      throw InputError("measurement row " + std::to_string(series.timestamps.size()) +
                       " has " + std::to_string(col) + " columns, expected " +
                       std::to_string(1 + 2 * n_obs));
    }
  }
  const int rows = static_cast<int>(series.timestamps.size());
  if (rows < 2) throw InputError("measurements need at least two rows");
  series.disp = Eigen::Map<Matrix>(disp_flat.data(), n_obs, rows).transpose();
  series.vel = Eigen::Map<Matrix>(vel_flat.data(), n_obs, rows).transpose();
  series.dt = series.timestamps[1] - series.timestamps[0];
  return series;
}

}  // namespace spanid
