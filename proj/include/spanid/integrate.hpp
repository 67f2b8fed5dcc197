#pragma once

#include <Eigen/LU>
#include <optional>
#include <string>
#include <vector>

#include "spanid/coupling.hpp"
#include "spanid/types.hpp"

namespace spanid {

enum class Scheme { kRk4, kRadau };

Scheme scheme_from_string(const std::string& name);
std::string scheme_name(Scheme s);

/// Two-stage Radau IIA, order 3, A- and L-stable.
struct RadauTableau {
  static constexpr double a[2][2] = {{5.0 / 12.0, -1.0 / 12.0}, {3.0 / 4.0, 1.0 / 4.0}};
  static constexpr double b[2] = {3.0 / 4.0, 1.0 / 4.0};
  static constexpr double c[2] = {1.0 / 3.0, 1.0};
  /// Stability function R(z) = (1 + z/3) / (1 - 2z/3 + z^2/6).
  static double stability(double z) {
    return (1.0 + z / 3.0) / (1.0 - 2.0 * z / 3.0 + z * z / 6.0);
  }
};

struct Trajectory {
  double dt = 0.0;
  std::vector<double> timestamps;
  Matrix states;         // (steps+1) x 2n, row per instant
  Matrix accelerations;  // (steps+1) x n when requested, else empty

  int steps() const { return static_cast<int>(timestamps.size()) - 1; }
  int state_size() const { return static_cast<int>(states.cols()); }
};

/// Classical four-stage explicit step; the RHS is evaluated at the true
/// stage times, with half-step mass factors served by the cache.
Vector rk4_step(const CoupledLtvSystem& system, const Vector& state, double t, double dt,
                const MassCache* cache = nullptr);

/// One step of the generic linear first-order form y' = jac*y + affine with
/// both stages solved as a single block-linear system. Used as the small
/// dense reference for the structured stepper and for scalar tests.
Vector radau_step_linear(const Matrix& jac, const Vector& affine, const Vector& state,
                         double dt);

/// Structured two-stage Radau IIA stepper for the coupled second-order
/// system. The force and the mass are frozen at the step start. The
/// constant part of the stage matrix is factored once; the moving-mass
/// contribution enters through a small rank correction on the rail block.
class RadauWorkspace {
 public:
  RadauWorkspace(const CoupledLtvSystem& system, double dt);

  double dt() const { return dt_; }

  /// X_{n+1} from X_n; optionally records the stage slopes for the adjoint.
  Vector step(double t, const Vector& state, Matrix* stages = nullptr) const;

  /// Solves S(t)^T psi = nu for the discrete adjoint of this step.
  Vector solve_transposed(double t, const Vector& rhs) const;

 private:
  Vector solve_stage_system(double t, const Vector& rhs, bool transposed) const;

  const CoupledLtvSystem* system_;
  double dt_ = 0.0;
  int n_ = 0;
  int rail_dofs_ = 0;
  Eigen::PartialPivLU<Matrix> s0_lu_;
  Matrix s0_inv_e_;   // S0^-1 E, E selecting the two stage rail blocks
  Matrix s0t_inv_e_;  // S0^-T E
  Matrix h_;          // E' S0^-1 E
  Matrix ht_;         // E' S0^-T E
};

struct SimulateOptions {
  Scheme scheme = Scheme::kRk4;
  double dt = 1e-3;
  double duration = 1.0;
  bool want_accelerations = false;
  const MassCache* cache = nullptr;  // optional externally built cache (RK4)
  Vector initial_state;              // empty = zero
};

/// Deterministic fixed-step time marching; throws InstabilityError if the
/// state leaves the finite range.
Trajectory simulate(const CoupledLtvSystem& system, const SimulateOptions& options);

/// Cache grid for a full simulation: step instants, plus half-step
/// instants for the RK-4 stage evaluations.
std::vector<double> simulation_time_grid(Scheme scheme, double dt, int steps);

/// Explicit schemes get dt = T_min/10 (T_min = 1/f_max) rounded to one
/// significant figure; implicit schemes take the requested accuracy-driven
/// timestep unchanged.
double select_timestep(const CoupledLtvSystem& system, Scheme scheme,
                       std::optional<double> requested = std::nullopt);

double round_to_one_significant_figure(double value);

struct MeasuredSeries {
  double dt = 0.0;
  std::vector<double> timestamps;
  std::vector<int> dof_ids;
  Matrix disp;  // rows x n_obs
  Matrix vel;
};

/// Extracts the observed bridge DOFs from a trajectory. state_offsets are
/// offsets within the bridge partition, dof_ids the user-facing labels.
MeasuredSeries observe_trajectory(const Trajectory& trajectory,
                                  const std::vector<int>& dof_ids,
                                  const std::vector<int>& state_offsets, int rail_dofs);

/// CSV with header t, dof_<id>_disp..., dof_<id>_vel...; values printed so
/// that read_trajectory_csv restores them bit-faithfully.
void write_observed_csv(const std::string& path, const MeasuredSeries& series);

MeasuredSeries read_trajectory_csv(const std::string& path);

}  // namespace spanid
