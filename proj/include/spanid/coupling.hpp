#pragma once

#include <Eigen/Cholesky>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spanid/types.hpp"

namespace spanid {

/// Simply supported rail modeled with assumed sine modes.
struct RailModel {
  double length = 0.0;            // m, spans the bridge
  double flexural_rigidity = 0.0; // EI, N m^2
  double mass_per_length = 0.0;   // kg/m
  int n_modes = 5;

  double mode_shape(int mode, double x) const {  // mode is 1-based
    return std::sin(mode * M_PI * x / length);
  }
  void validate() const {
    if (n_modes < 1 || length <= 0 || flexural_rigidity <= 0 || mass_per_length <= 0) {
      throw InputError("rail model parameters must be positive with n_modes >= 1");
    }
  }
};

/// Diagonal modal mass and stiffness of the rail: M[k,k] = rho*A*L/2,
/// K[k,k] = EI (k pi / L)^4 L/2.
std::pair<Matrix, Matrix> rail_modal_matrices(const RailModel& rail);

struct Axle {
  double mass_kg = 0.0;
  double load_n = 0.0;   // static wheel load, downward positive
  double offset_m = 0.0; // behind the lead axle
};

struct TrainConfig {
  std::vector<Axle> axles;
  double velocity_mps = 0.0;
  double entry_time_s = 0.0;

  void validate() const;
  double length() const { return axles.empty() ? 0.0 : axles.back().offset_m; }
  /// Position of axle i along the rail at time t.
  double axle_position(int i, double t) const {
    return velocity_mps * (t - entry_time_s) - axles[i].offset_m;
  }
  /// Time at which the last axle leaves a rail of the given length.
  double exit_time(double rail_length) const {
    return entry_time_s + (rail_length + length()) / velocity_mps;
  }
};

/// Rail-block mass added by on-span axles:
/// dM[j,k](t) = sum_i m_i phi_j(x_i) phi_k(x_i). Symmetric PSD.
Matrix time_varying_mass(const TrainConfig& train, const RailModel& rail, double t);

/// Modal force from on-span axle loads: p_k(t) = -sum_i W_i phi_k(x_i).
Vector moving_force(const TrainConfig& train, const RailModel& rail, double t);

struct Sleeper {
  double x = 0.0;          // position along the rail
  int bridge_dof = -1;     // free bridge DOF the sleeper bears on
  double stiffness = 2e8;  // N/m
  double damping = 5e4;    // N s/m
};

struct InteractionLayer {
  std::vector<Sleeper> sleepers;
};

/// Assembled bridge-rail-train system, constant blocks ordered {q_R; u_B}
/// with one rail block per track. Mass varies in time only on the rail
/// blocks through the moving axle masses.
class CoupledLtvSystem {
 public:
  struct Track {
    RailModel rail;
    InteractionLayer layer;
    TrainConfig train;
  };

  CoupledLtvSystem(const SystemMatrices& bridge, std::vector<Track> tracks);

  /// Assembly from raw blocks; used by tests and simple oracles. The force
  /// and rail-mass generators may be empty (zero).
  static CoupledLtvSystem from_blocks(Matrix mass0, Matrix damping, Matrix stiffness,
                                      int rail_dofs,
                                      std::function<Vector(double)> force = {},
                                      std::function<Matrix(double)> rail_mass_delta = {});

  int size() const { return static_cast<int>(stiffness_.rows()); }
  int rail_dof_count() const { return rail_dofs_; }
  int bridge_dof_count() const { return size() - rail_dofs_; }
  const std::vector<Track>& tracks() const { return tracks_; }

  const Matrix& stiffness() const { return stiffness_; }
  const Matrix& damping() const { return damping_; }
  /// Constant part of the mass (no axles on span).
  const Matrix& mass_constant() const { return mass0_; }

  Vector force(double t) const;
  /// Time-varying addition to the rail block, size rail_dofs x rail_dofs.
  Matrix rail_mass_delta(double t) const;
  Matrix mass_total(double t) const;

  /// Last instant at which any train still loads the span.
  double crossing_end_time() const;

 private:
  CoupledLtvSystem() = default;
  std::vector<Track> tracks_;
  int rail_dofs_ = 0;
  Matrix mass0_, damping_, stiffness_;
  std::function<Vector(double)> force_override_;
  std::function<Matrix(double)> delta_override_;
};

/// Spec operation name; single-track convenience over the class.
CoupledLtvSystem couple_systems(const SystemMatrices& bridge, const RailModel& rail,
                                const InteractionLayer& layer, const TrainConfig& train);

/// Factorizations of M_total(t) over a fixed time grid. The bridge block is
/// constant in time and factored once; the small rail block is factored per
/// entry. Rail factors do not depend on the deviation ratios and are shared
/// between caches derived via with_bridge_mass.
class MassCache {
 public:
  MassCache() = default;
  MassCache(const CoupledLtvSystem& system, std::vector<double> timestamps);

  /// Same rail factors, different (e.g. Guyan-reduced) bridge mass block.
  MassCache with_bridge_mass(const Matrix& bridge_mass) const;

  int size() const { return rail_factors_ ? static_cast<int>(rail_factors_->size()) : 0; }
  double timestamp(int index) const { return timestamps_->at(index); }

  Vector solve(int index, const Vector& rhs) const;
  /// Index of the cache entry at time t, if t lies on the cached grid.
  std::optional<int> find(double t) const;

 private:
  std::shared_ptr<const std::vector<double>> timestamps_;
  std::shared_ptr<const std::vector<Eigen::LLT<Matrix>>> rail_factors_;
  Eigen::LLT<Matrix> bridge_factor_;
  int rail_dofs_ = 0;
  int bridge_dofs_ = 0;
  double grid_t0_ = 0.0;
  double grid_dt_ = 0.0;
};

inline MassCache precompute_mass_inverses(const CoupledLtvSystem& system,
                                          std::vector<double> timestamps) {
  return MassCache(system, std::move(timestamps));
}

/// dX/dt = [v; M(t)^-1 (p(t) - C v - K u)]. Uses the cache when t lies on
/// its grid; otherwise factors on the fly, or throws in strict mode.
Vector first_order_rhs(const CoupledLtvSystem& system, double t, const Vector& state,
                       const MassCache* cache = nullptr, bool strict_cache = false);

}  // namespace spanid
