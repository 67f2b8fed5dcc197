#pragma once

#include <memory>
#include <vector>

#include "spanid/coupling.hpp"
#include "spanid/fe_model.hpp"
#include "spanid/integrate.hpp"
#include "spanid/losses.hpp"
#include "spanid/reduction.hpp"
#include "spanid/types.hpp"

namespace spanid {

/// Per-member gradient multipliers applied before the optimizer update.
struct ScalingProfile {
  Vector s;

  static ScalingProfile ones(int n) { return {Vector::Ones(n)}; }
  void validate() const {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (!(s[i] > 0)) throw InputError("gradient scale factors must be positive");
    }
  }
};

Vector scale_gradients(const Vector& gradient, const ScalingProfile& profile);

/// Everything needed to march the coupled system for one crossing. The
/// sleeper attachments use original bridge DOF numbering; the engine remaps
/// them per batch when the bridge is Guyan-reduced.
struct SimulationPlan {
  const BridgeModel* model = nullptr;
  std::vector<CoupledLtvSystem::Track> tracks;
  Scheme scheme = Scheme::kRk4;
  double dt = 0.0;
  int steps = 0;
  int batch_count = 1;
  bool reduce = false;
  MasterSlavePartition partition;  // when reduce
  bool freeze_transform = false;
  int checkpoint_stride = 64;

  int batch_start(int batch) const;
  int batch_length(int batch) const;
};

/// Measured responses at the observed DOFs, rows aligned with the
/// simulation grid (steps+1 rows), columns with LossConfig::observed_dofs.
struct MeasuredResponse {
  Matrix disp;
  Matrix vel;
};

/// Coupled system assembled for one deviation-ratio vector under a plan,
/// with the Guyan transform retained when the bridge is reduced.
struct PlanSystem {
  std::optional<GuyanTransform> guyan;
  std::optional<CoupledLtvSystem> system;
  int bridge_dofs = 0;
};

PlanSystem build_plan_system(const SimulationPlan& plan, const DeviationRatios& k);

/// Forward simulation of the plan's full grid from a zero state.
Trajectory simulate_plan(const SimulationPlan& plan, const DeviationRatios& k,
                         bool want_accelerations = false);

/// Bridge-partition offsets of observed DOFs (master positions when
/// reduced); throws if an observed DOF is not retained.
std::vector<int> observed_state_offsets(const SimulationPlan& plan,
                                        const std::vector<int>& observed_dofs);

struct BatchEvaluation {
  double loss = 0.0;  // combined response loss of the batch
  double disp_loss = 0.0;
  double accel_loss = 0.0;
  long sample_rows = 0;
  Vector gradient;  // d(batch loss)/dk, empty when not requested
  Vector end_state;
};

/// Forward simulation plus discrete-adjoint gradients, one batch at a time.
/// Each batch rebuilds K(k) (and the Guyan transform when reducing), then
/// time-steps from the supplied start state with checkpointed storage; the
/// reverse sweep runs segment-wise off the checkpoints.
class TrajectoryEngine {
 public:
  TrajectoryEngine(SimulationPlan plan, LossConfig loss);

  const SimulationPlan& plan() const { return plan_; }
  const LossConfig& loss_config() const { return loss_; }
  int system_size() const { return system_size_; }
  Vector zero_state() const { return Vector::Zero(2 * system_size_); }

  BatchEvaluation evaluate_batch(const DeviationRatios& k, int batch, const Vector& start_state,
                                 const MeasuredResponse& measured, bool want_gradient) const;

 private:
  struct BatchSystem;
  std::unique_ptr<BatchSystem> build_system(const DeviationRatios& k) const;

  SimulationPlan plan_;
  LossConfig loss_;
  int system_size_ = 0;          // n = rail + bridge-partition DOFs
  int rail_dofs_ = 0;
  std::vector<int> obs_offset_;  // observed dof -> bridge-partition offset
  MassCache base_cache_;         // rk4 only; rail factors are k-independent
};

struct TrajectoryEvaluation {
  double loss = 0.0;  // combined loss over the whole trajectory
  Vector gradient;
  std::vector<Vector> batch_start_states;
  Vector final_state;
};

/// Loss and exact adjoint gradient of the batch-truncated trajectory loss.
/// When fixed_starts is given, every batch starts from the supplied states
/// (the truncation convention shared with the finite-difference oracle);
/// otherwise starts chain from a zero initial state.
TrajectoryEvaluation trajectory_loss_gradient(const TrajectoryEngine& engine,
                                              const DeviationRatios& k,
                                              const MeasuredResponse& measured,
                                              bool want_gradient = true,
                                              const std::vector<Vector>* fixed_starts = nullptr);

/// Central differences (L(k+h e_i) - L(k-h e_i)) / 2h with h relative to
/// |k_i|, honoring the same batch truncation as the adjoint. Perturbations
/// that would cross the 0.01 floor are clipped with a warning.
Vector finite_difference_gradient(const TrajectoryEngine& engine, const DeviationRatios& k,
                                  const MeasuredResponse& measured, double h_rel = 1e-6,
                                  int jobs = 1);

}  // namespace spanid
