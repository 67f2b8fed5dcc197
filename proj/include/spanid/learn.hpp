#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spanid/gradients.hpp"
#include "spanid/losses.hpp"
#include "spanid/types.hpp"

namespace spanid {

struct PriorEntry {
  int member = -1;
  double k_prior = 1.0;
  double confidence = 0.0;  // p in [0, 1]
};

/// Prior knowledge fed into the identification: initial-value blending
/// (inspection/drone estimates) and per-member gradient scales for members
/// known to be weakly observable.
struct PriorSpec {
  std::vector<PriorEntry> entries;
  ScalingProfile scales;  // empty -> all ones
  std::string source;     // inspection | drone | fe-sensitivity

  void validate(int member_count) const;
};

/// k_initial = (1-p) k_healthy + p k_prior per member with a prior.
DeviationRatios apply_prior(const PriorSpec& prior, int member_count, double k_healthy = 1.0);

enum class OptimizerKind { kRmsprop, kAdamW };

OptimizerKind optimizer_from_string(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

/// Per-parameter state for RMSprop / AdamW. AdamW runs with decoupled decay
/// fixed at zero; the pull toward the healthy state comes from the L1 term
/// instead.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kRmsprop;
  double rho = 0.99;     // RMSprop smoothing
  double beta1 = 0.9;    // AdamW moments
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vector v;  // second moment
  Vector m;  // first moment (AdamW)
  long step_count = 0;

  static OptimizerState create(OptimizerKind kind, int parameter_count);
};

/// One update in place, followed by the 0.01 clamp on every entry.
void optimizer_step(OptimizerState& state, Vector& k, const Vector& gradient, double lr);

struct CyclicLrSpec {
  double base = 1e-3;
  double max = 1e-3;
  int step_size = 50;   // iterations per half cycle
  double gamma = 1.0;   // exp-range amplitude decay per iteration
};

/// Triangular wave between base and max with exp-range amplitude decay.
double cyclic_lr(long iteration, const CyclicLrSpec& spec);

/// L1 weight for the next epoch: 1e-3 times the previous epoch's mean
/// primary loss.
inline double next_l1_lambda(double previous_primary_loss) {
  return 1e-3 * previous_primary_loss;
}

struct TrainingSchedule {
  OptimizerKind optimizer = OptimizerKind::kRmsprop;
  double learning_rate = 3e-3;
  std::optional<CyclicLrSpec> cyclic;
  int max_epochs = 300;
  int batch_count = 4;
  double tolerance = 1e-5;      // relative loss change over the stall window
  int stall_window = 20;        // epochs
};

/// Adds zero-mean Gaussian noise with sigma = level * RMS per column.
/// Deterministic under the seed.
void add_noise(Matrix& channels, double level, std::uint64_t seed);

struct DamagedMemberRow {
  int member = -1;
  double ground_truth = 1.0;
  double predicted = 1.0;
  double relative_error_pct = 0.0;
};

struct FalsePositiveRow {
  int member = -1;
  double predicted = 1.0;
  double error_pct = 0.0;
};

struct DamageReport {
  std::vector<DamagedMemberRow> damaged;
  std::vector<FalsePositiveRow> false_positives;
  double average_accuracy_pct = 0.0;  // 100 - mean relative error, damaged members
  double max_damaged_error_pct = 0.0;
  bool has_ground_truth = false;
};

/// Flags undamaged members beyond the threshold and tabulates errors against
/// the ground truth when one is available (field mode reports deviations only).
DamageReport classify_and_report(const Vector& k, const Vector* ground_truth,
                                 double threshold = 0.05);

struct IdentificationResult {
  Vector final_k;
  std::vector<double> loss_history;        // total loss per epoch
  std::vector<double> primary_loss_history;
  std::vector<Vector> k_history;           // per-epoch snapshots
  DamageReport report;
  int epochs_run = 0;
  bool converged_early = false;
  double wall_clock_s = 0.0;
};

/// The unsupervised identification loop: per batch, reassemble K(k) (and
/// re-reduce), simulate from the carried state, take one scaled optimizer
/// step on the total loss, clamp; per epoch, refresh the L1 weight from the
/// previous primary loss and test the plateau stop.
IdentificationResult identify(const TrajectoryEngine& engine, const MeasuredResponse& measured,
                              const PriorSpec& prior, const TrainingSchedule& schedule,
                              const Vector* ground_truth = nullptr);

}  // namespace spanid
