#include "spanid/learn.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "spanid/log.hpp"

namespace spanid {

void PriorSpec::validate(int member_count) const {
  for (const PriorEntry& e : entries) {
    if (e.member < 0 || e.member >= member_count) {
      throw InputError("prior references unknown member " + std::to_string(e.member));
    }
    if (e.confidence < 0.0 || e.confidence > 1.0) {
      throw InputError("prior confidence must lie in [0, 1]");
    }
    if (e.k_prior < kMinDeviationRatio) {
      throw InputError("prior deviation ratio below the 0.01 floor");
    }
  }
  if (scales.s.size() != 0 && scales.s.size() != member_count) {
    throw InputError("gradient scale vector length mismatch");
  }
}

DeviationRatios apply_prior(const PriorSpec& prior, int member_count, double k_healthy) {
  prior.validate(member_count);
  Vector k = Vector::Constant(member_count, k_healthy);
  for (const PriorEntry& e : prior.entries) {
    k[e.member] = (1.0 - e.confidence) * k_healthy + e.confidence * e.k_prior;
  }
  return DeviationRatios(k);
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "rmsprop") return OptimizerKind::kRmsprop;
  if (name == "adamw") return OptimizerKind::kAdamW;
  throw InputError("unknown optimizer '" + name + "' (expected rmsprop or adamw)");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kRmsprop ? "rmsprop" : "adamw";
}

OptimizerState OptimizerState::create(OptimizerKind kind, int parameter_count) {
  OptimizerState s;
  s.kind = kind;
  s.v = Vector::Zero(parameter_count);
  if (kind == OptimizerKind::kAdamW) s.m = Vector::Zero(parameter_count);
  return s;
}

void optimizer_step(OptimizerState& state, Vector& k, const Vector& gradient, double lr) {
  if (gradient.size() != k.size() || state.v.size() != k.size()) {
    throw InputError("optimizer state/parameter size mismatch");
  }
  if (!gradient.allFinite()) {
    throw DivergenceError("non-finite gradient passed to the optimizer");
  }
  ++state.step_count;
  if (state.kind == OptimizerKind::kRmsprop) {
    state.v = state.rho * state.v + (1.0 - state.rho) * gradient.cwiseProduct(gradient);
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      k[i] -= lr * gradient[i] / (std::sqrt(state.v[i]) + state.epsilon);
    }
  } else {
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient.cwiseProduct(gradient);
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      const double m_hat = state.m[i] / bc1;
      const double v_hat = state.v[i] / bc2;
      k[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    k[i] = std::max(k[i], kMinDeviationRatio);
  }
}

double cyclic_lr(long iteration, const CyclicLrSpec& spec) {
  if (spec.step_size < 1 || spec.base > spec.max || !(spec.base > 0)) {
    throw InputError("invalid cyclic learning-rate specification");
  }
  const long period = 2L * spec.step_size;
  const long phase = iteration % period;
  const double up = static_cast<double>(spec.step_size);
  const double triangle =
      phase <= spec.step_size ? phase / up : (period - phase) / up;
  const double amplitude = (spec.max - spec.base) * std::pow(spec.gamma, (double)iteration);
  return spec.base + amplitude * triangle;
}

void add_noise(Matrix& channels, double level, std::uint64_t seed) {
  if (level < 0) throw InputError("noise level must be >= 0");
  if (level == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int rows = static_cast<int>(channels.rows());
  for (int j = 0; j < channels.cols(); ++j) {
    const double rms = std::sqrt(channels.col(j).squaredNorm() / rows);
    const double sigma = level * rms;
    for (int r = 0; r < rows; ++r) channels(r, j) += sigma * gauss(rng);
  }
}

DamageReport classify_and_report(const Vector& k, const Vector* ground_truth,
                                 double threshold) {
  DamageReport report;
  report.has_ground_truth = ground_truth != nullptr;
  if (ground_truth != nullptr && ground_truth->size() != k.size()) {
    throw InputError("ground-truth deviation vector length mismatch");
  }
  double err_sum = 0.0;
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    const double gt = ground_truth ? (*ground_truth)[i] : 1.0;
    const bool truly_damaged = ground_truth && gt != 1.0;
    if (truly_damaged) {
      DamagedMemberRow row;
      row.member = static_cast<int>(i);
      row.ground_truth = gt;
      row.predicted = k[i];
      row.relative_error_pct = 100.0 * std::abs(k[i] - gt) / gt;
      err_sum += row.relative_error_pct;
      report.max_damaged_error_pct = std::max(report.max_damaged_error_pct,
                                              row.relative_error_pct);
      report.damaged.push_back(row);
    } else if (std::abs(k[i] - 1.0) > threshold) {
      FalsePositiveRow row;
      row.member = static_cast<int>(i);
      row.predicted = k[i];
      row.error_pct = 100.0 * std::abs(k[i] - 1.0);
      report.false_positives.push_back(row);
    }
  }
  if (!report.damaged.empty()) {
    report.average_accuracy_pct = 100.0 - err_sum / report.damaged.size();
  }
  return report;
}

IdentificationResult identify(const TrajectoryEngine& engine, const MeasuredResponse& measured,
                              const PriorSpec& prior, const TrainingSchedule& schedule,
                              const Vector* ground_truth) {
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationPlan& plan = engine.plan();
  const int n_members = plan.model->member_count();
  if (schedule.max_epochs < 1) throw InputError("schedule needs at least one epoch");
  if (schedule.batch_count != plan.batch_count) {
    throw InputError("schedule batch count does not match the simulation plan");
  }

  prior.validate(n_members);
  ScalingProfile scales =
      prior.scales.s.size() == 0 ? ScalingProfile::ones(n_members) : prior.scales;
  scales.validate();

  DeviationRatios k = apply_prior(prior, n_members);
  OptimizerState opt = OptimizerState::create(schedule.optimizer, n_members);

  IdentificationResult result;
  double lambda_l1 = 0.0;
  Vector last_good_k = k.values;

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    const double lr = schedule.cyclic ? cyclic_lr(epoch, *schedule.cyclic)
                                      : schedule.learning_rate;
    Vector state = engine.zero_state();
    double weighted_primary = 0.0;
    bool diverged = false;

    for (int b = 0; b < plan.batch_count; ++b) {
      BatchEvaluation eval;
      try {
        eval = engine.evaluate_batch(k, b, state, measured, true);
      } catch (const InstabilityError& e) {
        log::error(std::string("batch simulation failed: ") + e.what());
        diverged = true;
        break;
      }
      if (!std::isfinite(eval.loss)) {
        diverged = true;
        break;
      }
      weighted_primary += eval.loss * plan.batch_length(b) / plan.steps;

      Vector total_grad = eval.gradient + l1_subgradient(k.values, lambda_l1);
      Vector scaled = scale_gradients(total_grad, scales);
      optimizer_step(opt, k.values, scaled, lr);
      state = eval.end_state;
      last_good_k = k.values;
    }

    if (diverged) {
      result.final_k = last_good_k;
      result.epochs_run = epoch;
      result.report = classify_and_report(result.final_k, ground_truth);
      result.wall_clock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      throw DivergenceError("identification diverged at epoch " + std::to_string(epoch));
    }

    const double total = weighted_primary + l1_regularizer(k.values, lambda_l1);
    result.primary_loss_history.push_back(weighted_primary);
    result.loss_history.push_back(total);
    result.k_history.push_back(k.values);
    lambda_l1 = next_l1_lambda(weighted_primary);
    result.epochs_run = epoch + 1;

    const int w = schedule.stall_window;
    if (epoch >= w) {
      const double prev = result.loss_history[epoch - w];
      const double rel = std::abs(total - prev) / std::max(std::abs(prev), 1e-300);
      if (rel < schedule.tolerance) {
        result.converged_early = true;
        log::info("loss plateau reached at epoch " + std::to_string(epoch + 1));
        break;
      }
    }
  }

  result.final_k = k.values;
  result.report = classify_and_report(result.final_k, ground_truth);
  result.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace spanid
