#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "spanid/types.hpp"

namespace spanid {

struct LossConfig {
  double huber_beta = 1.0;
  double disp_weight = 0.9;
  double accel_weight = 0.1;
  bool use_acceleration = false;
  std::vector<int> observed_dofs;  // bridge free-DOF indices
};

/// Per-sample smooth-L1 value: quadratic inside |d| < beta, linear outside.
inline double huber_sample(double diff, double beta) {
  const double a = std::abs(diff);
  return a < beta ? 0.5 * diff * diff / beta : a - 0.5 * beta;
}

inline double huber_derivative(double diff, double beta) {
  return std::abs(diff) < beta ? diff / beta : (diff > 0 ? 1.0 : -1.0);
}

/// Mean Huber loss over paired samples.
inline double huber_loss(const Vector& pred, const Vector& truth, double beta) {
  if (pred.size() != truth.size()) throw InputError("huber loss: length mismatch");
  if (!(beta > 0)) throw InputError("huber loss: beta must be positive");
  if (pred.size() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) sum += huber_sample(pred[i] - truth[i], beta);
  return sum / static_cast<double>(pred.size());
}

/// Weighted combination of the response channels. A single present channel
/// passes through unweighted.
inline double combined_loss(std::optional<double> disp, std::optional<double> accel,
                            const LossConfig& config) {
  if (!disp && !accel) throw InputError("combined loss: both response channels absent");
  if (disp && !accel) return *disp;
  if (!disp && accel) return *accel;
  return config.disp_weight * *disp + config.accel_weight * *accel;
}

/// lambda * sum_i |k_i - 1|, the sparsity pull toward the healthy state.
inline double l1_regularizer(const Vector& k, double lambda) {
  if (lambda < 0) throw InputError("l1 regularizer: lambda must be >= 0");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < k.size(); ++i) sum += std::abs(k[i] - 1.0);
  return lambda * sum;
}

inline Vector l1_subgradient(const Vector& k, double lambda) {
  Vector g = Vector::Zero(k.size());
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    if (k[i] > 1.0) g[i] = lambda;
    else if (k[i] < 1.0) g[i] = -lambda;
  }
  return g;
}

}  // namespace spanid
