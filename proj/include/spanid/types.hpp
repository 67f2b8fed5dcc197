#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace spanid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Hard floor for deviation ratios; updates clamp to this value.
inline constexpr double kMinDeviationRatio = 0.01;

/// Malformed input files, schema violations, inconsistent configuration. CLI exit code 2.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Singular solves, ill-posed condensation/reduction, degenerate geometry.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite state during time stepping (timestep too large). CLI exit code 3.
struct InstabilityError : std::runtime_error {
  explicit InstabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss/gradient during identification. CLI exit code 4.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Per-member stiffness multipliers. 1.0 is the healthy state; entries are
/// clamped to kMinDeviationRatio everywhere they are produced.
struct DeviationRatios {
  Vector values;

  DeviationRatios() = default;
  explicit DeviationRatios(Vector v) : values(std::move(v)) { validate(); }

  static DeviationRatios healthy(int member_count) {
    return DeviationRatios(Vector::Ones(member_count));
  }

  int size() const { return static_cast<int>(values.size()); }
  double operator[](int i) const { return values[i]; }

  void validate() const {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] < kMinDeviationRatio) {
        throw InputError("deviation ratio for member " + std::to_string(i) +
                         " is " + std::to_string(values[i]) + ", below floor " +
                         std::to_string(kMinDeviationRatio));
      }
    }
  }
};

/// Symmetric system matrices of a linear structural model on its free DOFs.
struct SystemMatrices {
  Matrix mass;
  Matrix damping;
  Matrix stiffness;

  int dofs() const { return static_cast<int>(stiffness.rows()); }
};

}  // namespace spanid
