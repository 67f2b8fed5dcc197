#pragma once

#include <Eigen/Cholesky>
#include <vector>

#include "spanid/coupling.hpp"
#include "spanid/types.hpp"

namespace spanid {

struct MasterSlavePartition {
  std::vector<int> masters;  // retained free bridge DOFs, in order
  std::vector<int> slaves;   // eliminated DOFs

  /// Builds the complement slave set and checks the partition covers
  /// 0..total_dofs-1 exactly once.
  static MasterSlavePartition from_masters(std::vector<int> masters, int total_dofs);

  int master_count() const { return static_cast<int>(masters.size()); }
  /// Position of an original DOF within the master ordering, -1 if slave.
  int master_position(int dof) const;
};

/// T = [I; -K22^-1 K21] in master-first ordering, rows mapped back to the
/// original DOF order. Retains the slave map S = K22^-1 K21 and the K22
/// factorization for the sensitivity pass.
struct GuyanTransform {
  Matrix t;  // full_dofs x masters
  MasterSlavePartition partition;
  Matrix slave_map;           // S, slaves x masters
  Eigen::LLT<Matrix> k22_llt;
};

GuyanTransform guyan_transform(const Matrix& stiffness, const MasterSlavePartition& partition);

/// X^G = T' X T for X in {M, C, K}; exactly symmetric.
SystemMatrices reduce_system(const SystemMatrices& bridge, const GuyanTransform& transform);

/// Couples a Guyan-reduced bridge with the rail-train tracks. Sleeper
/// attachment DOFs are given in original bridge numbering and must all be
/// retained masters.
CoupledLtvSystem combine_reduced_with_train(const SystemMatrices& reduced,
                                            const GuyanTransform& transform,
                                            std::vector<CoupledLtvSystem::Track> tracks);

/// Pulls adjoints of the reduced matrices back to an adjoint of the full
/// bridge stiffness. adj_k/adj_m/adj_c are d(loss)/d(K^G, M^G, C^G); the
/// M^G and C^G terms enter only through the dependence of T on K and are
/// skipped when transform sensitivity is frozen.
Matrix reduction_stiffness_adjoint(const GuyanTransform& transform, const Matrix& mass,
                                   const Matrix& damping, const Matrix& adj_k_reduced,
                                   const Matrix& adj_m_reduced, const Matrix& adj_c_reduced,
                                   bool include_transform_sensitivity);

}  // namespace spanid
