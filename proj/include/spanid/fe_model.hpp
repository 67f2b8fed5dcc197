#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "spanid/types.hpp"

namespace spanid {

struct Node {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // z ignored in 2D
  std::array<bool, 3> fixed = {false, false, false};   // per translational component
};

enum class MemberKind { kBar, kPlaneFrame, kSpaceFrame };

struct Member {
  int id = 0;
  int node_i = 0;
  int node_j = 0;
  double elastic_modulus = 0.0;  // Pa
  double area = 0.0;             // m^2
  double second_moment_y = 0.0;  // m^4; the single bending axis in 2D
  double second_moment_z = 0.0;  // m^4; 3D only
  double density = 0.0;          // kg/m^3
  MemberKind kind = MemberKind::kBar;
};

/// Full element matrices in global coordinates, including rotational DOFs
/// for frame kinds. DOF order is node i block then node j block, with
/// translations first within each block.
struct ElementMatrices {
  Matrix stiffness;
  Matrix mass;
  std::vector<int> rotational_dofs;  // local indices of rotational DOFs
};

ElementMatrices member_matrices(const Member& member, const Node& ni, const Node& nj,
                                int dim, bool lumped_mass = false);

/// Exact elimination of the given DOFs from a static stiffness relation.
/// K is condensed via the Schur complement, mass and damping by congruence
/// with T = [I; -K22^-1 K21]. Throws NumericalError if the eliminated block
/// is singular.
SystemMatrices static_condensation(const SystemMatrices& full,
                                   const std::vector<int>& eliminated_dofs);

/// T = [I; -K22^-1 K21] in permuted (kept-first) ordering, rows mapped back
/// to the original DOF order. Columns follow `kept` order.
Matrix partitioned_static_transform(const Matrix& stiffness, const std::vector<int>& kept,
                                    const std::vector<int>& eliminated);

/// C = alpha*M + beta*K matching damping ratio zeta at omega_a and omega_b.
Matrix rayleigh_damping(const Matrix& mass, const Matrix& stiffness, double zeta,
                        double omega_a, double omega_b);

/// Undamped natural frequencies in Hz, ascending, from the symmetric
/// generalized problem K phi = omega^2 M phi.
Vector natural_frequencies_hz(const Matrix& stiffness, const Matrix& mass);

struct DampingSpec {
  double zeta = 0.02;
  // Anchors: either two mode numbers (1-based) of the healthy model, or
  // explicit circular frequencies.
  int anchor_mode_lo = 1;
  int anchor_mode_hi = 2;
  std::optional<double> omega_a;  // rad/s
  std::optional<double> omega_b;
};

/// A member's stiffness and mass contribution on the free translational
/// DOFs, with element rotations statically condensed out. K(k) is assembled
/// as sum_i k_i * stiffness_i, so each contribution is constant in k.
struct MemberContribution {
  std::vector<int> dofs;  // free-DOF indices, -1 where supported
  Matrix stiffness;       // (2*dim)x(2*dim), exactly symmetric
  Matrix mass;
};

class BridgeModel {
 public:
  BridgeModel(std::vector<Node> nodes, std::vector<Member> members, int dim,
              DampingSpec damping = {}, bool lumped_mass = false);

  int dim() const { return dim_; }
  int free_dof_count() const { return free_dofs_; }
  int member_count() const { return static_cast<int>(members_.size()); }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Member>& members() const { return members_; }
  const DampingSpec& damping_spec() const { return damping_; }

  /// Free-DOF index of (node, translational component), or -1 if supported.
  int dof_index(int node_id, int component) const;

  const std::vector<MemberContribution>& contributions() const { return contributions_; }

  /// K(k) = sum_i k_i K_i on the free DOFs. Exactly symmetric.
  Matrix assemble_stiffness(const DeviationRatios& k) const;

  /// Mass on the free DOFs; independent of the deviation ratios.
  const Matrix& mass() const { return mass_; }

  /// Rayleigh damping built once from the healthy model and held fixed.
  const Matrix& baseline_damping() const { return damping_matrix_; }

  /// {mass, baseline damping, K(k)}.
  SystemMatrices system_matrices(const DeviationRatios& k) const;

  /// Full assembly including rotational DOFs (frame kinds), used as the
  /// oracle for global static condensation. Returns matrices plus the
  /// index sets of translational and rotational DOFs in that assembly.
  struct FullAssembly {
    SystemMatrices matrices;
    std::vector<int> translational_dofs;  // maps free translational dof -> full index
    std::vector<int> rotational_dofs;
  };
  FullAssembly assemble_with_rotations(const DeviationRatios& k) const;

 private:
  void validate() const;
  void build_dof_map();
  void build_contributions(bool lumped_mass);

  std::vector<Node> nodes_;
  std::vector<Member> members_;
  int dim_;
  DampingSpec damping_;
  int free_dofs_ = 0;
  std::vector<std::array<int, 3>> dof_map_;  // node -> per-component free index or -1
  std::vector<MemberContribution> contributions_;
  Matrix mass_;
  Matrix damping_matrix_;
};

/// Spec operation wrapper: stiffness from deviation ratios, mass assembled
/// once, baseline damping attached.
inline SystemMatrices assemble_global(const BridgeModel& model, const DeviationRatios& k) {
  return model.system_matrices(k);
}

}  // namespace spanid
