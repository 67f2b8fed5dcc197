#include "spanid/reduction.hpp"

#include <algorithm>

namespace spanid {

namespace {
Matrix exact_symmetrize(Matrix a) {
  Matrix at = a.transpose();
  return 0.5 * (a + at);
}
}  // namespace

MasterSlavePartition MasterSlavePartition::from_masters(std::vector<int> masters,
                                                        int total_dofs) {
  std::vector<char> is_master(total_dofs, 0);
  for (int m : masters) {
    if (m < 0 || m >= total_dofs) throw InputError("master DOF index out of range");
    if (is_master[m]) throw InputError("duplicate master DOF " + std::to_string(m));
    is_master[m] = 1;
  }
  MasterSlavePartition p;
  p.masters = std::move(masters);
  for (int i = 0; i < total_dofs; ++i) {
    if (!is_master[i]) p.slaves.push_back(i);
  }
  return p;
}

int MasterSlavePartition::master_position(int dof) const {
  auto it = std::find(masters.begin(), masters.end(), dof);
  return it == masters.end() ? -1 : static_cast<int>(it - masters.begin());
}

GuyanTransform guyan_transform(const Matrix& stiffness, const MasterSlavePartition& partition) {
  const int n = static_cast<int>(stiffness.rows());
  const int nm = static_cast<int>(partition.masters.size());
  const int ns = static_cast<int>(partition.slaves.size());
  if (nm + ns != n) throw InputError("partition does not cover the stiffness matrix");

  GuyanTransform out;
  out.partition = partition;
  out.t = Matrix::Zero(n, nm);
  for (int j = 0; j < nm; ++j) out.t(partition.masters[j], j) = 1.0;

  if (ns > 0) {
    Matrix k22(ns, ns), k21(ns, nm);
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < ns; ++j) k22(i, j) = stiffness(partition.slaves[i], partition.slaves[j]);
      for (int j = 0; j < nm; ++j) k21(i, j) = stiffness(partition.slaves[i], partition.masters[j]);
    }
    out.k22_llt.compute(k22);
    if (out.k22_llt.info() != Eigen::Success) {
      throw NumericalError("Guyan reduction failed: slave-slave stiffness block is singular");
    }
    out.slave_map = out.k22_llt.solve(k21);
    for (int i = 0; i < ns; ++i) out.t.row(partition.slaves[i]) = -out.slave_map.row(i);
  } else {
    out.slave_map = Matrix::Zero(0, nm);
  }
  return out;
}

SystemMatrices reduce_system(const SystemMatrices& bridge, const GuyanTransform& transform) {
  const auto& t = transform.t;
  if (bridge.stiffness.rows() != t.rows()) {
    throw InputError("reduction transform does not match the system dimension");
  }
  SystemMatrices out;
  out.stiffness = exact_symmetrize(t.transpose() * bridge.stiffness * t);
  out.mass = exact_symmetrize(t.transpose() * bridge.mass * t);
  if (bridge.damping.rows() == t.rows()) {
    out.damping = exact_symmetrize(t.transpose() * bridge.damping * t);
  }
  return out;
}

CoupledLtvSystem combine_reduced_with_train(const SystemMatrices& reduced,
                                            const GuyanTransform& transform,
                                            std::vector<CoupledLtvSystem::Track> tracks) {
  for (auto& track : tracks) {
    for (Sleeper& s : track.layer.sleepers) {
      const int pos = transform.partition.master_position(s.bridge_dof);
      if (pos < 0) {
        throw InputError("sleeper attached to bridge DOF " + std::to_string(s.bridge_dof) +
                         " which is not a retained master");
      }
      s.bridge_dof = pos;
    }
  }
  return CoupledLtvSystem(reduced, std::move(tracks));
}

Matrix reduction_stiffness_adjoint(const GuyanTransform& transform, const Matrix& mass,
                                   const Matrix& damping, const Matrix& adj_k_reduced,
                                   const Matrix& adj_m_reduced, const Matrix& adj_c_reduced,
                                   bool include_transform_sensitivity) {
  const auto& masters = transform.partition.masters;
  const auto& slaves = transform.partition.slaves;
  const int nm = static_cast<int>(masters.size());
  const int ns = static_cast<int>(slaves.size());
  const int n = nm + ns;
  const Matrix& s = transform.slave_map;

  // Only the symmetric parts act on symmetric perturbations.
  Matrix gk = 0.5 * (adj_k_reduced + adj_k_reduced.transpose());

  // Direct congruence path: T gk T'. The dependence of T on K is stationary
  // for the stiffness itself (K T has zero slave rows), so this is exact.
  Matrix a_mm = gk;
  Matrix a_ms = -gk * s.transpose();
  Matrix a_sm = -s * gk;
  Matrix a_ss = s * gk * s.transpose();

  if (include_transform_sensitivity && ns > 0) {
    Matrix gm = 0.5 * (adj_m_reduced + adj_m_reduced.transpose());
    Matrix gc = 0.5 * (adj_c_reduced + adj_c_reduced.transpose());

    Matrix m21(ns, nm), m22(ns, ns), c21(ns, nm), c22(ns, ns);
    const bool have_c = damping.rows() == n;
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < nm; ++j) {
        m21(i, j) = mass(slaves[i], masters[j]);
        c21(i, j) = have_c ? damping(slaves[i], masters[j]) : 0.0;
      }
      for (int j = 0; j < ns; ++j) {
        m22(i, j) = mass(slaves[i], slaves[j]);
        c22(i, j) = have_c ? damping(slaves[i], slaves[j]) : 0.0;
      }
    }
    Matrix ym = m21 - m22 * s;  // slave rows of M T
    Matrix yc = c21 - c22 * s;
    Matrix w = -2.0 * (ym * gm + yc * gc);
    Matrix z = transform.k22_llt.solve(w);
    a_sm += z;
    a_ss -= z * s.transpose();
  }

  Matrix adj = Matrix::Zero(n, n);
  for (int i = 0; i < nm; ++i) {
    for (int j = 0; j < nm; ++j) adj(masters[i], masters[j]) = a_mm(i, j);
    for (int j = 0; j < ns; ++j) adj(masters[i], slaves[j]) = a_ms(i, j);
  }
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nm; ++j) adj(slaves[i], masters[j]) = a_sm(i, j);
    for (int j = 0; j < ns; ++j) adj(slaves[i], slaves[j]) = a_ss(i, j);
  }
  return adj;
}

}  // namespace spanid
