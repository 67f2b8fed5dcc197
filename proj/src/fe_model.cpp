#include "spanid/fe_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <queue>

#include "spanid/log.hpp"

namespace spanid {

namespace {

// Local (v1, theta1, v2, theta2) Euler-Bernoulli bending blocks.
Matrix bending_stiffness(double ei, double len) {
  Matrix k(4, 4);
  const double l2 = len * len;
  const double l3 = l2 * len;
  k << 12 / l3, 6 / l2, -12 / l3, 6 / l2,
       6 / l2, 4 / len, -6 / l2, 2 / len,
       -12 / l3, -6 / l2, 12 / l3, -6 / l2,
       6 / l2, 2 / len, -6 / l2, 4 / len;
  return ei * k;
}

Matrix bending_mass(double rho_a, double len) {
  Matrix m(4, 4);
  const double l = len;
  m << 156, 22 * l, 54, -13 * l,
       22 * l, 4 * l * l, 13 * l, -3 * l * l,
       54, 13 * l, 156, -22 * l,
       -13 * l, -3 * l * l, -22 * l, 4 * l * l;
  return (rho_a * len / 420.0) * m;
}

Matrix exact_symmetrize(Matrix a) {
  Matrix at = a.transpose();
  return 0.5 * (a + at);
}

// Local axes for a 3D member: x along the member, auxiliary = global Z
// unless the member is near-vertical.
Eigen::Matrix3d local_axes_3d(const Eigen::Vector3d& axis) {
  Eigen::Vector3d x = axis.normalized();
  Eigen::Vector3d aux = std::abs(x.dot(Eigen::Vector3d::UnitZ())) > 0.999
                            ? Eigen::Vector3d::UnitX()
                            : Eigen::Vector3d::UnitZ();
  Eigen::Vector3d y = aux.cross(x).normalized();
  Eigen::Vector3d z = x.cross(y);
  Eigen::Matrix3d r;  // local = r * global
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return r;
}

void check_member_properties(const Member& m) {
  if (m.node_i == m.node_j) {
    throw InputError("member " + std::to_string(m.id) + " connects a node to itself");
  }
  if (m.elastic_modulus <= 0 || m.area <= 0 || m.density <= 0) {
    throw InputError("member " + std::to_string(m.id) +
                     " has non-positive section or material properties");
  }
  if (m.kind != MemberKind::kBar && m.second_moment_y <= 0) {
    throw InputError("member " + std::to_string(m.id) +
                     " is a frame element but has no second moment of area");
  }
}

double member_length(const Member& m, const Node& ni, const Node& nj, int dim) {
  Eigen::Vector3d d = nj.position - ni.position;
  if (dim == 2) d.z() = 0.0;
  const double len = d.norm();
  if (!(len > 0.0)) {
    throw InputError("degenerate geometry: member " + std::to_string(m.id) +
                     " has zero length");
  }
  return len;
}

}  // namespace

namespace {

// Local element matrices plus the local->global displacement rotation.
struct LocalElement {
  Matrix stiffness;
  Matrix mass;
  Matrix lambda;                    // local = lambda * global
  std::vector<int> rotational_dofs; // local indices
};

LocalElement local_plane_frame(const Member& member, double len, double c, double s,
                               bool lumped_mass) {
  const double ea = member.elastic_modulus * member.area;
  const double rho_a = member.density * member.area;
  Matrix kl = Matrix::Zero(6, 6);
  kl(0, 0) = kl(3, 3) = ea / len;
  kl(0, 3) = kl(3, 0) = -ea / len;
  const int bend[4] = {1, 2, 4, 5};
  Matrix kb = bending_stiffness(member.elastic_modulus * member.second_moment_y, len);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) kl(bend[a], bend[b]) += kb(a, b);

  Matrix ml = Matrix::Zero(6, 6);
  if (lumped_mass) {
    const double half = rho_a * len / 2.0;
    ml(0, 0) = ml(1, 1) = ml(3, 3) = ml(4, 4) = half;
  } else {
    ml(0, 0) = ml(3, 3) = 2.0 * rho_a * len / 6.0;
    ml(0, 3) = ml(3, 0) = rho_a * len / 6.0;
    Matrix mb = bending_mass(rho_a, len);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) ml(bend[a], bend[b]) += mb(a, b);
  }

  Matrix lam = Matrix::Zero(6, 6);
  for (int nblock = 0; nblock < 2; ++nblock) {
    const int o = 3 * nblock;
    lam(o, o) = c;
    lam(o, o + 1) = s;
    lam(o + 1, o) = -s;
    lam(o + 1, o + 1) = c;
    lam(o + 2, o + 2) = 1.0;
  }
  return {std::move(kl), std::move(ml), std::move(lam), {2, 5}};
}

LocalElement local_space_frame(const Member& member, double len, const Eigen::Vector3d& d,
                               bool lumped_mass) {
  const double ea = member.elastic_modulus * member.area;
  const double rho_a = member.density * member.area;
  const double iy = member.second_moment_y;
  const double iz = member.second_moment_z > 0 ? member.second_moment_z : member.second_moment_y;
  const double jt = iy + iz;
  const double g = member.elastic_modulus / 2.6;

  Matrix kl = Matrix::Zero(12, 12);
  kl(0, 0) = kl(6, 6) = ea / len;
  kl(0, 6) = kl(6, 0) = -ea / len;
  kl(3, 3) = kl(9, 9) = g * jt / len;
  kl(3, 9) = kl(9, 3) = -g * jt / len;

  // Bending in the local x-y plane: (v, thz); x-z plane: (w, thy) with the
  // rotation sign flipped (thy = -dw/dx convention).
  const int bxy[4] = {1, 5, 7, 11};
  const int bxz[4] = {2, 4, 8, 10};
  const double sign_xz[4] = {1, -1, 1, -1};
  Matrix kb_xy = bending_stiffness(member.elastic_modulus * iz, len);
  Matrix kb_xz = bending_stiffness(member.elastic_modulus * iy, len);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      kl(bxy[a], bxy[b]) += kb_xy(a, b);
      kl(bxz[a], bxz[b]) += sign_xz[a] * sign_xz[b] * kb_xz(a, b);
    }
  }

  Matrix ml = Matrix::Zero(12, 12);
  if (lumped_mass) {
    const double half = rho_a * len / 2.0;
    for (int i : {0, 1, 2, 6, 7, 8}) ml(i, i) = half;
  } else {
    ml(0, 0) = ml(6, 6) = 2.0 * rho_a * len / 6.0;
    ml(0, 6) = ml(6, 0) = rho_a * len / 6.0;
    const double rot = member.density * jt * len / 6.0;
    ml(3, 3) = ml(9, 9) = 2.0 * rot;
    ml(3, 9) = ml(9, 3) = rot;
    Matrix mb = bending_mass(rho_a, len);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        ml(bxy[a], bxy[b]) += mb(a, b);
        ml(bxz[a], bxz[b]) += sign_xz[a] * sign_xz[b] * mb(a, b);
      }
    }
  }

  Eigen::Matrix3d r = local_axes_3d(d);
  Matrix lam = Matrix::Zero(12, 12);
  for (int block = 0; block < 4; ++block) {
    lam.block<3, 3>(3 * block, 3 * block) = r;
  }
  return {std::move(kl), std::move(ml), std::move(lam), {3, 4, 5, 9, 10, 11}};
}

}  // namespace

ElementMatrices member_matrices(const Member& member, const Node& ni, const Node& nj,
                                int dim, bool lumped_mass) {
  check_member_properties(member);
  const double len = member_length(member, ni, nj, dim);
  Eigen::Vector3d d = nj.position - ni.position;
  if (dim == 2) d.z() = 0.0;

  const double ea = member.elastic_modulus * member.area;
  const double rho_a = member.density * member.area;

  ElementMatrices out;

  if (member.kind == MemberKind::kBar) {
    // Translational DOFs only; stiffness is rank one along the axis.
    Eigen::VectorXd dir = d.head(dim) / len;
    const int n = 2 * dim;
    Matrix k = Matrix::Zero(n, n);
    Matrix block = (ea / len) * (dir * dir.transpose());
    k.topLeftCorner(dim, dim) = block;
    k.bottomRightCorner(dim, dim) = block;
    k.topRightCorner(dim, dim) = -block;
    k.bottomLeftCorner(dim, dim) = -block;

    Matrix m = Matrix::Zero(n, n);
    if (lumped_mass) {
      m.diagonal().setConstant(rho_a * len / 2.0);
    } else {
      Matrix eye = Matrix::Identity(dim, dim);
      m.topLeftCorner(dim, dim) = 2.0 * eye;
      m.bottomRightCorner(dim, dim) = 2.0 * eye;
      m.topRightCorner(dim, dim) = eye;
      m.bottomLeftCorner(dim, dim) = eye;
      m *= rho_a * len / 6.0;
    }
    out.stiffness = exact_symmetrize(std::move(k));
    out.mass = exact_symmetrize(std::move(m));
    return out;
  }

  if (member.kind == MemberKind::kPlaneFrame) {
    if (dim != 2) throw InputError("plane-frame member in a 3D model");
    LocalElement el = local_plane_frame(member, len, d.x() / len, d.y() / len, lumped_mass);
    out.stiffness = exact_symmetrize(el.lambda.transpose() * el.stiffness * el.lambda);
    out.mass = exact_symmetrize(el.lambda.transpose() * el.mass * el.lambda);
    out.rotational_dofs = el.rotational_dofs;
    return out;
  }

  // Space frame. Local DOFs: u v w thx thy thz per node. Torsional rigidity
  // uses J = Iy + Iz and G = E / 2(1+nu) with nu = 0.3, a documented
  // convention since the model format carries no torsion constant.
  if (dim != 3) throw InputError("space-frame member in a 2D model");
  LocalElement el = local_space_frame(member, len, d, lumped_mass);
  out.stiffness = exact_symmetrize(el.lambda.transpose() * el.stiffness * el.lambda);
  out.mass = exact_symmetrize(el.lambda.transpose() * el.mass * el.lambda);
  out.rotational_dofs = el.rotational_dofs;
  return out;
}

namespace {

// Submatrix by index list.
Matrix take(const Matrix& a, const std::vector<int>& idx) {
  Matrix out(idx.size(), idx.size());
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t j = 0; j < idx.size(); ++j) out(i, j) = a(idx[i], idx[j]);
  return out;
}

}  // namespace

Matrix partitioned_static_transform(const Matrix& stiffness, const std::vector<int>& kept,
                                    const std::vector<int>& eliminated) {
  const int nk = static_cast<int>(kept.size());
  const int ne = static_cast<int>(eliminated.size());
  Matrix k22(ne, ne), k21(ne, nk);
  for (int i = 0; i < ne; ++i) {
    for (int j = 0; j < ne; ++j) k22(i, j) = stiffness(eliminated[i], eliminated[j]);
    for (int j = 0; j < nk; ++j) k21(i, j) = stiffness(eliminated[i], kept[j]);
  }
  Matrix t = Matrix::Zero(stiffness.rows(), nk);
  for (int j = 0; j < nk; ++j) t(kept[j], j) = 1.0;
  if (ne > 0) {
    Eigen::FullPivLU<Matrix> lu(k22);
    if (!lu.isInvertible()) {
      throw NumericalError("static condensation is ill-posed: eliminated block is singular");
    }
    Matrix s = lu.solve(k21);
    for (int i = 0; i < ne; ++i) t.row(eliminated[i]) = -s.row(i);
  }
  return t;
}

SystemMatrices static_condensation(const SystemMatrices& full,
                                   const std::vector<int>& eliminated_dofs) {
  const int n = static_cast<int>(full.stiffness.rows());
  std::vector<char> drop(n, 0);
  for (int d : eliminated_dofs) drop.at(d) = 1;
  std::vector<int> kept;
  for (int i = 0; i < n; ++i)
    if (!drop[i]) kept.push_back(i);

  Matrix t = partitioned_static_transform(full.stiffness, kept, eliminated_dofs);
  SystemMatrices out;
  out.stiffness = exact_symmetrize(t.transpose() * full.stiffness * t);
  if (full.mass.rows() == n) out.mass = exact_symmetrize(t.transpose() * full.mass * t);
  if (full.damping.rows() == n) out.damping = exact_symmetrize(t.transpose() * full.damping * t);
  return out;
}

Matrix rayleigh_damping(const Matrix& mass, const Matrix& stiffness, double zeta,
                        double omega_a, double omega_b) {
  if (zeta < 0) throw InputError("rayleigh damping: negative damping ratio");
  if (zeta == 0.0) return Matrix::Zero(mass.rows(), mass.cols());
  if (!(omega_a > 0) || !(omega_b > omega_a)) {
    throw NumericalError("rayleigh damping: anchors must satisfy 0 < omega_a < omega_b");
  }
  const double alpha = 2.0 * zeta * omega_a * omega_b / (omega_a + omega_b);
  const double beta = 2.0 * zeta / (omega_a + omega_b);
  return alpha * mass + beta * stiffness;
}

Vector natural_frequencies_hz(const Matrix& stiffness, const Matrix& mass) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(stiffness, mass,
                                                          Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("generalized eigenvalue solve failed");
  }
  Vector freqs = solver.eigenvalues();
  for (Eigen::Index i = 0; i < freqs.size(); ++i) {
    freqs[i] = std::sqrt(std::max(freqs[i], 0.0)) / (2.0 * M_PI);
  }
  return freqs;
}

BridgeModel::BridgeModel(std::vector<Node> nodes, std::vector<Member> members, int dim,
                         DampingSpec damping, bool lumped_mass)
    : nodes_(std::move(nodes)), members_(std::move(members)), dim_(dim), damping_(damping) {
  validate();
  build_dof_map();
  build_contributions(lumped_mass);

  mass_ = Matrix::Zero(free_dofs_, free_dofs_);
  for (const auto& c : contributions_) {
    const int n = static_cast<int>(c.dofs.size());
    for (int a = 0; a < n; ++a) {
      if (c.dofs[a] < 0) continue;
      for (int b = 0; b < n; ++b) {
        if (c.dofs[b] < 0) continue;
        mass_(c.dofs[a], c.dofs[b]) += c.mass(a, b);
      }
    }
  }

  Matrix k_healthy = assemble_stiffness(DeviationRatios::healthy(member_count()));
  Eigen::LLT<Matrix> llt(k_healthy);
  if (llt.info() != Eigen::Success) {
    throw InputError(
        "stiffness is not positive definite after supports; the support set does not "
        "remove all rigid-body modes");
  }

  if (damping_.zeta == 0.0) {
    damping_matrix_ = Matrix::Zero(free_dofs_, free_dofs_);
    return;
  }
  double wa, wb;
  if (damping_.omega_a && damping_.omega_b) {
    wa = *damping_.omega_a;
    wb = *damping_.omega_b;
  } else {
    Vector freqs = natural_frequencies_hz(k_healthy, mass_);
    int lo = damping_.anchor_mode_lo - 1;
    int hi = damping_.anchor_mode_hi - 1;
    if (lo < 0 || hi >= freqs.size() || lo >= hi) {
      throw InputError("damping anchor modes out of range");
    }
    wa = 2.0 * M_PI * freqs[lo];
    wb = 2.0 * M_PI * freqs[hi];
    // Advance past repeated frequencies (symmetric structures).
    while (hi + 1 < freqs.size() && wb <= wa * (1.0 + 1e-9)) {
      ++hi;
      wb = 2.0 * M_PI * freqs[hi];
    }
  }
  damping_matrix_ = rayleigh_damping(mass_, k_healthy, damping_.zeta, wa, wb);
  log::debug("baseline Rayleigh damping anchored at " + std::to_string(wa / (2 * M_PI)) +
             " Hz and " + std::to_string(wb / (2 * M_PI)) + " Hz");
}

void BridgeModel::validate() const {
  if (dim_ != 2 && dim_ != 3) throw InputError("model dimension must be 2 or 3");
  if (nodes_.empty() || members_.empty()) throw InputError("model has no nodes or members");
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<int>(i)) {
      throw InputError("node ids must be unique and contiguous from 0");
    }
  }
  for (size_t i = 0; i < members_.size(); ++i) {
    const Member& m = members_[i];
    if (m.id != static_cast<int>(i)) {
      throw InputError("member ids must be unique and contiguous from 0");
    }
    if (m.node_i < 0 || m.node_i >= static_cast<int>(nodes_.size()) || m.node_j < 0 ||
        m.node_j >= static_cast<int>(nodes_.size())) {
      throw InputError("member " + std::to_string(m.id) + " references an unknown node");
    }
    check_member_properties(m);
    member_length(m, nodes_[m.node_i], nodes_[m.node_j], dim_);
  }

  // Connectivity: single connected component.
  std::vector<char> seen(nodes_.size(), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  while (!frontier.empty()) {
    const int at = frontier.front();
    frontier.pop();
    for (const Member& m : members_) {
      const int other = m.node_i == at ? m.node_j : (m.node_j == at ? m.node_i : -1);
      if (other >= 0 && !seen[other]) {
        seen[other] = 1;
        frontier.push(other);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw InputError("model connectivity graph is not a single connected component");
  }
}

void BridgeModel::build_dof_map() {
  dof_map_.assign(nodes_.size(), {-1, -1, -1});
  int next = 0;
  for (const Node& node : nodes_) {
    for (int c = 0; c < dim_; ++c) {
      if (!node.fixed[c]) dof_map_[node.id][c] = next++;
    }
  }
  free_dofs_ = next;
  if (free_dofs_ == 0) throw InputError("model has no free DOFs");
}

void BridgeModel::build_contributions(bool lumped_mass) {
  contributions_.reserve(members_.size());
  for (const Member& m : members_) {
    const Node& ni = nodes_[m.node_i];
    const Node& nj = nodes_[m.node_j];
    const double len = (dim_ == 2 ? Eigen::Vector3d(nj.position.x() - ni.position.x(),
                                                    nj.position.y() - ni.position.y(), 0.0)
                                  : (nj.position - ni.position))
                           .norm();
    Eigen::Vector3d d = nj.position - ni.position;
    if (dim_ == 2) d.z() = 0.0;

    // Element rotations are condensed out in local coordinates so that the
    // global model lives on translational DOFs and K(k) stays linear in k.
    // The condensation runs on the local matrices where the bending blocks
    // are regular; the torsion pair of a space frame has no translational
    // coupling and is dropped together with its rotary inertia.
    MemberContribution contrib;
    if (m.kind == MemberKind::kBar) {
      ElementMatrices bar = member_matrices(m, ni, nj, dim_, lumped_mass);
      contrib.stiffness = std::move(bar.stiffness);
      contrib.mass = std::move(bar.mass);
    } else if (m.kind == MemberKind::kPlaneFrame) {
      check_member_properties(m);
      LocalElement el = local_plane_frame(m, len, d.x() / len, d.y() / len, lumped_mass);
      SystemMatrices pre;
      pre.stiffness = std::move(el.stiffness);
      pre.mass = std::move(el.mass);
      SystemMatrices post = static_condensation(pre, el.rotational_dofs);
      // Kept local order: u1 v1 u2 v2; rotate translations to global.
      Matrix lam_t = Matrix::Zero(4, 4);
      const double c = d.x() / len, s = d.y() / len;
      for (int b = 0; b < 2; ++b) {
        lam_t(2 * b, 2 * b) = c;
        lam_t(2 * b, 2 * b + 1) = s;
        lam_t(2 * b + 1, 2 * b) = -s;
        lam_t(2 * b + 1, 2 * b + 1) = c;
      }
      contrib.stiffness = exact_symmetrize(lam_t.transpose() * post.stiffness * lam_t);
      contrib.mass = exact_symmetrize(lam_t.transpose() * post.mass * lam_t);
    } else {
      check_member_properties(m);
      LocalElement el = local_space_frame(m, len, d, lumped_mass);
      SystemMatrices pre;
      pre.stiffness = std::move(el.stiffness);
      pre.mass = std::move(el.mass);
      // Bending rotations only; kept order u1 v1 w1 thx1 u2 v2 w2 thx2.
      SystemMatrices post = static_condensation(pre, {4, 5, 10, 11});
      const std::vector<int> translations = {0, 1, 2, 4, 5, 6};
      Matrix k_loc = take(post.stiffness, translations);
      Matrix m_loc = take(post.mass, translations);
      Eigen::Matrix3d r = local_axes_3d(d);
      Matrix lam_t = Matrix::Zero(6, 6);
      lam_t.block<3, 3>(0, 0) = r;
      lam_t.block<3, 3>(3, 3) = r;
      contrib.stiffness = exact_symmetrize(lam_t.transpose() * k_loc * lam_t);
      contrib.mass = exact_symmetrize(lam_t.transpose() * m_loc * lam_t);
    }

    contrib.dofs.resize(2 * dim_);
    for (int c = 0; c < dim_; ++c) {
      contrib.dofs[c] = dof_map_[m.node_i][c];
      contrib.dofs[dim_ + c] = dof_map_[m.node_j][c];
    }
    contributions_.push_back(std::move(contrib));
  }
}

int BridgeModel::dof_index(int node_id, int component) const {
  return dof_map_.at(node_id).at(component);
}

Matrix BridgeModel::assemble_stiffness(const DeviationRatios& k) const {
  if (k.size() != member_count()) {
    throw InputError("deviation ratio vector length " + std::to_string(k.size()) +
                     " does not match member count " + std::to_string(member_count()));
  }
  k.validate();
  Matrix out = Matrix::Zero(free_dofs_, free_dofs_);
  for (int i = 0; i < member_count(); ++i) {
    const MemberContribution& c = contributions_[i];
    const double scale = k[i];
    const int n = static_cast<int>(c.dofs.size());
    for (int a = 0; a < n; ++a) {
      if (c.dofs[a] < 0) continue;
      for (int b = 0; b < n; ++b) {
        if (c.dofs[b] < 0) continue;
        out(c.dofs[a], c.dofs[b]) += scale * c.stiffness(a, b);
      }
    }
  }
  return out;
}

SystemMatrices BridgeModel::system_matrices(const DeviationRatios& k) const {
  SystemMatrices out;
  out.stiffness = assemble_stiffness(k);
  out.mass = mass_;
  out.damping = damping_matrix_;
  return out;
}

BridgeModel::FullAssembly BridgeModel::assemble_with_rotations(const DeviationRatios& k) const {
  if (k.size() != member_count()) throw InputError("deviation ratio length mismatch");

  // Rotational DOFs exist only at nodes touched by frame members.
  const int rot_per_node = dim_ == 2 ? 1 : 3;
  std::vector<char> has_rotation(nodes_.size(), 0);
  for (const Member& m : members_) {
    if (m.kind != MemberKind::kBar) {
      has_rotation[m.node_i] = 1;
      has_rotation[m.node_j] = 1;
    }
  }

  std::vector<std::array<int, 6>> map(nodes_.size(), {-1, -1, -1, -1, -1, -1});
  int next = 0;
  std::vector<int> translational, rotational;
  for (const Node& node : nodes_) {
    for (int c = 0; c < dim_; ++c) {
      if (!node.fixed[c]) {
        map[node.id][c] = next;
        translational.push_back(next);
        ++next;
      }
    }
    if (has_rotation[node.id]) {
      for (int r = 0; r < rot_per_node; ++r) {
        map[node.id][3 + r] = next;
        rotational.push_back(next);
        ++next;
      }
    }
  }

  FullAssembly out;
  out.matrices.stiffness = Matrix::Zero(next, next);
  out.matrices.mass = Matrix::Zero(next, next);
  out.matrices.damping = Matrix::Zero(next, next);
  out.translational_dofs = std::move(translational);
  out.rotational_dofs = std::move(rotational);

  for (int i = 0; i < member_count(); ++i) {
    const Member& m = members_[i];
    ElementMatrices full =
        member_matrices(m, nodes_[m.node_i], nodes_[m.node_j], dim_, false);

    // Element-local DOF -> full-assembly index.
    std::vector<int> loc;
    for (int node : {m.node_i, m.node_j}) {
      for (int c = 0; c < dim_; ++c) loc.push_back(map[node][c]);
      if (m.kind != MemberKind::kBar) {
        for (int r = 0; r < rot_per_node; ++r) loc.push_back(map[node][3 + r]);
      }
    }

    const double scale = k[i];
    const int n = static_cast<int>(loc.size());
    for (int a = 0; a < n; ++a) {
      if (loc[a] < 0) continue;
      for (int b = 0; b < n; ++b) {
        if (loc[b] < 0) continue;
        out.matrices.stiffness(loc[a], loc[b]) += scale * full.stiffness(a, b);
        out.matrices.mass(loc[a], loc[b]) += full.mass(a, b);
      }
    }
  }
  return out;
}

}  // namespace spanid
