#include "spanid/coupling.hpp"

#include <algorithm>
#include <cmath>

namespace spanid {

std::pair<Matrix, Matrix> rail_modal_matrices(const RailModel& rail) {
  rail.validate();
  Matrix m = Matrix::Zero(rail.n_modes, rail.n_modes);
  Matrix k = Matrix::Zero(rail.n_modes, rail.n_modes);
  const double half_len = rail.length / 2.0;
  for (int i = 0; i < rail.n_modes; ++i) {
    const int mode = i + 1;
    const double wavenumber = mode * M_PI / rail.length;
    m(i, i) = rail.mass_per_length * half_len;
    k(i, i) = rail.flexural_rigidity * std::pow(wavenumber, 4) * half_len;
  }
  return {m, k};
}

void TrainConfig::validate() const {
  if (velocity_mps <= 0) throw InputError("train velocity must be positive");
  double prev = -1.0;
  for (const Axle& a : axles) {
    if (a.mass_kg < 0 || a.load_n < 0) throw InputError("axle mass and load must be >= 0");
    if (a.offset_m <= prev && prev >= 0.0) {
      throw InputError("axle offsets must be strictly increasing");
    }
    if (a.offset_m < 0) throw InputError("axle offsets must be >= 0");
    prev = a.offset_m;
  }
}

Matrix time_varying_mass(const TrainConfig& train, const RailModel& rail, double t) {
  Matrix dm = Matrix::Zero(rail.n_modes, rail.n_modes);
  Vector phi(rail.n_modes);
  for (size_t i = 0; i < train.axles.size(); ++i) {
    if (train.axles[i].mass_kg == 0.0) continue;
    const double x = train.axle_position(static_cast<int>(i), t);
    if (x < 0.0 || x > rail.length) continue;
    for (int k = 0; k < rail.n_modes; ++k) phi[k] = rail.mode_shape(k + 1, x);
    dm.noalias() += train.axles[i].mass_kg * (phi * phi.transpose());
  }
  return dm;
}

Vector moving_force(const TrainConfig& train, const RailModel& rail, double t) {
  Vector p = Vector::Zero(rail.n_modes);
  for (size_t i = 0; i < train.axles.size(); ++i) {
    if (train.axles[i].load_n == 0.0) continue;
    const double x = train.axle_position(static_cast<int>(i), t);
    if (x < 0.0 || x > rail.length) continue;
    for (int k = 0; k < rail.n_modes; ++k) {
      p[k] -= train.axles[i].load_n * rail.mode_shape(k + 1, x);
    }
  }
  return p;
}

CoupledLtvSystem::CoupledLtvSystem(const SystemMatrices& bridge, std::vector<Track> tracks)
    : tracks_(std::move(tracks)) {
  const int m = bridge.dofs();
  rail_dofs_ = 0;
  for (const Track& tr : tracks_) {
    tr.rail.validate();
    tr.train.validate();
    rail_dofs_ += tr.rail.n_modes;
  }
  const int n = rail_dofs_ + m;
  mass0_ = Matrix::Zero(n, n);
  damping_ = Matrix::Zero(n, n);
  stiffness_ = Matrix::Zero(n, n);

  mass0_.bottomRightCorner(m, m) = bridge.mass;
  if (bridge.damping.rows() == m) damping_.bottomRightCorner(m, m) = bridge.damping;
  stiffness_.bottomRightCorner(m, m) = bridge.stiffness;

  int off = 0;
  for (const Track& tr : tracks_) {
    const int nr = tr.rail.n_modes;
    auto [mr, kr] = rail_modal_matrices(tr.rail);
    mass0_.block(off, off, nr, nr) = mr;
    stiffness_.block(off, off, nr, nr) += kr;

    for (const Sleeper& s : tr.layer.sleepers) {
      if (s.x < 0 || s.x > tr.rail.length) {
        throw InputError("sleeper position outside the rail span");
      }
      if (s.stiffness < 0 || s.damping < 0) {
        throw InputError("sleeper stiffness and damping must be >= 0");
      }
      const int dof = s.bridge_dof;
      if (dof < 0 || dof >= m) {
        throw InputError("sleeper attaches to a fixed or unknown bridge DOF");
      }
      Vector phi(nr);
      for (int k = 0; k < nr; ++k) phi[k] = tr.rail.mode_shape(k + 1, s.x);

      // Both triangles are written from the same product so the blocks stay
      // symmetric to the last bit.
      const int gdof = rail_dofs_ + dof;
      for (int j = 0; j < nr; ++j) {
        for (int k = j; k < nr; ++k) {
          const double kk = s.stiffness * (phi[j] * phi[k]);
          const double cc = s.damping * (phi[j] * phi[k]);
          stiffness_(off + j, off + k) += kk;
          damping_(off + j, off + k) += cc;
          if (k != j) {
            stiffness_(off + k, off + j) += kk;
            damping_(off + k, off + j) += cc;
          }
        }
        const double kc = s.stiffness * phi[j];
        const double cc = s.damping * phi[j];
        stiffness_(off + j, gdof) -= kc;
        stiffness_(gdof, off + j) -= kc;
        damping_(off + j, gdof) -= cc;
        damping_(gdof, off + j) -= cc;
      }
      stiffness_(gdof, gdof) += s.stiffness;
      damping_(gdof, gdof) += s.damping;
    }
    off += nr;
  }

  Eigen::LLT<Matrix> llt(stiffness_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("coupled stiffness is not positive definite");
  }
}

CoupledLtvSystem CoupledLtvSystem::from_blocks(Matrix mass0, Matrix damping, Matrix stiffness,
                                               int rail_dofs,
                                               std::function<Vector(double)> force,
                                               std::function<Matrix(double)> rail_mass_delta) {
  CoupledLtvSystem sys;
  sys.rail_dofs_ = rail_dofs;
  sys.mass0_ = std::move(mass0);
  sys.damping_ = std::move(damping);
  sys.stiffness_ = std::move(stiffness);
  sys.force_override_ = std::move(force);
  sys.delta_override_ = std::move(rail_mass_delta);
  return sys;
}

Vector CoupledLtvSystem::force(double t) const {
  if (force_override_) return force_override_(t);
  Vector p = Vector::Zero(size());
  int off = 0;
  for (const Track& tr : tracks_) {
    p.segment(off, tr.rail.n_modes) = moving_force(tr.train, tr.rail, t);
    off += tr.rail.n_modes;
  }
  return p;
}

Matrix CoupledLtvSystem::rail_mass_delta(double t) const {
  if (delta_override_) return delta_override_(t);
  Matrix dm = Matrix::Zero(rail_dofs_, rail_dofs_);
  int off = 0;
  for (const Track& tr : tracks_) {
    dm.block(off, off, tr.rail.n_modes, tr.rail.n_modes) =
        time_varying_mass(tr.train, tr.rail, t);
    off += tr.rail.n_modes;
  }
  return dm;
}

Matrix CoupledLtvSystem::mass_total(double t) const {
  Matrix m = mass0_;
  if (rail_dofs_ > 0) {
    m.topLeftCorner(rail_dofs_, rail_dofs_) += rail_mass_delta(t);
  }
  return m;
}

double CoupledLtvSystem::crossing_end_time() const {
  double end = 0.0;
  for (const Track& tr : tracks_) {
    if (!tr.train.axles.empty()) {
      end = std::max(end, tr.train.exit_time(tr.rail.length));
    }
  }
  return end;
}

CoupledLtvSystem couple_systems(const SystemMatrices& bridge, const RailModel& rail,
                                const InteractionLayer& layer, const TrainConfig& train) {
  std::vector<CoupledLtvSystem::Track> tracks;
  tracks.push_back({rail, layer, train});
  return CoupledLtvSystem(bridge, std::move(tracks));
}

MassCache::MassCache(const CoupledLtvSystem& system, std::vector<double> timestamps)
    : rail_dofs_(system.rail_dof_count()), bridge_dofs_(system.bridge_dof_count()) {
  timestamps_ = std::make_shared<const std::vector<double>>(std::move(timestamps));
  if (bridge_dofs_ > 0) {
    bridge_factor_.compute(system.mass_constant().bottomRightCorner(bridge_dofs_, bridge_dofs_));
    if (bridge_factor_.info() != Eigen::Success) {
      throw NumericalError("bridge mass is not positive definite");
    }
  }
  auto factors = std::make_shared<std::vector<Eigen::LLT<Matrix>>>();
  factors->reserve(timestamps_->size());
  const Matrix rail0 = system.mass_constant().topLeftCorner(rail_dofs_, rail_dofs_);
  for (double t : *timestamps_) {
    Eigen::LLT<Matrix> llt;
    if (rail_dofs_ > 0) {
      llt.compute(rail0 + system.rail_mass_delta(t));
      if (llt.info() != Eigen::Success) {
        throw NumericalError("mass matrix lost positive definiteness at t=" +
                             std::to_string(t) + " (physical inconsistency)");
      }
    }
    factors->push_back(std::move(llt));
  }
  rail_factors_ = std::move(factors);
  if (timestamps_->size() >= 2) {
    grid_t0_ = timestamps_->front();
    grid_dt_ = (*timestamps_)[1] - timestamps_->front();
  } else if (timestamps_->size() == 1) {
    grid_t0_ = timestamps_->front();
    grid_dt_ = 0.0;
  }
}

MassCache MassCache::with_bridge_mass(const Matrix& bridge_mass) const {
  MassCache out = *this;
  out.bridge_dofs_ = static_cast<int>(bridge_mass.rows());
  out.bridge_factor_.compute(bridge_mass);
  if (out.bridge_factor_.info() != Eigen::Success) {
    throw NumericalError("bridge mass is not positive definite");
  }
  return out;
}

Vector MassCache::solve(int index, const Vector& rhs) const {
  Vector out(rhs.size());
  if (rail_dofs_ > 0) {
    out.head(rail_dofs_) = rail_factors_->at(index).solve(rhs.head(rail_dofs_));
  }
  if (bridge_dofs_ > 0) {
    out.tail(bridge_dofs_) = bridge_factor_.solve(rhs.tail(bridge_dofs_));
  }
  return out;
}

std::optional<int> MassCache::find(double t) const {
  if (!timestamps_ || timestamps_->empty()) return std::nullopt;
  if (grid_dt_ <= 0.0) {
    return std::abs(t - grid_t0_) < 1e-12 ? std::optional<int>(0) : std::nullopt;
  }
  const double pos = (t - grid_t0_) / grid_dt_;
  const int idx = static_cast<int>(std::llround(pos));
  if (idx < 0 || idx >= size()) return std::nullopt;
  if (std::abs(pos - idx) > 1e-6) return std::nullopt;
  return idx;
}

Vector first_order_rhs(const CoupledLtvSystem& system, double t, const Vector& state,
                       const MassCache* cache, bool strict_cache) {
  const int n = system.size();
  if (state.size() != 2 * n) throw InputError("state size does not match the system");
  const auto u = state.head(n);
  const auto v = state.tail(n);
  Vector rhs = system.force(t);
  rhs.noalias() -= system.damping() * v;
  rhs.noalias() -= system.stiffness() * u;

  Vector accel;
  std::optional<int> idx = cache ? cache->find(t) : std::nullopt;
  if (idx) {
    accel = cache->solve(*idx, rhs);
  } else {
    if (strict_cache) {
      throw InputError("mass cache miss at t=" + std::to_string(t) + " in strict mode");
    }
    Eigen::LLT<Matrix> llt(system.mass_total(t));
    if (llt.info() != Eigen::Success) {
      throw NumericalError("mass matrix not positive definite at t=" + std::to_string(t));
    }
    accel = llt.solve(rhs);
  }

  Vector out(2 * n);
  out.head(n) = v;
  out.tail(n) = accel;
  return out;
}

}  // namespace spanid
