#include "spanid/gradients.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

#include "spanid/log.hpp"

namespace spanid {

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

// Accumulated adjoints of the k-dependent blocks of the coupled system.
struct AdjointAccum {
  Matrix k;  // bridge-partition block of d(loss)/dK_total
  Matrix m;  // only tracked when the Guyan transform depends on k
  Matrix c;
  bool track_mass_damping = false;

  AdjointAccum(int bridge_dofs, bool full) : track_mass_damping(full) {
    k = Matrix::Zero(bridge_dofs, bridge_dofs);
    if (full) {
      m = Matrix::Zero(bridge_dofs, bridge_dofs);
      c = Matrix::Zero(bridge_dofs, bridge_dofs);
    }
  }
};

}  // namespace

Vector scale_gradients(const Vector& gradient, const ScalingProfile& profile) {
  if (gradient.size() != profile.s.size()) {
    throw InputError("gradient scaling profile length mismatch");
  }
  profile.validate();
  return gradient.cwiseProduct(profile.s);
}

int SimulationPlan::batch_start(int batch) const {
  const int base = steps / batch_count;
  const int rem = steps % batch_count;
  return batch * base + std::min(batch, rem);
}

int SimulationPlan::batch_length(int batch) const {
  const int base = steps / batch_count;
  const int rem = steps % batch_count;
  return base + (batch < rem ? 1 : 0);
}

PlanSystem build_plan_system(const SimulationPlan& plan, const DeviationRatios& k) {
  PlanSystem out;
  Matrix k_bridge = plan.model->assemble_stiffness(k);
  if (plan.reduce) {
    out.guyan = guyan_transform(k_bridge, plan.partition);
    SystemMatrices full;
    full.stiffness = std::move(k_bridge);
    full.mass = plan.model->mass();
    full.damping = plan.model->baseline_damping();
    SystemMatrices reduced = reduce_system(full, *out.guyan);
    out.bridge_dofs = plan.partition.master_count();
    out.system.emplace(combine_reduced_with_train(reduced, *out.guyan, plan.tracks));
  } else {
    SystemMatrices mats;
    mats.stiffness = std::move(k_bridge);
    mats.mass = plan.model->mass();
    mats.damping = plan.model->baseline_damping();
    out.bridge_dofs = plan.model->free_dof_count();
    out.system.emplace(mats, plan.tracks);
  }
  return out;
}

Trajectory simulate_plan(const SimulationPlan& plan, const DeviationRatios& k,
                         bool want_accelerations) {
  PlanSystem built = build_plan_system(plan, k);
  SimulateOptions options;
  options.scheme = plan.scheme;
  options.dt = plan.dt;
  options.duration = plan.steps * plan.dt;
  options.want_accelerations = want_accelerations;
  return simulate(*built.system, options);
}

std::vector<int> observed_state_offsets(const SimulationPlan& plan,
                                        const std::vector<int>& observed_dofs) {
  const int m = plan.model->free_dof_count();
  std::vector<int> offsets;
  offsets.reserve(observed_dofs.size());
  for (int dof : observed_dofs) {
    if (dof < 0 || dof >= m) throw InputError("observed DOF out of range");
    if (plan.reduce) {
      const int pos = plan.partition.master_position(dof);
      if (pos < 0) {
        throw InputError("observed DOF " + std::to_string(dof) +
                         " is not a retained master DOF");
      }
      offsets.push_back(pos);
    } else {
      offsets.push_back(dof);
    }
  }
  return offsets;
}

struct TrajectoryEngine::BatchSystem {
  std::optional<GuyanTransform> guyan;
  std::optional<CoupledLtvSystem> system;
  std::optional<RadauWorkspace> radau;
  MassCache cache;
  int bridge_dofs = 0;
};

TrajectoryEngine::TrajectoryEngine(SimulationPlan plan, LossConfig loss)
    : plan_(std::move(plan)), loss_(std::move(loss)) {
  if (plan_.model == nullptr) throw InputError("simulation plan has no bridge model");
  if (!(plan_.dt > 0)) throw InputError("simulation plan needs dt > 0");
  if (plan_.steps < 1) throw InputError("simulation plan needs at least one step");
  if (plan_.batch_count < 1 || plan_.batch_count > plan_.steps) {
    throw InputError("batch count must be between 1 and the step count");
  }
  if (plan_.tracks.empty()) throw InputError("simulation plan has no tracks");

  const int m = plan_.model->free_dof_count();
  const int bridge = plan_.reduce ? plan_.partition.master_count() : m;
  if (plan_.reduce && static_cast<int>(plan_.partition.masters.size() +
                                       plan_.partition.slaves.size()) != m) {
    throw InputError("master/slave partition does not cover the bridge DOFs");
  }
  rail_dofs_ = 0;
  for (const auto& tr : plan_.tracks) rail_dofs_ += tr.rail.n_modes;
  system_size_ = rail_dofs_ + bridge;

  if (loss_.observed_dofs.empty()) throw InputError("no observed DOFs configured");
  obs_offset_ = observed_state_offsets(plan_, loss_.observed_dofs);

  if (plan_.scheme == Scheme::kRk4) {
    CoupledLtvSystem baseline(
        plan_.model->system_matrices(DeviationRatios::healthy(plan_.model->member_count())),
        plan_.tracks);
    base_cache_ = MassCache(baseline,
                            simulation_time_grid(Scheme::kRk4, plan_.dt, plan_.steps));
  }
}

std::unique_ptr<TrajectoryEngine::BatchSystem> TrajectoryEngine::build_system(
    const DeviationRatios& k) const {
  auto out = std::make_unique<BatchSystem>();
  PlanSystem built = build_plan_system(plan_, k);
  out->guyan = std::move(built.guyan);
  out->system = std::move(built.system);
  out->bridge_dofs = built.bridge_dofs;
  if (plan_.scheme == Scheme::kRk4) {
    out->cache = plan_.reduce
                     ? base_cache_.with_bridge_mass(out->system->mass_constant().bottomRightCorner(
                           out->bridge_dofs, out->bridge_dofs))
                     : base_cache_;
  } else {
    out->radau.emplace(*out->system, plan_.dt);
  }
  return out;
}

namespace {

// One stage of the reversed RK-4 update: w = M(ts)^-1 mu_v, y = J(ts)' mu,
// with the parameter adjoints picked up along the way.
void rk4_stage_reverse(const CoupledLtvSystem& sys, const MassCache& cache, double ts,
                       const Vector& x_stage, const Vector& slope, const Vector& mu,
                       int rail, AdjointAccum& acc, Vector& lam_accum, Vector* prev_mu,
                       double prev_coeff) {
  const int n = sys.size();
  const int nb = static_cast<int>(acc.k.rows());
  auto idx = cache.find(ts);
  if (!idx) throw InputError("mass cache does not cover the stage time");
  Vector w = cache.solve(*idx, mu.tail(n));

  Vector y(2 * n);
  y.head(n) = -(sys.stiffness() * w);
  y.tail(n) = mu.head(n) - sys.damping() * w;

  const auto w_br = w.segment(rail, nb);
  acc.k.noalias() -= w_br * x_stage.segment(rail, nb).transpose();
  if (acc.track_mass_damping) {
    acc.c.noalias() -= w_br * x_stage.segment(n + rail, nb).transpose();
    acc.m.noalias() -= w_br * slope.segment(n + rail, nb).transpose();
  }
  lam_accum += y;
  if (prev_mu) *prev_mu += prev_coeff * y;
}

void rk4_step_adjoint(const CoupledLtvSystem& sys, const MassCache& cache, double t, double dt,
                      const Vector& x_n, int rail, Vector& lam, AdjointAccum& acc) {
  // Recompute the forward stages of this step.
  Vector k1 = first_order_rhs(sys, t, x_n, &cache);
  Vector x2 = x_n + (dt / 2) * k1;
  Vector k2 = first_order_rhs(sys, t + dt / 2, x2, &cache);
  Vector x3 = x_n + (dt / 2) * k2;
  Vector k3 = first_order_rhs(sys, t + dt / 2, x3, &cache);
  Vector x4 = x_n + dt * k3;
  Vector k4 = first_order_rhs(sys, t + dt, x4, &cache);

  Vector mu1 = (dt / 6.0) * lam;
  Vector mu2 = (dt / 3.0) * lam;
  Vector mu3 = (dt / 3.0) * lam;
  Vector mu4 = (dt / 6.0) * lam;

  Vector lam_accum = Vector::Zero(lam.size());
  rk4_stage_reverse(sys, cache, t + dt, x4, k4, mu4, rail, acc, lam_accum, &mu3, dt);
  rk4_stage_reverse(sys, cache, t + dt / 2, x3, k3, mu3, rail, acc, lam_accum, &mu2, dt / 2);
  rk4_stage_reverse(sys, cache, t + dt / 2, x2, k2, mu2, rail, acc, lam_accum, &mu1, dt / 2);
  rk4_stage_reverse(sys, cache, t, x_n, k1, mu1, rail, acc, lam_accum, nullptr, 0.0);
  lam += lam_accum;
}

void radau_step_adjoint(const CoupledLtvSystem& sys, const RadauWorkspace& ws, double t,
                        double dt, const Vector& x_n, const Matrix& stages, int rail,
                        Vector& lam, AdjointAccum& acc) {
  const int n = sys.size();
  const int nb = static_cast<int>(acc.k.rows());
  const Vector lam_u = lam.head(n);
  const Vector lam_v = lam.tail(n);

  Vector nu(2 * n);
  nu.head(n) = (0.5 * dt * dt) * lam_u + (dt * RadauTableau::b[0]) * lam_v;
  nu.tail(n) = (dt * RadauTableau::b[1]) * lam_v;
  Vector psi = ws.solve_transposed(t, nu);
  const Vector psi1 = psi.head(n);
  const Vector psi2 = psi.tail(n);

  double alpha[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      alpha[i][j] = RadauTableau::a[i][0] * RadauTableau::a[0][j] +
                    RadauTableau::a[i][1] * RadauTableau::a[1][j];
    }
  }

  const auto p1 = psi1.segment(rail, nb);
  const auto p2 = psi2.segment(rail, nb);
  const auto w1 = stages.col(0).segment(rail, nb);
  const auto w2 = stages.col(1).segment(rail, nb);
  const auto u_br = x_n.segment(rail, nb);
  const auto v_br = x_n.segment(n + rail, nb);

  const double dt2 = dt * dt;
  acc.k.noalias() -= dt2 * alpha[0][0] * (p1 * w1.transpose());
  acc.k.noalias() -= dt2 * alpha[0][1] * (p1 * w2.transpose());
  acc.k.noalias() -= dt2 * alpha[1][0] * (p2 * w1.transpose());
  acc.k.noalias() -= dt2 * alpha[1][1] * (p2 * w2.transpose());
  Vector sum_psi_br = p1 + p2;
  Vector c_psi_br = RadauTableau::c[0] * p1 + RadauTableau::c[1] * p2;
  acc.k.noalias() -= sum_psi_br * u_br.transpose();
  acc.k.noalias() -= dt * (c_psi_br * v_br.transpose());
  if (acc.track_mass_damping) {
    acc.m.noalias() -= p1 * w1.transpose();
    acc.m.noalias() -= p2 * w2.transpose();
    acc.c.noalias() -= dt * RadauTableau::a[0][0] * (p1 * w1.transpose());
    acc.c.noalias() -= dt * RadauTableau::a[0][1] * (p1 * w2.transpose());
    acc.c.noalias() -= dt * RadauTableau::a[1][0] * (p2 * w1.transpose());
    acc.c.noalias() -= dt * RadauTableau::a[1][1] * (p2 * w2.transpose());
    acc.c.noalias() -= sum_psi_br * v_br.transpose();
  }

  Vector sum_psi = psi1 + psi2;
  Vector c_psi = RadauTableau::c[0] * psi1 + RadauTableau::c[1] * psi2;
  Vector k_sum = sys.stiffness() * sum_psi;
  Vector c_sum = sys.damping() * sum_psi;
  Vector k_c = sys.stiffness() * c_psi;

  lam.head(n) = lam_u - k_sum;
  lam.tail(n) = dt * lam_u + lam_v - c_sum - dt * k_c;
}

// Batch-local acceleration estimate from a velocity series: central inside,
// one-sided at the trailing edge; row r of the result corresponds to
// velocity row r (predictions start at row 1).
Matrix fd_acceleration(const Matrix& vel, double dt) {
  const int rows = static_cast<int>(vel.rows());  // len + 1
  const int len = rows - 1;
  Matrix acc(len, vel.cols());
  for (int r = 1; r <= len; ++r) {
    if (r < len) {
      acc.row(r - 1) = (vel.row(r + 1) - vel.row(r - 1)) / (2.0 * dt);
    } else {
      acc.row(r - 1) = (vel.row(r) - vel.row(r - 1)) / dt;
    }
  }
  return acc;
}

}  // namespace

BatchEvaluation TrajectoryEngine::evaluate_batch(const DeviationRatios& k, int batch,
                                                 const Vector& start_state,
                                                 const MeasuredResponse& measured,
                                                 bool want_gradient) const {
  if (batch < 0 || batch >= plan_.batch_count) throw InputError("batch index out of range");
  if (start_state.size() != 2 * system_size_) {
    throw InputError("batch start state has the wrong size");
  }
  const int n = system_size_;
  const int n_obs = static_cast<int>(obs_offset_.size());
  const int start = plan_.batch_start(batch);
  const int len = plan_.batch_length(batch);
  const double dt = plan_.dt;
  if (measured.disp.rows() < start + len + 1 || measured.disp.cols() != n_obs) {
    throw InputError("measured response does not cover the simulation grid");
  }

  auto sys = build_system(k);
  const int rail = rail_dofs_;
  const int stride = std::max(1, plan_.checkpoint_stride);

  auto observe = [&](const Vector& x, int row, Matrix& disp, Matrix& vel) {
    for (int j = 0; j < n_obs; ++j) {
      disp(row, j) = x[rail + obs_offset_[j]];
      vel(row, j) = x[n + rail + obs_offset_[j]];
    }
  };
  auto step_forward = [&](double t, const Vector& x, Matrix* stages) {
    Vector next = plan_.scheme == Scheme::kRk4
                      ? rk4_step(*sys->system, x, t, dt, &sys->cache)
                      : sys->radau->step(t, x, stages);
    if (!next.allFinite()) {
      throw InstabilityError("state became non-finite at t=" + std::to_string(t + dt));
    }
    return next;
  };

  // Forward pass with checkpoints at every stride-th step.
  Matrix pred_disp(len + 1, n_obs), pred_vel(len + 1, n_obs);
  std::vector<Vector> checkpoints;
  checkpoints.reserve(len / stride + 1);
  Vector x = start_state;
  observe(x, 0, pred_disp, pred_vel);
  for (int local = 0; local < len; ++local) {
    if (local % stride == 0) checkpoints.push_back(x);
    x = step_forward((start + local) * dt, x, nullptr);
    observe(x, local + 1, pred_disp, pred_vel);
  }

  BatchEvaluation out;
  out.end_state = x;
  out.sample_rows = len;

  // Channel losses over rows 1..len against the measured slice.
  const double beta = loss_.huber_beta;
  double disp_sum = 0.0;
  for (int r = 1; r <= len; ++r) {
    for (int j = 0; j < n_obs; ++j) {
      disp_sum += huber_sample(pred_disp(r, j) - measured.disp(start + r, j), beta);
    }
  }
  const double sample_count = static_cast<double>(len) * n_obs;
  out.disp_loss = disp_sum / sample_count;

  Matrix pred_acc, meas_acc;
  if (loss_.use_acceleration) {
    pred_acc = fd_acceleration(pred_vel, dt);
    meas_acc = fd_acceleration(measured.vel.middleRows(start, len + 1), dt);
    double acc_sum = 0.0;
    for (int r = 0; r < len; ++r) {
      for (int j = 0; j < n_obs; ++j) {
        acc_sum += huber_sample(pred_acc(r, j) - meas_acc(r, j), beta);
      }
    }
    out.accel_loss = acc_sum / sample_count;
    out.loss = combined_loss(out.disp_loss, out.accel_loss, loss_);
  } else {
    out.loss = combined_loss(out.disp_loss, std::nullopt, loss_);
  }

  if (!want_gradient) return out;

  // Loss injections per trajectory row.
  const double factor_d =
      (loss_.use_acceleration ? loss_.disp_weight : 1.0) / sample_count;
  Matrix inj_disp = Matrix::Zero(len + 1, n_obs);
  Matrix inj_vel = Matrix::Zero(len + 1, n_obs);
  for (int r = 1; r <= len; ++r) {
    for (int j = 0; j < n_obs; ++j) {
      inj_disp(r, j) =
          factor_d * huber_derivative(pred_disp(r, j) - measured.disp(start + r, j), beta);
    }
  }
  if (loss_.use_acceleration) {
    const double factor_a = loss_.accel_weight / sample_count;
    for (int r = 1; r <= len; ++r) {
      for (int j = 0; j < n_obs; ++j) {
        const double e = factor_a * huber_derivative(pred_acc(r - 1, j) - meas_acc(r - 1, j), beta);
        if (r < len) {
          inj_vel(r + 1, j) += e / (2.0 * dt);
          inj_vel(r - 1, j) -= e / (2.0 * dt);
        } else {
          inj_vel(r, j) += e / dt;
          inj_vel(r - 1, j) -= e / dt;
        }
      }
    }
  }
  auto inject = [&](int row, Vector& lam) {
    for (int j = 0; j < n_obs; ++j) {
      lam[rail + obs_offset_[j]] += inj_disp(row, j);
      lam[n + rail + obs_offset_[j]] += inj_vel(row, j);
    }
  };

  // Reverse sweep, segment by segment off the checkpoints.
  const bool full_sensitivity = plan_.reduce && !plan_.freeze_transform;
  AdjointAccum acc(sys->bridge_dofs, full_sensitivity);
  Vector lam = Vector::Zero(2 * n);
  inject(len, lam);

  const int segments = static_cast<int>(checkpoints.size());
  std::vector<Vector> seg_states;
  std::vector<Matrix> seg_stages;
  for (int seg = segments - 1; seg >= 0; --seg) {
    const int seg_start = seg * stride;
    const int seg_end = std::min(seg_start + stride, len);
    const int seg_len = seg_end - seg_start;

    seg_states.assign(seg_len + 1, Vector());
    seg_states[0] = checkpoints[seg];
    if (plan_.scheme == Scheme::kRadau) seg_stages.assign(seg_len, Matrix());
    for (int i = 0; i < seg_len; ++i) {
      Matrix* stages = plan_.scheme == Scheme::kRadau ? &seg_stages[i] : nullptr;
      seg_states[i + 1] = step_forward((start + seg_start + i) * dt, seg_states[i], stages);
    }

    for (int i = seg_len - 1; i >= 0; --i) {
      const double t = (start + seg_start + i) * dt;
      if (plan_.scheme == Scheme::kRk4) {
        rk4_step_adjoint(*sys->system, sys->cache, t, dt, seg_states[i], rail, lam, acc);
      } else {
        radau_step_adjoint(*sys->system, *sys->radau, t, dt, seg_states[i], seg_stages[i],
                           rail, lam, acc);
      }
      inject(seg_start + i, lam);
    }
  }

  // Adjoint of the stiffness with respect to the full bridge matrix, then
  // per-member contraction against the constant contributions K_i.
  Matrix adj_full;
  if (plan_.reduce) {
    adj_full = reduction_stiffness_adjoint(*sys->guyan, plan_.model->mass(),
                                           plan_.model->baseline_damping(), acc.k,
                                           full_sensitivity ? acc.m : Matrix(),
                                           full_sensitivity ? acc.c : Matrix(),
                                           full_sensitivity);
  } else {
    adj_full = std::move(acc.k);
  }

  const auto& contribs = plan_.model->contributions();
  out.gradient = Vector::Zero(plan_.model->member_count());
  for (int i = 0; i < plan_.model->member_count(); ++i) {
    const MemberContribution& c = contribs[i];
    double g = 0.0;
    const int nd = static_cast<int>(c.dofs.size());
    for (int a = 0; a < nd; ++a) {
      if (c.dofs[a] < 0) continue;
      for (int b = 0; b < nd; ++b) {
        if (c.dofs[b] < 0) continue;
        g += adj_full(c.dofs[a], c.dofs[b]) * c.stiffness(a, b);
      }
    }
    out.gradient[i] = g;
  }
  return out;
}

TrajectoryEvaluation trajectory_loss_gradient(const TrajectoryEngine& engine,
                                              const DeviationRatios& k,
                                              const MeasuredResponse& measured,
                                              bool want_gradient,
                                              const std::vector<Vector>* fixed_starts) {
  const SimulationPlan& plan = engine.plan();
  TrajectoryEvaluation out;
  out.gradient = Vector::Zero(k.size());
  out.batch_start_states.reserve(plan.batch_count);

  Vector state = engine.zero_state();
  double weighted_loss = 0.0;
  for (int b = 0; b < plan.batch_count; ++b) {
    const Vector& start = fixed_starts ? fixed_starts->at(b) : state;
    out.batch_start_states.push_back(start);
    BatchEvaluation eval = engine.evaluate_batch(k, b, start, measured, want_gradient);
    const double weight = static_cast<double>(plan.batch_length(b)) / plan.steps;
    weighted_loss += weight * eval.loss;
    if (want_gradient) out.gradient += weight * eval.gradient;
    state = eval.end_state;
  }
  out.loss = weighted_loss;
  out.final_state = state;
  return out;
}

Vector finite_difference_gradient(const TrajectoryEngine& engine, const DeviationRatios& k,
                                  const MeasuredResponse& measured, double h_rel, int jobs) {
  if (!(h_rel > 0)) throw InputError("finite differences need h > 0");
  TrajectoryEvaluation base = trajectory_loss_gradient(engine, k, measured, false);
  const auto& starts = base.batch_start_states;

  Vector g(k.size());
  parallel_for(k.size(), jobs, [&](int i) {
    const double h = h_rel * std::abs(k[i]);
    Vector plus = k.values;
    Vector minus = k.values;
    plus[i] += h;
    minus[i] -= h;
    if (minus[i] < kMinDeviationRatio) {
      log::warn("finite-difference perturbation clipped at the 0.01 floor for member " +
                std::to_string(i));
      minus[i] = kMinDeviationRatio;
    }
    const double span = plus[i] - minus[i];
    const double l_plus =
        trajectory_loss_gradient(engine, DeviationRatios(plus), measured, false, &starts).loss;
    const double l_minus =
        trajectory_loss_gradient(engine, DeviationRatios(minus), measured, false, &starts).loss;
    g[i] = (l_plus - l_minus) / span;
  });
  return g;
}

}  // namespace spanid
