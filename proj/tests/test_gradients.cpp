#include <doctest.h>

#include <random>

#include "spanid/gradients.hpp"
#include "spanid/model_io.hpp"

using namespace spanid;

namespace {

struct Fixture {
  BridgeModelFile bridge;
  SimulationPlan plan;
  LossConfig loss;
  MeasuredResponse measured;

  Fixture(const char* model_name, const char* train_name, Scheme scheme, double dt,
          double duration, int batches, bool reduce, const std::vector<std::pair<int, double>>& gt,
          bool use_accel = false) {
    bridge = load_bridge_model(std::string(SPANID_DATA_DIR) + "/" + model_name);
    TrainConfig train = load_train(std::string(SPANID_DATA_DIR) + "/" + train_name);

    plan.model = bridge.model.get();
    plan.scheme = scheme;
    plan.dt = dt;
    plan.steps = static_cast<int>(duration / dt + 0.5);
    plan.batch_count = batches;
    plan.reduce = reduce;
    if (reduce) {
      plan.partition = MasterSlavePartition::from_masters(bridge.reduction_masters,
                                                          bridge.model->free_dof_count());
    }
    for (size_t i = 0; i < bridge.tracks.size(); ++i) {
      CoupledLtvSystem::Track track;
      track.rail = bridge.tracks[i].rail;
      track.layer = bridge.tracks[i].layer;
      track.train.velocity_mps = train.velocity_mps;
      if (i == 0) track.train.axles = train.axles;
      plan.tracks.push_back(track);
    }

    if (reduce) {
      loss.observed_dofs = bridge.reduction_masters;
    } else {
      loss.observed_dofs.resize(bridge.model->free_dof_count());
      for (size_t i = 0; i < loss.observed_dofs.size(); ++i) loss.observed_dofs[i] = (int)i;
    }
    loss.use_acceleration = use_accel;

    Vector k_gt = Vector::Ones(bridge.model->member_count());
    for (auto [member, value] : gt) k_gt[member] = value;
    Trajectory traj = simulate_plan(plan, DeviationRatios(k_gt));
    int rail = 0;
    for (const auto& tr : plan.tracks) rail += tr.rail.n_modes;
    MeasuredSeries series = observe_trajectory(
        traj, loss.observed_dofs, observed_state_offsets(plan, loss.observed_dofs), rail);
    measured.disp = series.disp;
    measured.vel = series.vel;
  }
};

// Mixed relative/absolute comparison: components far below the gradient
// scale are held to an absolute bar of 1e-3 * ||g||_inf, where central
// differences bottom out in roundoff.
double max_rel_error(const Vector& a, const Vector& b) {
  const double gmax = b.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3 * gmax});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("gradient scaling") {
  ScalingProfile ones = ScalingProfile::ones(3);
  Vector g(3);
  g << 1.0, -2.0, 0.5;
  CHECK((scale_gradients(g, ones) - g).cwiseAbs().maxCoeff() == 0.0);

  ScalingProfile boost{Vector::Ones(3)};
  boost.s[1] = 1e4;
  Vector scaled = scale_gradients(g, boost);
  CHECK(scaled[0] == 1.0);
  CHECK(scaled[1] == -2e4);

  ScalingProfile bad{Vector::Zero(3)};
  CHECK_THROWS_AS(scale_gradients(g, bad), InputError);
}

TEST_CASE("gradient vanishes exactly at a perfect fit") {
  Fixture fx("bridge_2d.json", "train_loco_50mph.json", Scheme::kRk4, 4e-4, 1.0, 4, false,
             {{4, 0.85}});
  TrajectoryEngine engine(fx.plan, fx.loss);
  Vector k_gt = Vector::Ones(fx.bridge.model->member_count());
  k_gt[4] = 0.85;
  TrajectoryEvaluation at_truth =
      trajectory_loss_gradient(engine, DeviationRatios(k_gt), fx.measured, true);
  CHECK(at_truth.loss == 0.0);
  CHECK(at_truth.gradient.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adjoint matches central differences on the 2D rk4 path") {
  Fixture fx("bridge_2d.json", "train_loco_50mph.json", Scheme::kRk4, 4e-4, 1.0, 4, false,
             {{4, 0.8}, {20, 1.15}});
  TrajectoryEngine engine(fx.plan, fx.loss);

  Vector k = Vector::Ones(fx.bridge.model->member_count());
  k[4] = 0.9;
  k[20] = 1.05;
  k[33] = 1.2;
  DeviationRatios ratios(k);

  TrajectoryEvaluation adj = trajectory_loss_gradient(engine, ratios, fx.measured, true);
  Vector fd = finite_difference_gradient(engine, ratios, fx.measured, 1e-6, 2);
  CHECK(max_rel_error(adj.gradient, fd) < 1e-5);
}

TEST_CASE("adjoint matches central differences with the acceleration channel") {
  Fixture fx("bridge_2d.json", "train_loco_50mph.json", Scheme::kRk4, 4e-4, 0.75, 3, false,
             {{10, 0.8}}, /*use_accel=*/true);
  TrajectoryEngine engine(fx.plan, fx.loss);

  Vector k = Vector::Ones(fx.bridge.model->member_count());
  k[10] = 0.9;
  DeviationRatios ratios(k);

  TrajectoryEvaluation adj = trajectory_loss_gradient(engine, ratios, fx.measured, true);
  Vector fd = finite_difference_gradient(engine, ratios, fx.measured, 1e-6, 2);
  CHECK(max_rel_error(adj.gradient, fd) < 1e-5);

  SUBCASE("combined-loss gradient is the weighted channel combination") {
    LossConfig disp_only = fx.loss;
    disp_only.use_acceleration = false;
    LossConfig accel_heavy = fx.loss;
    accel_heavy.disp_weight = 0.0;
    accel_heavy.accel_weight = 1.0;

    TrajectoryEngine e_disp(fx.plan, disp_only);
    TrajectoryEngine e_accel(fx.plan, accel_heavy);
    TrajectoryEvaluation gd = trajectory_loss_gradient(e_disp, ratios, fx.measured, true);
    TrajectoryEvaluation gaw = trajectory_loss_gradient(e_accel, ratios, fx.measured, true);
    Vector combo = 0.9 * gd.gradient + 0.1 * gaw.gradient;
    CHECK(max_rel_error(adj.gradient, combo) < 1e-9);
  }
}

TEST_CASE("adjoint matches central differences through Guyan reduction and radau") {
  Fixture fx("bridge_3d.json", "train_loco_50mph.json", Scheme::kRadau, 2e-3, 1.2, 4, true,
             {{4, 0.8}, {78, 1.2}});
  TrajectoryEngine engine(fx.plan, fx.loss);

  Vector k = Vector::Ones(fx.bridge.model->member_count());
  k[4] = 0.9;
  k[78] = 1.1;
  k[50] = 0.95;
  DeviationRatios ratios(k);

  TrajectoryEvaluation adj = trajectory_loss_gradient(engine, ratios, fx.measured, true);

  // Spot-check a spread of members against central differences.
  TrajectoryEvaluation base = trajectory_loss_gradient(engine, ratios, fx.measured, false);
  const double gmax = adj.gradient.cwiseAbs().maxCoeff();
  for (int member : {0, 4, 22, 50, 78, 84, 95, 104, 113}) {
    const double h = 1e-6 * std::abs(k[member]);
    Vector plus = k, minus = k;
    plus[member] += h;
    minus[member] -= h;
    const double lp = trajectory_loss_gradient(engine, DeviationRatios(plus), fx.measured,
                                               false, &base.batch_start_states)
                          .loss;
    const double lm = trajectory_loss_gradient(engine, DeviationRatios(minus), fx.measured,
                                               false, &base.batch_start_states)
                          .loss;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(adj.gradient[member]), 1e-3 * gmax});
    CHECK(std::abs(adj.gradient[member] - fd) / denom < 1e-4);
  }

  SUBCASE("freezing the transform visibly breaks the gradient") {
    SimulationPlan frozen = fx.plan;
    frozen.freeze_transform = true;
    TrajectoryEngine frozen_engine(frozen, fx.loss);
    TrajectoryEvaluation fadj =
        trajectory_loss_gradient(frozen_engine, ratios, fx.measured, true);
    // The frozen-transform gradient must differ from the exact one by far
    // more than the verification tolerance for at least one member.
    CHECK(max_rel_error(fadj.gradient, adj.gradient) > 1e-3);
  }
}

TEST_CASE("finite differences clip at the deviation floor") {
  Fixture fx("bridge_2d.json", "train_loco_50mph.json", Scheme::kRk4, 4e-4, 0.3, 1, false,
             {{4, 0.8}});
  TrajectoryEngine engine(fx.plan, fx.loss);
  Vector k = Vector::Ones(fx.bridge.model->member_count());
  k[4] = kMinDeviationRatio;  // at the floor; the minus side must clip
  Vector fd = finite_difference_gradient(engine, DeviationRatios(k), fx.measured, 1e-6, 1);
  CHECK(fd.allFinite());
}
