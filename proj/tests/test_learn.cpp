#include <doctest.h>

#include <cmath>
#include <random>

#include "spanid/learn.hpp"
#include "spanid/model_io.hpp"

using namespace spanid;

TEST_CASE("huber loss hand values and smoothness") {
  Vector a(1), b(1);
  a << 1.0;
  b << 1.0;
  CHECK(huber_loss(a, b, 1.0) == 0.0);

  a[0] = 1.5;
  CHECK(huber_loss(a, b, 1.0) == doctest::Approx(0.125));
  a[0] = 3.0;
  CHECK(huber_loss(a, b, 1.0) == doctest::Approx(1.5));

  SUBCASE("first derivative is continuous at the transition") {
    const double beta = 1.0, eps = 1e-9;
    const double inner = huber_derivative(beta - eps, beta);
    const double outer = huber_derivative(beta + eps, beta);
    CHECK(std::abs(inner - outer) < 1e-6);
    auto f = [&](double d) { return huber_sample(d, beta); };
    const double h = 1e-7;
    const double left = (f(beta) - f(beta - h)) / h;
    const double right = (f(beta + h) - f(beta)) / h;
    CHECK(std::abs(left - right) < 1e-6);
  }

  SUBCASE("mismatched lengths are rejected") {
    Vector c(2);
    CHECK_THROWS_AS(huber_loss(a, c, 1.0), InputError);
  }
}

TEST_CASE("combined loss weighting") {
  LossConfig cfg;
  CHECK(combined_loss(1.0, 0.0, cfg) == doctest::Approx(0.9));
  CHECK(combined_loss(0.0, 0.0, cfg) == 0.0);
  CHECK(combined_loss(0.4, std::nullopt, cfg) == doctest::Approx(0.4));
  CHECK_THROWS_AS(combined_loss(std::nullopt, std::nullopt, cfg), InputError);
}

TEST_CASE("l1 regularizer and its schedule rule") {
  Vector k(2);
  k << 1.0, 1.0;
  CHECK(l1_regularizer(k, 5.0) == 0.0);
  k << 0.9, 1.1;
  CHECK(l1_regularizer(k, 1.0) == doctest::Approx(0.2));
  CHECK(next_l1_lambda(0.02) == doctest::Approx(2e-5));

  SUBCASE("subgradient is zero at the healthy point") {
    Vector at_one = Vector::Ones(3);
    CHECK(l1_subgradient(at_one, 1.0).cwiseAbs().maxCoeff() == 0.0);
    Vector off(3);
    off << 0.5, 1.0, 1.5;
    Vector g = l1_subgradient(off, 2.0);
    CHECK(g[0] == -2.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 2.0);
  }
}

TEST_CASE("prior blending follows the confidence-weighted combination") {
  PriorSpec prior;
  prior.entries.push_back({2, 0.8, 0.7});
  DeviationRatios k = apply_prior(prior, 5);
  CHECK(k[2] == doctest::Approx(0.86).epsilon(1e-14));
  CHECK(k[0] == 1.0);

  SUBCASE("confidence endpoints are exact") {
    PriorSpec zero;
    zero.entries.push_back({0, 0.5, 0.0});
    CHECK(apply_prior(zero, 2)[0] == 1.0);
    PriorSpec full;
    full.entries.push_back({0, 0.5, 1.0});
    CHECK(apply_prior(full, 2)[0] == 0.5);
  }
  SUBCASE("blend stays between the endpoints") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> conf(0.0, 1.0), kp(0.01, 2.0);
    for (int i = 0; i < 200; ++i) {
      PriorSpec p;
      const double prior_k = kp(rng);
      p.entries.push_back({0, prior_k, conf(rng)});
      const double v = apply_prior(p, 1)[0];
      CHECK(v >= std::min(1.0, prior_k) - 1e-15);
      CHECK(v <= std::max(1.0, prior_k) + 1e-15);
    }
  }
  SUBCASE("invalid priors are rejected") {
    PriorSpec bad;
    bad.entries.push_back({0, 0.8, 1.5});
    CHECK_THROWS_AS(apply_prior(bad, 1), InputError);
  }
}

TEST_CASE("rmsprop step matches the hand evaluation and clamps") {
  OptimizerState opt = OptimizerState::create(OptimizerKind::kRmsprop, 1);
  Vector k = Vector::Ones(1);
  Vector g = Vector::Ones(1);
  optimizer_step(opt, k, g, 0.01);
  CHECK(opt.v[0] == doctest::Approx(0.01));
  CHECK(k[0] == doctest::Approx(0.9000).epsilon(1e-5));

  SUBCASE("zero gradient leaves the parameters alone") {
    OptimizerState fresh = OptimizerState::create(OptimizerKind::kRmsprop, 2);
    Vector kk(2);
    kk << 0.7, 1.2;
    optimizer_step(fresh, kk, Vector::Zero(2), 0.1);
    CHECK(kk[0] == 0.7);
    CHECK(kk[1] == 1.2);
  }
  SUBCASE("updates clamp at the floor") {
    OptimizerState fresh = OptimizerState::create(OptimizerKind::kRmsprop, 1);
    Vector kk = Vector::Ones(1);
    optimizer_step(fresh, kk, Vector::Ones(1), 5.0);
    CHECK(kk[0] == kMinDeviationRatio);
  }
  SUBCASE("non-finite gradients abort") {
    OptimizerState fresh = OptimizerState::create(OptimizerKind::kRmsprop, 1);
    Vector kk = Vector::Ones(1);
    Vector bad(1);
    bad << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(optimizer_step(fresh, kk, bad, 0.01), DivergenceError);
  }
}

TEST_CASE("adamw takes a bias-corrected step with no decay pull") {
  OptimizerState opt = OptimizerState::create(OptimizerKind::kAdamW, 1);
  Vector k = Vector::Ones(1);
  Vector g(1);
  g << 2.0;
  optimizer_step(opt, k, g, 0.01);
  CHECK(k[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("cyclic learning rate schedule") {
  CyclicLrSpec spec{5e-4, 1e-3, 50, 1.0};
  CHECK(cyclic_lr(0, spec) == doctest::Approx(5e-4));
  CHECK(cyclic_lr(50, spec) == doctest::Approx(1e-3));
  CHECK(cyclic_lr(100, spec) == doctest::Approx(5e-4));
  CHECK(cyclic_lr(25, spec) == doctest::Approx(7.5e-4));

  CyclicLrSpec decaying{5e-4, 1e-3, 50, 0.999};
  CHECK(cyclic_lr(50, decaying) ==
        doctest::Approx(5e-4 + 5e-4 * std::pow(0.999, 50)).epsilon(1e-12));
  CHECK(cyclic_lr(50, decaying) == doctest::Approx(9.756e-4).epsilon(1e-3));
}

TEST_CASE("seeded gaussian noise has the requested scale") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> base(0.0, 2e-3);
  const int rows = 100000;
  Matrix clean(rows, 1);
  for (int i = 0; i < rows; ++i) clean(i, 0) = base(rng);

  Matrix noisy = clean;
  add_noise(noisy, 0.05, 1234);
  Matrix delta = noisy - clean;
  const double rms_clean = std::sqrt(clean.col(0).squaredNorm() / rows);
  const double sigma = std::sqrt(delta.col(0).squaredNorm() / rows);
  CHECK(sigma == doctest::Approx(0.05 * rms_clean).epsilon(0.03));

  SUBCASE("level zero is the identity") {
    Matrix copy = clean;
    add_noise(copy, 0.0, 99);
    CHECK((copy - clean).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("same seed reproduces the same noise") {
    Matrix a = clean, b = clean;
    add_noise(a, 0.05, 77);
    add_noise(b, 0.05, 77);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("classification against the five percent threshold") {
  Vector k = Vector::Ones(5);
  DamageReport clean = classify_and_report(k, nullptr);
  CHECK(clean.damaged.empty());
  CHECK(clean.false_positives.empty());

  Vector gt = Vector::Ones(5);
  gt[1] = 0.7;
  k[1] = 0.702;
  k[3] = 0.93;
  k[4] = 0.96;
  DamageReport rep = classify_and_report(k, &gt);
  REQUIRE(rep.damaged.size() == 1);
  CHECK(rep.damaged[0].member == 1);
  REQUIRE(rep.false_positives.size() == 1);
  CHECK(rep.false_positives[0].member == 3);

  SUBCASE("accuracy metric reproduces the reference arithmetic") {
    Vector gt3(3), pred(3);
    gt3 << 0.7, 1.25, 0.8;
    pred << 0.702, 1.244, 0.806;
    Vector full_gt = Vector::Ones(6), full_k = Vector::Ones(6);
    full_gt.head(3) = gt3;
    full_k.head(3) = pred;
    DamageReport r = classify_and_report(full_k, &full_gt);
    CHECK(r.average_accuracy_pct == doctest::Approx(99.50).epsilon(1e-4));
    CHECK(r.false_positives.empty());
  }
}

TEST_CASE("identification recovers an injected deviation on a short crossing") {
  auto bridge = load_bridge_model(std::string(SPANID_DATA_DIR) + "/bridge_2d.json");
  TrainConfig train = load_train(std::string(SPANID_DATA_DIR) + "/train_loco_50mph.json");

  SimulationPlan plan;
  plan.model = bridge.model.get();
  plan.scheme = Scheme::kRk4;
  plan.dt = 4e-4;
  plan.steps = 7500;  // 3 s: the locomotive reaches well past midspan
  plan.batch_count = 4;
  CoupledLtvSystem::Track track;
  track.rail = bridge.tracks[0].rail;
  track.layer = bridge.tracks[0].layer;
  track.train = train;
  plan.tracks.push_back(track);

  LossConfig loss;
  loss.observed_dofs.resize(bridge.model->free_dof_count());
  for (size_t i = 0; i < loss.observed_dofs.size(); ++i) loss.observed_dofs[i] = (int)i;

  Vector gt = Vector::Ones(bridge.model->member_count());
  gt[4] = 0.8;  // midspan bottom chord, strongly stressed by the crossing
  Trajectory traj = simulate_plan(plan, DeviationRatios(gt));
  MeasuredSeries series = observe_trajectory(
      traj, loss.observed_dofs, observed_state_offsets(plan, loss.observed_dofs), 5);
  MeasuredResponse measured{series.disp, series.vel};

  TrajectoryEngine engine(plan, loss);
  TrainingSchedule schedule;
  schedule.optimizer = OptimizerKind::kRmsprop;
  schedule.learning_rate = 3e-3;
  schedule.max_epochs = 60;
  schedule.batch_count = 4;
  schedule.tolerance = 0.0;  // run all epochs

  PriorSpec no_prior;
  IdentificationResult result = identify(engine, measured, no_prior, schedule, &gt);
  CHECK(result.epochs_run == 60);
  CHECK(std::abs(result.final_k[4] - 0.8) < 0.1);

  SUBCASE("identical seeds and inputs give identical results") {
    IdentificationResult again = identify(engine, measured, no_prior, schedule, &gt);
    CHECK((again.final_k - result.final_k).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.loss_history == result.loss_history);
  }
  SUBCASE("the k trace respects the clamp everywhere") {
    for (const Vector& kvec : result.k_history) {
      CHECK(kvec.minCoeff() >= kMinDeviationRatio);
    }
  }
}
