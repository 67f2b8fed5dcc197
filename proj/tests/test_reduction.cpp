#include <doctest.h>

#include <random>

#include "spanid/model_io.hpp"
#include "spanid/reduction.hpp"

using namespace spanid;

namespace {

BridgeModelFile load_model(const char* name) {
  return load_bridge_model(std::string(SPANID_DATA_DIR) + "/" + name);
}

Matrix healthy_stiffness(const BridgeModel& model) {
  return model.assemble_stiffness(DeviationRatios::healthy(model.member_count()));
}

}  // namespace

TEST_CASE("transform is the identity with no slaves") {
  Matrix k(2, 2);
  k << 2, -1, -1, 2;
  auto p = MasterSlavePartition::from_masters({0, 1}, 2);
  GuyanTransform t = guyan_transform(k, p);
  CHECK((t.t - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-DOF spring chain by hand") {
  // k1 ground-1, k2 1-2; DOF 0 is the middle, DOF 1 the tip (master).
  const double k1 = 1.0, k2 = 1.0;
  Matrix k(2, 2);
  k << k1 + k2, -k2, -k2, k2;
  auto p = MasterSlavePartition::from_masters({1}, 2);
  GuyanTransform t = guyan_transform(k, p);
  CHECK(t.t(1, 0) == doctest::Approx(1.0));
  CHECK(t.t(0, 0) == doctest::Approx(0.5));  // slave rides at k2/(k1+k2)

  SystemMatrices sys;
  sys.stiffness = k;
  sys.mass = Matrix::Identity(2, 2);
  SystemMatrices red = reduce_system(sys, t);
  CHECK(red.stiffness(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("unit master displacements satisfy the slave equilibrium exactly") {
  auto file = load_model("bridge_2d.json");
  Matrix k = healthy_stiffness(*file.model);
  auto p = MasterSlavePartition::from_masters(file.reduction_masters,
                                              file.model->free_dof_count());
  GuyanTransform t = guyan_transform(k, p);
  Matrix residual = k * t.t;
  for (int slave : p.slaves) {
    for (int j = 0; j < t.t.cols(); ++j) {
      CHECK(std::abs(residual(slave, j)) <= 1e-9 * k.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("static master-DOF responses are exact") {
  for (const char* name : {"bridge_2d.json", "bridge_3d.json"}) {
    auto file = load_model(name);
    const BridgeModel& model = *file.model;
    Matrix k = healthy_stiffness(model);
    auto p = MasterSlavePartition::from_masters(file.reduction_masters, model.free_dof_count());
    GuyanTransform t = guyan_transform(k, p);
    SystemMatrices sys{model.mass(), model.baseline_damping(), k};
    SystemMatrices red = reduce_system(sys, t);

    std::mt19937_64 rng(17);
    std::normal_distribution<double> load(0.0, 1e5);
    Vector f_master(p.master_count());
    for (int i = 0; i < f_master.size(); ++i) f_master[i] = load(rng);
    Vector f_full = Vector::Zero(model.free_dof_count());
    for (int i = 0; i < p.master_count(); ++i) f_full[p.masters[i]] = f_master[i];

    Vector u_full = k.ldlt().solve(f_full);
    Vector u_red = red.stiffness.ldlt().solve(f_master);
    for (int i = 0; i < p.master_count(); ++i) {
      CHECK(u_red[i] == doctest::Approx(u_full[p.masters[i]]).epsilon(1e-10));
    }
  }
}

TEST_CASE("reduced frequencies bound the full spectrum from above") {
  for (const char* name : {"bridge_2d.json", "bridge_3d.json"}) {
    auto file = load_model(name);
    const BridgeModel& model = *file.model;
    Matrix k = healthy_stiffness(model);
    auto p = MasterSlavePartition::from_masters(file.reduction_masters, model.free_dof_count());
    GuyanTransform t = guyan_transform(k, p);
    SystemMatrices red = reduce_system({model.mass(), model.baseline_damping(), k}, t);

    Vector f_full = natural_frequencies_hz(k, model.mass());
    Vector f_red = natural_frequencies_hz(red.stiffness, red.mass);
    for (int i = 0; i < f_red.size(); ++i) {
      CHECK(f_red[i] >= f_full[i] * (1.0 - 1e-9));
    }
    // Reduced top of spectrum sits strictly below the full model's.
    CHECK(f_red[f_red.size() - 1] < f_full[f_full.size() - 1]);
  }
}

TEST_CASE("all-master partition reproduces the unreduced coupling bitwise") {
  auto file = load_model("bridge_2d.json");
  const BridgeModel& model = *file.model;
  Matrix k = healthy_stiffness(model);
  std::vector<int> all(model.free_dof_count());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto p = MasterSlavePartition::from_masters(all, model.free_dof_count());
  GuyanTransform t = guyan_transform(k, p);
  SystemMatrices red = reduce_system({model.mass(), model.baseline_damping(), k}, t);

  TrainConfig train;
  train.velocity_mps = 20.0;
  train.axles = {{10000, 98100, 0.0}};
  std::vector<CoupledLtvSystem::Track> tracks;
  tracks.push_back({file.tracks[0].rail, file.tracks[0].layer, train});

  CoupledLtvSystem reduced = combine_reduced_with_train(red, t, tracks);
  CoupledLtvSystem direct(
      SystemMatrices{model.mass(), model.baseline_damping(), k}, tracks);
  CHECK((reduced.stiffness() - direct.stiffness()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((reduced.mass_constant() - direct.mass_constant()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((reduced.damping() - direct.damping()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coupled lowest frequencies survive the reduction on the 3D model") {
  auto file = load_model("bridge_3d.json");
  const BridgeModel& model = *file.model;
  Matrix k = healthy_stiffness(model);
  auto p = MasterSlavePartition::from_masters(file.reduction_masters, model.free_dof_count());
  GuyanTransform t = guyan_transform(k, p);
  SystemMatrices red = reduce_system({model.mass(), model.baseline_damping(), k}, t);

  // Zero train masses: the coupled system is LTI.
  TrainConfig massless;
  massless.velocity_mps = 30.0;
  std::vector<CoupledLtvSystem::Track> tracks;
  for (const auto& tt : file.tracks) tracks.push_back({tt.rail, tt.layer, massless});

  CoupledLtvSystem full(SystemMatrices{model.mass(), model.baseline_damping(), k}, tracks);
  CoupledLtvSystem reduced = combine_reduced_with_train(red, t, tracks);

  Vector f_full = natural_frequencies_hz(full.stiffness(), full.mass_constant());
  Vector f_red = natural_frequencies_hz(reduced.stiffness(), reduced.mass_constant());
  for (int i = 0; i < 5; ++i) {
    CHECK(f_red[i] == doctest::Approx(f_full[i]).epsilon(0.02));
  }
  CHECK(f_red[f_red.size() - 1] < f_full[f_full.size() - 1]);
}

TEST_CASE("sleeper attached to a slave DOF is a partition error") {
  auto file = load_model("bridge_2d.json");
  const BridgeModel& model = *file.model;
  Matrix k = healthy_stiffness(model);
  // Masters that exclude the sleeper attachment DOFs.
  std::vector<int> masters;
  std::vector<char> attached(model.free_dof_count(), 0);
  for (const Sleeper& s : file.tracks[0].layer.sleepers) attached[s.bridge_dof] = 1;
  for (int d = 0; d < model.free_dof_count(); ++d) {
    if (!attached[d]) masters.push_back(d);
  }
  auto p = MasterSlavePartition::from_masters(masters, model.free_dof_count());
  GuyanTransform t = guyan_transform(k, p);
  SystemMatrices red = reduce_system({model.mass(), model.baseline_damping(), k}, t);

  TrainConfig train;
  train.velocity_mps = 20.0;
  std::vector<CoupledLtvSystem::Track> tracks;
  tracks.push_back({file.tracks[0].rail, file.tracks[0].layer, train});
  CHECK_THROWS_AS(combine_reduced_with_train(red, t, tracks), InputError);
}

TEST_CASE("reduction adjoint matches finite differences of the reduced matrices") {
  auto file = load_model("bridge_2d.json");
  const BridgeModel& model = *file.model;
  Matrix k = healthy_stiffness(model);
  const int n = model.free_dof_count();
  auto p = MasterSlavePartition::from_masters(file.reduction_masters, n);
  const int nm = p.master_count();

  std::mt19937_64 rng(23);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix ga(nm, nm), gb(nm, nm), gc(nm, nm);
  for (int i = 0; i < nm; ++i) {
    for (int j = 0; j < nm; ++j) {
      ga(i, j) = dist(rng);
      gb(i, j) = dist(rng);
      gc(i, j) = dist(rng);
    }
  }

  // phi(K) = <sym(ga), K^G> + <sym(gb), M^G> + <sym(gc), C^G>.
  auto phi = [&](const Matrix& kk) {
    GuyanTransform t = guyan_transform(kk, p);
    SystemMatrices red = reduce_system({model.mass(), model.baseline_damping(), kk}, t);
    auto dot = [](const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); };
    return dot(0.5 * (ga + ga.transpose()), red.stiffness) +
           dot(0.5 * (gb + gb.transpose()), red.mass) +
           dot(0.5 * (gc + gc.transpose()), red.damping);
  };

  GuyanTransform t = guyan_transform(k, p);
  Matrix adj = reduction_stiffness_adjoint(t, model.mass(), model.baseline_damping(), ga, gb,
                                           gc, true);

  std::uniform_int_distribution<int> pick(0, n - 1);
  const double h = 1e-4 * k.cwiseAbs().maxCoeff();
  for (int trial = 0; trial < 6; ++trial) {
    const int i = pick(rng), j = pick(rng);
    Matrix kp = k, km = k;
    kp(i, j) += h;
    km(i, j) -= h;
    if (i != j) {
      kp(j, i) += h;
      km(j, i) -= h;
    }
    const double fd = (phi(kp) - phi(km)) / (2 * h);
    const double an = i == j ? adj(i, i) : adj(i, j) + adj(j, i);
    CHECK(an == doctest::Approx(fd).epsilon(1e-5));
  }
}
