#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <random>

#include "spanid/integrate.hpp"
#include "spanid/model_io.hpp"

using namespace spanid;

namespace {

CoupledLtvSystem sdof(double omega, double zeta = 0.0) {
  Matrix m = Matrix::Identity(1, 1);
  Matrix k = Matrix::Identity(1, 1) * omega * omega;
  Matrix c = Matrix::Identity(1, 1) * (2 * zeta * omega);
  return CoupledLtvSystem::from_blocks(m, c, k, 0);
}

double sdof_final_error(const CoupledLtvSystem& sys, Scheme scheme, double dt, double t_end) {
  SimulateOptions opt;
  opt.scheme = scheme;
  opt.dt = dt;
  opt.duration = t_end;
  opt.initial_state = Vector(2);
  opt.initial_state << 1.0, 0.0;
  Trajectory traj = simulate(sys, opt);
  const double t = traj.timestamps.back();
  const double exact = std::cos(2 * M_PI * t);
  return std::abs(traj.states(traj.steps(), 0) - exact);
}

std::complex<double> radau_stability(std::complex<double> z) {
  return (1.0 + z / 3.0) / (1.0 - 2.0 * z / 3.0 + z * z / 6.0);
}

}  // namespace

TEST_CASE("tableau satisfies the order-three conditions") {
  const auto& a = RadauTableau::a;
  const auto& b = RadauTableau::b;
  const auto& c = RadauTableau::c;
  CHECK(b[0] + b[1] == doctest::Approx(1.0));
  CHECK(b[0] * c[0] + b[1] * c[1] == doctest::Approx(0.5));
  CHECK(b[0] * c[0] * c[0] + b[1] * c[1] * c[1] == doctest::Approx(1.0 / 3.0));
  // Row sums equal the abscissae, and the method is stiffly accurate.
  CHECK(a[0][0] + a[0][1] == doctest::Approx(c[0]));
  CHECK(a[1][0] + a[1][1] == doctest::Approx(c[1]));
  CHECK(a[1][0] == doctest::Approx(b[0]));
  CHECK(a[1][1] == doctest::Approx(b[1]));
}

TEST_CASE("scalar decay reproduces the stability function") {
  Matrix jac = -Matrix::Identity(1, 1);
  Vector y0 = Vector::Ones(1);
  Vector y1 = radau_step_linear(jac, Vector::Zero(1), y0, 0.1);
  const double r = RadauTableau::stability(-0.1);
  CHECK(std::abs(y1[0] - r) < 1e-12);
  CHECK(std::abs(y1[0] - 0.90484) < 1e-5);
  CHECK(std::abs(y1[0] - std::exp(-0.1)) < 1e-5);

  SUBCASE("L-stable decay of a very stiff mode") {
    Matrix stiff = Matrix::Identity(1, 1) * -1e6;
    Vector y = Vector::Ones(1);
    double prev = 1.0;
    for (int i = 0; i < 4; ++i) {
      y = radau_step_linear(stiff, Vector::Zero(1), y, 1.0);
      CHECK(std::abs(y[0]) < prev);
      prev = std::abs(y[0]);
    }
    CHECK(std::abs(y[0]) < 1e-20);
  }
}

TEST_CASE("stability function is bounded on the left half plane") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> re(-50.0, 0.0), im(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const std::complex<double> z(re(rng), im(rng));
    CHECK(std::abs(radau_stability(z)) <= 1.0 + 1e-12);
  }
  CHECK(std::abs(radau_stability({-1e9, 0.0})) < 1e-8);
}

TEST_CASE("rk4 on an undamped oscillator") {
  CoupledLtvSystem sys = sdof(2 * M_PI);
  SUBCASE("one period returns to the start within 1e-8") {
    CHECK(sdof_final_error(sys, Scheme::kRk4, 1e-3, 1.0) < 1e-8);
  }
  SUBCASE("zero state stays zero") {
    SimulateOptions opt;
    opt.scheme = Scheme::kRk4;
    opt.dt = 1e-2;
    opt.duration = 0.5;
    Trajectory traj = simulate(sys, opt);
    CHECK(traj.states.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("halving dt reduces the error by roughly sixteen") {
    // The end time avoids response extrema where the phase error (the
    // leading dt^4 term) drops out.
    const double e1 = sdof_final_error(sys, Scheme::kRk4, 2.5e-3, 1.025);
    const double e2 = sdof_final_error(sys, Scheme::kRk4, 1.25e-3, 1.025);
    const double ratio = e1 / e2;
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
  }
}

TEST_CASE("radau order three on the oscillator") {
  CoupledLtvSystem sys = sdof(2 * M_PI);
  const double e1 = sdof_final_error(sys, Scheme::kRadau, 2.5e-3, 1.025);
  const double e2 = sdof_final_error(sys, Scheme::kRadau, 1.25e-3, 1.025);
  const double ratio = e1 / e2;
  CHECK(ratio > 6.0);
  CHECK(ratio < 10.0);
}

TEST_CASE("structured stepper equals the generic block solve") {
  // Small coupled system with a moving mass so the rank correction engages.
  std::mt19937_64 rng(13);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int n = 5, rail = 2;
  Matrix a(n, n), b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a(i, j) = dist(rng);
      b(i, j) = dist(rng);
    }
  Matrix m0 = a * a.transpose() + 5.0 * Matrix::Identity(n, n);
  Matrix k = b * b.transpose() + 10.0 * Matrix::Identity(n, n);
  Matrix c = 0.1 * k;
  auto force = [n](double t) {
    Vector p = Vector::Zero(n);
    p[0] = std::sin(3 * t);
    p[n - 1] = 1.0;
    return p;
  };
  auto delta = [rail](double t) {
    Matrix d = Matrix::Zero(rail, rail);
    Vector phi(rail);
    phi << std::sin(t), std::cos(t);
    d += 100.0 * (phi * phi.transpose());
    return d;
  };
  CoupledLtvSystem sys = CoupledLtvSystem::from_blocks(m0, c, k, rail, force, delta);

  const double dt = 0.01;
  RadauWorkspace ws(sys, dt);
  Vector x(2 * n);
  for (int i = 0; i < 2 * n; ++i) x[i] = dist(rng);

  for (double t : {0.0, 0.31, 1.7}) {
    // Reference: the generic first-order block solve with frozen force and
    // mass, J = [0 I; -M^-1 K, -M^-1 C].
    Matrix mt = sys.mass_total(t);
    Matrix minv_k = mt.ldlt().solve(k);
    Matrix minv_c = mt.ldlt().solve(c);
    Matrix jac = Matrix::Zero(2 * n, 2 * n);
    jac.topRightCorner(n, n) = Matrix::Identity(n, n);
    jac.bottomLeftCorner(n, n) = -minv_k;
    jac.bottomRightCorner(n, n) = -minv_c;
    Vector affine = Vector::Zero(2 * n);
    affine.tail(n) = mt.ldlt().solve(force(t));

    Vector generic = radau_step_linear(jac, affine, x, dt);
    Vector structured = ws.step(t, x);
    CHECK((generic - structured).norm() <= 1e-10 * generic.norm());
  }
}

TEST_CASE("energy drift stays under 0.1% for the undamped free model") {
  auto file = load_bridge_model(std::string(SPANID_DATA_DIR) + "/bridge_2d.json");
  const BridgeModel& model = *file.model;
  Matrix k = model.assemble_stiffness(DeviationRatios::healthy(model.member_count()));
  CoupledLtvSystem sys =
      CoupledLtvSystem::from_blocks(model.mass(), Matrix::Zero(k.rows(), k.cols()), k, 0);

  Vector freqs = natural_frequencies_hz(k, model.mass());
  const double dt = 1.0 / (20.0 * freqs[freqs.size() - 1]);

  // Release from the static deflection under a midspan load: a physical,
  // low-mode-dominated free vibration.
  Vector f = Vector::Zero(sys.size());
  f[model.dof_index(4, 1)] = -250e3;
  f[model.dof_index(5, 1)] = -250e3;
  Vector x = Vector::Zero(2 * sys.size());
  x.head(sys.size()) = k.ldlt().solve(f);

  auto energy = [&](const Vector& state) {
    const auto u = state.head(sys.size());
    const auto v = state.tail(sys.size());
    return 0.5 * v.dot(model.mass() * v) + 0.5 * u.dot(k * u);
  };
  const double e0 = energy(x);

  SimulateOptions opt;
  opt.scheme = Scheme::kRk4;
  opt.dt = dt;
  opt.duration = 1e4 * dt;
  opt.initial_state = x;
  Trajectory traj = simulate(sys, opt);
  const double e1 = energy(traj.states.row(traj.steps()));
  CHECK(std::abs(e1 - e0) / e0 < 1e-3);
}

TEST_CASE("forcing superposition for constant-mass systems") {
  auto file = load_bridge_model(std::string(SPANID_DATA_DIR) + "/bridge_2d.json");
  const BridgeModel& model = *file.model;
  SystemMatrices mats = model.system_matrices(DeviationRatios::healthy(model.member_count()));

  TrainConfig t1, t2, t12;
  t1.velocity_mps = t2.velocity_mps = t12.velocity_mps = 25.0;
  t1.axles = {{0.0, 150e3, 0.0}};
  t2.axles = {{0.0, 90e3, 4.0}};
  t12.axles = {{0.0, 150e3, 0.0}, {0.0, 90e3, 4.0}};

  auto run = [&](const TrainConfig& train, Scheme scheme) {
    CoupledLtvSystem sys = couple_systems(mats, file.tracks[0].rail, file.tracks[0].layer, train);
    SimulateOptions opt;
    opt.scheme = scheme;
    opt.dt = 5e-4;
    opt.duration = 3.0;
    return simulate(sys, opt);
  };
  for (Scheme scheme : {Scheme::kRk4, Scheme::kRadau}) {
    Trajectory a = run(t1, scheme), b = run(t2, scheme), ab = run(t12, scheme);
    Matrix sum = a.states + b.states;
    const double scale = ab.states.cwiseAbs().maxCoeff();
    CHECK((sum - ab.states).cwiseAbs().maxCoeff() <= 1e-10 * scale);
  }
}

TEST_CASE("timestep selection") {
  SUBCASE("explicit rule rounds T_min/10 to one significant figure") {
    CHECK(round_to_one_significant_figure(1.9275e-4) == doctest::Approx(2e-4));
    CHECK(round_to_one_significant_figure(1e-3) == doctest::Approx(1e-3));
    CoupledLtvSystem sys = sdof(2 * M_PI * 518.8);
    CHECK(select_timestep(sys, Scheme::kRk4) == doctest::Approx(2e-4));
    CoupledLtvSystem slow = sdof(2 * M_PI * 100.0);
    CHECK(select_timestep(slow, Scheme::kRk4) <= 1e-3 + 1e-15);
  }
  SUBCASE("implicit scheme takes the requested accuracy-driven step") {
    CoupledLtvSystem sys = sdof(2 * M_PI * 131.37);
    CHECK(select_timestep(sys, Scheme::kRadau, 0.002) == doctest::Approx(0.002));
    CHECK_THROWS_AS(select_timestep(sys, Scheme::kRadau), InputError);
  }
}

TEST_CASE("trajectory shape, determinism and instability reporting") {
  CoupledLtvSystem sys = sdof(2 * M_PI, 0.05);
  SimulateOptions opt;
  opt.scheme = Scheme::kRk4;
  opt.dt = 1e-3;
  opt.duration = 0.1234;
  opt.initial_state = Vector(2);
  opt.initial_state << 1.0, 0.0;

  Trajectory a = simulate(sys, opt);
  CHECK(static_cast<int>(a.timestamps.size()) ==
        static_cast<int>(std::floor(opt.duration / opt.dt)) + 1);
  Trajectory b = simulate(sys, opt);
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("accelerations by velocity differences") {
    opt.want_accelerations = true;
    Trajectory traj = simulate(sys, opt);
    REQUIRE(traj.accelerations.rows() == traj.states.rows());
    // Interior rows are central differences of the velocity block.
    const int n = sys.size();
    for (int r : {1, 5, 50}) {
      const double expected =
          (traj.states(r + 1, n) - traj.states(r - 1, n)) / (2 * opt.dt);
      CHECK(traj.accelerations(r, 0) == doctest::Approx(expected));
    }
    const double fwd = (traj.states(1, n) - traj.states(0, n)) / opt.dt;
    CHECK(traj.accelerations(0, 0) == doctest::Approx(fwd));
  }

  SUBCASE("blown-up steps raise the instability error") {
    CoupledLtvSystem stiff = sdof(2 * M_PI * 5000.0);
    SimulateOptions bad;
    bad.scheme = Scheme::kRk4;
    bad.dt = 1e-3;
    bad.duration = 1.0;
    bad.initial_state = Vector(2);
    bad.initial_state << 1.0, 0.0;
    CHECK_THROWS_AS(simulate(stiff, bad), InstabilityError);
  }
}

TEST_CASE("csv round trip is bit faithful") {
  CoupledLtvSystem sys = sdof(2 * M_PI, 0.02);
  SimulateOptions opt;
  opt.scheme = Scheme::kRk4;
  opt.dt = 1e-3;
  opt.duration = 0.05;
  opt.initial_state = Vector(2);
  opt.initial_state << 1e-3, 0.0;
  Trajectory traj = simulate(sys, opt);

  MeasuredSeries series = observe_trajectory(traj, {0}, {0}, 0);
  const std::string path = "roundtrip_test.csv";
  write_observed_csv(path, series);
  MeasuredSeries back = read_trajectory_csv(path);
  REQUIRE(back.dof_ids == series.dof_ids);
  REQUIRE(back.disp.rows() == series.disp.rows());
  CHECK((back.disp - series.disp).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.vel - series.vel).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}
