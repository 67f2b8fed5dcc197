// spanid: differentiable bridge-train simulation and damage identification.
//
// Subcommands: simulate, identify, verify-gradients, report.
// Exit codes: 0 ok, 2 input error, 3 instability, 4 divergence,
// 5 gradient-check failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spanid/gradients.hpp"
#include "spanid/learn.hpp"
#include "spanid/log.hpp"
#include "spanid/report.hpp"
#include "spanid/scenario.hpp"

using namespace spanid;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string scenario_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool no_plots = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--scenario", args.scenario_path, "Scenario JSON file")->required();
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Seed override")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--jobs", args.jobs, "Worker threads for embarrassingly parallel work");
  cmd->add_flag("--no-plots", args.no_plots, "Skip plot emission");
}

Scenario load(const CommonArgs& args) {
  Scenario sc = load_scenario(args.scenario_path);
  if (args.seed_set) {
    sc.seed = args.seed;
    sc.config_echo["seed"] = args.seed;
  }
  std::filesystem::create_directories(args.out_dir);
  return sc;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

MeasuredResponse align_measurements(const MeasuredSeries& series, const Scenario& sc) {
  if (std::abs(series.dt - sc.dt) > 1e-12 * std::max(1.0, sc.dt)) {
    throw InputError("measurement dt " + std::to_string(series.dt) +
                     " does not match scenario dt " + std::to_string(sc.dt));
  }
  if (static_cast<int>(series.timestamps.size()) < sc.steps + 1) {
    throw InputError("measurements cover " + std::to_string(series.timestamps.size()) +
                     " rows but the scenario needs " + std::to_string(sc.steps + 1));
  }
  // Column lookup by observed dof id.
  std::vector<int> col(sc.observed_dofs.size(), -1);
  for (size_t j = 0; j < sc.observed_dofs.size(); ++j) {
    for (size_t c = 0; c < series.dof_ids.size(); ++c) {
      if (series.dof_ids[c] == sc.observed_dofs[j]) {
        col[j] = static_cast<int>(c);
        break;
      }
    }
    if (col[j] < 0) {
      throw InputError("measurements are missing observed DOF " +
                       std::to_string(sc.observed_dofs[j]));
    }
  }
  MeasuredResponse out;
  out.disp.resize(sc.steps + 1, col.size());
  out.vel.resize(sc.steps + 1, col.size());
  for (int r = 0; r <= sc.steps; ++r) {
    for (size_t j = 0; j < col.size(); ++j) {
      out.disp(r, j) = series.disp(r, col[j]);
      out.vel(r, j) = series.vel(r, col[j]);
    }
  }
  return out;
}

int cmd_simulate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario sc = load(args);
  SimulationPlan plan = sc.make_plan();

  Trajectory traj = simulate_plan(plan, sc.ground_truth_ratios());
  int rail = 0;
  for (const auto& tr : plan.tracks) rail += tr.rail.n_modes;
  MeasuredSeries series = observe_trajectory(
      traj, sc.observed_dofs, observed_state_offsets(plan, sc.observed_dofs), rail);
  if (sc.noise_level > 0) {
    add_noise(series.disp, sc.noise_level, sc.seed);
    add_noise(series.vel, sc.noise_level, sc.seed + 1);
  }

  const std::string csv = join_path(args.out_dir, "response.csv");
  write_observed_csv(csv, series);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = make_manifest("simulate", {sc.path, sc.bridge.path}, sc.config_echo,
                                sc.seed, wall, {csv});
  write_json_file(join_path(args.out_dir, "manifest.json"), manifest);
  std::cout << "wrote " << csv << " (" << series.timestamps.size() << " rows, "
            << sc.observed_dofs.size() << " observed DOFs)\n";
  return 0;
}

void emit_plots(const std::string& out_dir, const IdentificationResult& result,
                const Vector* ground_truth) {
  std::vector<int> highlight;
  for (const auto& row : result.report.damaged) highlight.push_back(row.member);
  write_deviation_bar_chart(join_path(out_dir, "deviation_ratios.svg"), result.final_k,
                            highlight);
  write_loss_curve(join_path(out_dir, "loss_curve.svg"), result.loss_history);
  write_error_bar_chart(join_path(out_dir, "member_errors.svg"), result.final_k, ground_truth,
                        5.0);
}

int cmd_identify(const CommonArgs& args, const std::string& measurements_path) {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario sc = load(args);
  SimulationPlan plan = sc.make_plan();

  MeasuredSeries series = read_trajectory_csv(measurements_path);
  MeasuredResponse measured = align_measurements(series, sc);

  TrajectoryEngine engine(plan, sc.loss);
  const Vector* gt = sc.ground_truth ? &*sc.ground_truth : nullptr;
  IdentificationResult result;
  try {
    result = identify(engine, measured, sc.prior, sc.schedule, gt);
  } catch (const DivergenceError& e) {
    log::error(e.what());
    return 4;
  }

  const std::string result_path = join_path(args.out_dir, "result.json");
  write_json_file(result_path, result_to_json(result, sc.config_echo));
  if (!args.no_plots) emit_plots(args.out_dir, result, gt);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = make_manifest("identify", {sc.path, sc.bridge.path, measurements_path},
                                sc.config_echo, sc.seed, wall, {result_path});
  write_json_file(join_path(args.out_dir, "manifest.json"), manifest);

  std::printf("identified %d epochs, final loss %.3e\n", result.epochs_run,
              result.loss_history.empty() ? 0.0 : result.loss_history.back());
  if (result.report.has_ground_truth) {
    std::printf("average accuracy %.2f%%, max damaged-member error %.2f%%, %zu false positive(s)\n",
                result.report.average_accuracy_pct, result.report.max_damaged_error_pct,
                result.report.false_positives.size());
  }
  for (const auto& row : result.report.damaged) {
    std::printf("  member %3d: predicted %.4f (truth %.4f, err %.2f%%)\n", row.member,
                row.predicted, row.ground_truth, row.relative_error_pct);
  }
  for (const auto& row : result.report.false_positives) {
    std::printf("  false positive: member %3d at %.4f (%.2f%%)\n", row.member, row.predicted,
                row.error_pct);
  }
  return 0;
}

int cmd_verify_gradients(const CommonArgs& args, double tolerance) {
  Scenario sc = load(args);
  SimulationPlan plan = sc.make_plan();
  TrajectoryEngine engine(plan, sc.loss);

  // Verify at a representative off-healthy point so K(k) is exercised.
  Vector k = Vector::Ones(sc.bridge.model->member_count());
  if (sc.ground_truth) k = 0.5 * (k + *sc.ground_truth);
  DeviationRatios ratios(k);

  // The target is generated from the scenario's ground truth so the loss
  // has structure.
  Trajectory traj = simulate_plan(plan, sc.ground_truth_ratios());
  int rail = 0;
  for (const auto& tr : plan.tracks) rail += tr.rail.n_modes;
  MeasuredSeries series = observe_trajectory(
      traj, sc.observed_dofs, observed_state_offsets(plan, sc.observed_dofs), rail);
  MeasuredResponse measured{series.disp, series.vel};

  TrajectoryEvaluation adj = trajectory_loss_gradient(engine, ratios, measured, true);
  Vector fd = finite_difference_gradient(engine, ratios, measured, 1e-6, args.jobs);

  // Components far below the gradient scale are held to an absolute bar of
  // 1e-3 * ||g||_inf, where central differences bottom out in roundoff.
  const double gmax = fd.cwiseAbs().maxCoeff();
  double worst = 0.0;
  int worst_member = -1;
  std::printf("%6s  %16s  %16s  %12s\n", "member", "adjoint", "finite-diff", "rel-error");
  for (int i = 0; i < fd.size(); ++i) {
    const double denom = std::max({std::abs(fd[i]), std::abs(adj.gradient[i]), 1e-3 * gmax});
    const double rel = std::abs(adj.gradient[i] - fd[i]) / denom;
    std::printf("%6d  %16.8e  %16.8e  %12.3e\n", i, adj.gradient[i], fd[i], rel);
    if (rel > worst) {
      worst = rel;
      worst_member = i;
    }
  }
  std::printf("worst component: member %d, relative error %.3e (tolerance %.1e)\n",
              worst_member, worst, tolerance);
  return worst <= tolerance ? 0 : 5;
}

int cmd_report(const std::string& result_path, const std::string& out_dir) {
  std::ifstream in(result_path);
  if (!in) throw InputError("cannot open result file '" + result_path + "'");
  json doc = json::parse(in);

  IdentificationResult result;
  const auto& kv = doc.at("final_deviation_ratios");
  result.final_k.resize(kv.size());
  for (size_t i = 0; i < kv.size(); ++i) result.final_k[i] = kv[i].get<double>();
  result.loss_history = doc.at("loss_history").get<std::vector<double>>();
  result.epochs_run = doc.value("epochs_run", 0);

  std::optional<Vector> gt;
  if (doc.contains("config") && doc["config"].contains("ground_truth_deviations")) {
    const auto& g = doc["config"]["ground_truth_deviations"];
    Vector v(g.size());
    for (size_t i = 0; i < g.size(); ++i) v[i] = g[i].get<double>();
    gt = v;
  }
  result.report = classify_and_report(result.final_k, gt ? &*gt : nullptr);

  std::filesystem::create_directories(out_dir);
  emit_plots(out_dir, result, gt ? &*gt : nullptr);

  std::printf("%-8s %-12s %-12s %s\n", "member", "k", "deviation%", "flag");
  for (int i = 0; i < result.final_k.size(); ++i) {
    const double dev = 100.0 * std::abs(result.final_k[i] - 1.0);
    std::printf("%-8d %-12.4f %-12.2f %s\n", i, result.final_k[i], dev,
                dev > 5.0 ? "beyond-threshold" : "");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spanid: truss bridge-train simulation and damage identification"};
  app.require_subcommand(1);

  CommonArgs sim_args, id_args, vg_args;
  std::string measurements_path, result_path, report_out = ".";
  double vg_tolerance = 1e-5;

  CLI::App* sim = app.add_subcommand("simulate", "Simulate a crossing and write response CSV");
  add_common(sim, sim_args);

  CLI::App* ident = app.add_subcommand("identify", "Identify deviation ratios from measurements");
  add_common(ident, id_args);
  ident->add_option("--measurements", measurements_path, "Response CSV from simulate")
      ->required();

  CLI::App* verify = app.add_subcommand("verify-gradients", "Adjoint vs finite differences");
  add_common(verify, vg_args);
  verify->add_option("--tolerance", vg_tolerance, "Relative error tolerance");

  CLI::App* report = app.add_subcommand("report", "Re-emit plots/table from a result JSON");
  report->add_option("--result", result_path, "result.json path")->required();
  report->add_option("--out", report_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (ident->parsed()) return cmd_identify(id_args, measurements_path);
    if (verify->parsed()) return cmd_verify_gradients(vg_args, vg_tolerance);
    if (report->parsed()) return cmd_report(result_path, report_out);
  } catch (const InputError& e) {
    log::error(e.what());
    return 2;
  } catch (const InstabilityError& e) {
    log::error(e.what());
    return 3;
  } catch (const DivergenceError& e) {
    log::error(e.what());
    return 4;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 2;
  }
  return 0;
}
