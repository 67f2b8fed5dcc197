#include "spanid/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace spanid {

using nlohmann::json;

namespace {

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("scenario file not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("scenario file " + path + ": " + e.what());
  }
}

std::string resolve_path(const std::string& scenario_path, const std::string& ref) {
  std::filesystem::path p(ref);
  if (p.is_absolute()) return ref;
  return (std::filesystem::path(scenario_path).parent_path() / p).string();
}

}  // namespace

SimulationPlan Scenario::make_plan() const {
  SimulationPlan plan;
  plan.model = bridge.model.get();
  plan.scheme = scheme;
  plan.dt = dt;
  plan.steps = steps;
  plan.batch_count = schedule.batch_count;
  plan.reduce = reduce;
  plan.freeze_transform = freeze_transform;
  if (reduce) {
    plan.partition = MasterSlavePartition::from_masters(bridge.reduction_masters,
                                                        bridge.model->free_dof_count());
  }
  for (size_t i = 0; i < bridge.tracks.size(); ++i) {
    CoupledLtvSystem::Track track;
    track.rail = bridge.tracks[i].rail;
    track.layer = bridge.tracks[i].layer;
    track.train.velocity_mps = train.velocity_mps;
    track.train.entry_time_s = train.entry_time_s;
    if (static_cast<int>(i) == track_index) track.train.axles = train.axles;
    plan.tracks.push_back(std::move(track));
  }
  return plan;
}

DeviationRatios Scenario::ground_truth_ratios() const {
  if (ground_truth) return DeviationRatios(*ground_truth);
  return DeviationRatios::healthy(bridge.model->member_count());
}

Scenario load_scenario(const std::string& path) {
  json doc = parse_file(path);
  Scenario sc;
  sc.path = path;

  if (!doc.contains("bridge_model")) throw InputError("scenario: missing field 'bridge_model'");
  if (!doc.contains("train")) throw InputError("scenario: missing field 'train'");
  sc.bridge = load_bridge_model(resolve_path(path, doc["bridge_model"].get<std::string>()));
  sc.train = load_train(resolve_path(path, doc["train"].get<std::string>()));
  if (sc.bridge.tracks.empty()) {
    throw InputError("scenario: bridge model has no track definitions");
  }
  sc.track_index = doc.value("track", 0);
  if (sc.track_index < 0 || sc.track_index >= static_cast<int>(sc.bridge.tracks.size())) {
    throw InputError("scenario: field 'track' is out of range");
  }

  sc.scheme = scheme_from_string(doc.value("scheme", std::string("rk4")));
  if (!doc.contains("dt_s")) throw InputError("scenario: missing field 'dt_s'");
  sc.dt = doc["dt_s"].get<double>();
  if (!(sc.dt > 0)) throw InputError("scenario: field 'dt_s' must be positive");

  sc.reduce = doc.value("reduce", false);
  sc.freeze_transform = doc.value("freeze_transform", false);
  sc.noise_level = doc.value("noise_level", 0.0);
  sc.seed = doc.value("seed", std::uint64_t{0});

  const int n_members = sc.bridge.model->member_count();
  if (doc.contains("ground_truth_deviations") && !doc["ground_truth_deviations"].is_null()) {
    const json& gt = doc["ground_truth_deviations"];
    Vector k = Vector::Ones(n_members);
    if (gt.is_array() && !gt.empty() && gt[0].is_object()) {
      for (const auto& entry : gt) {
        const int member = entry.at("member").get<int>();
        if (member < 0 || member >= n_members) {
          throw InputError("scenario: ground_truth_deviations references member " +
                           std::to_string(member));
        }
        k[member] = entry.at("k").get<double>();
      }
    } else if (gt.is_array()) {
      if (static_cast<int>(gt.size()) != n_members) {
        throw InputError("scenario: dense ground_truth_deviations must list every member");
      }
      for (int i = 0; i < n_members; ++i) k[i] = gt[i].get<double>();
    } else {
      throw InputError("scenario: field 'ground_truth_deviations' must be an array");
    }
    sc.ground_truth = k;
  }

  if (doc.contains("prior")) {
    for (const auto& entry : doc["prior"]) {
      PriorEntry pe;
      pe.member = entry.at("member").get<int>();
      pe.k_prior = entry.at("k_prior").get<double>();
      pe.confidence = entry.at("confidence").get<double>();
      sc.prior.entries.push_back(pe);
    }
  }
  sc.prior.source = doc.value("prior_source", std::string("inspection"));
  if (doc.contains("gradient_scales")) {
    sc.prior.scales.s = Vector::Ones(n_members);
    for (const auto& entry : doc["gradient_scales"]) {
      const int member = entry.at("member").get<int>();
      if (member < 0 || member >= n_members) {
        throw InputError("scenario: gradient_scales references member " +
                         std::to_string(member));
      }
      sc.prior.scales.s[member] = entry.at("s").get<double>();
    }
  }

  if (doc.contains("loss")) {
    const json& lj = doc["loss"];
    sc.loss.huber_beta = lj.value("huber_beta", 1.0);
    sc.loss.disp_weight = lj.value("disp_weight", 0.9);
    sc.loss.accel_weight = lj.value("accel_weight", 0.1);
    sc.loss.use_acceleration = lj.value("use_acceleration", false);
  }

  if (doc.contains("schedule")) {
    const json& sj = doc["schedule"];
    sc.schedule.optimizer =
        optimizer_from_string(sj.value("optimizer", std::string("rmsprop")));
    sc.schedule.learning_rate = sj.value("learning_rate", 3e-3);
    sc.schedule.max_epochs = sj.value("max_epochs", 300);
    sc.schedule.batch_count = sj.value("batch_count", 4);
    sc.schedule.tolerance = sj.value("tolerance", 1e-5);
    sc.schedule.stall_window = sj.value("stall_window", 20);
    if (sj.contains("cyclic")) {
      CyclicLrSpec cyc;
      const json& cj = sj["cyclic"];
      cyc.base = cj.at("base").get<double>();
      cyc.max = cj.at("max").get<double>();
      cyc.step_size = cj.value("step_size", 50);
      cyc.gamma = cj.value("gamma", 1.0);
      sc.schedule.cyclic = cyc;
    }
  }

  // Duration: explicit, or the crossing of the loaded track.
  if (doc.contains("duration_s") && !doc["duration_s"].is_null()) {
    sc.duration = doc["duration_s"].get<double>();
  } else {
    const TrackTemplate& tr = sc.bridge.tracks[sc.track_index];
    sc.duration = sc.train.exit_time(tr.rail.length);
  }
  sc.steps = static_cast<int>(std::floor(sc.duration / sc.dt + 1e-9));
  if (sc.steps < 1) throw InputError("scenario: duration shorter than one timestep");
  if (sc.schedule.batch_count > sc.steps) {
    throw InputError("scenario: batch count exceeds the step count");
  }

  // Observed DOFs: explicit list, or every bridge DOF (every master when
  // reduced).
  if (doc.contains("observed_dofs") && !doc["observed_dofs"].empty()) {
    for (const auto& v : doc["observed_dofs"]) sc.observed_dofs.push_back(v.get<int>());
  } else if (sc.reduce) {
    sc.observed_dofs = sc.bridge.reduction_masters;
  } else {
    sc.observed_dofs.resize(sc.bridge.model->free_dof_count());
    for (size_t i = 0; i < sc.observed_dofs.size(); ++i) sc.observed_dofs[i] = (int)i;
  }
  sc.loss.observed_dofs = sc.observed_dofs;

  // Echo of the fully resolved configuration.
  json echo;
  echo["bridge_model"] = sc.bridge.path;
  echo["train"] = resolve_path(path, doc["train"].get<std::string>());
  echo["track"] = sc.track_index;
  echo["scheme"] = scheme_name(sc.scheme);
  echo["dt_s"] = sc.dt;
  echo["duration_s"] = sc.duration;
  echo["steps"] = sc.steps;
  echo["observed_dofs"] = sc.observed_dofs;
  echo["noise_level"] = sc.noise_level;
  echo["seed"] = sc.seed;
  echo["reduce"] = sc.reduce;
  echo["freeze_transform"] = sc.freeze_transform;
  if (sc.ground_truth) {
    echo["ground_truth_deviations"] = std::vector<double>(
        sc.ground_truth->data(), sc.ground_truth->data() + sc.ground_truth->size());
  }
  {
    json pj = json::array();
    DeviationRatios initial = apply_prior(sc.prior, n_members);
    for (const PriorEntry& e : sc.prior.entries) {
      pj.push_back({{"member", e.member},
                    {"k_prior", e.k_prior},
                    {"confidence", e.confidence},
                    {"k_initial", initial[e.member]}});
    }
    echo["prior"] = pj;
    if (sc.prior.scales.s.size() > 0) {
      json gs = json::array();
      for (int i = 0; i < n_members; ++i) {
        if (sc.prior.scales.s[i] != 1.0) gs.push_back({{"member", i}, {"s", sc.prior.scales.s[i]}});
      }
      echo["gradient_scales"] = gs;
    }
  }
  echo["loss"] = {{"huber_beta", sc.loss.huber_beta},
                  {"disp_weight", sc.loss.disp_weight},
                  {"accel_weight", sc.loss.accel_weight},
                  {"use_acceleration", sc.loss.use_acceleration}};
  json sched = {{"optimizer", optimizer_name(sc.schedule.optimizer)},
                {"learning_rate", sc.schedule.learning_rate},
                {"max_epochs", sc.schedule.max_epochs},
                {"batch_count", sc.schedule.batch_count},
                {"tolerance", sc.schedule.tolerance},
                {"stall_window", sc.schedule.stall_window}};
  if (sc.schedule.cyclic) {
    sched["cyclic"] = {{"base", sc.schedule.cyclic->base},
                       {"max", sc.schedule.cyclic->max},
                       {"step_size", sc.schedule.cyclic->step_size},
                       {"gamma", sc.schedule.cyclic->gamma}};
  }
  echo["schedule"] = sched;
  sc.config_echo = std::move(echo);
  return sc;
}

}  // namespace spanid
