#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spanid/gradients.hpp"
#include "spanid/learn.hpp"
#include "spanid/model_io.hpp"

namespace spanid {

/// A fully resolved run description: model, train, integration, observation,
/// damage injection, noise, prior, and schedule.
struct Scenario {
  std::string path;
  BridgeModelFile bridge;
  TrainConfig train;
  int track_index = 0;

  Scheme scheme = Scheme::kRk4;
  double dt = 0.0;
  double duration = 0.0;  // resolved (default: crossing end time)
  int steps = 0;

  std::vector<int> observed_dofs;
  std::optional<Vector> ground_truth;
  double noise_level = 0.0;
  std::uint64_t seed = 0;

  PriorSpec prior;
  LossConfig loss;
  TrainingSchedule schedule;
  bool reduce = false;
  bool freeze_transform = false;

  nlohmann::json config_echo;  // all defaults materialized

  SimulationPlan make_plan() const;
  DeviationRatios ground_truth_ratios() const;  // healthy when unset
};

Scenario load_scenario(const std::string& path);

}  // namespace spanid
