#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spanid/coupling.hpp"
#include "spanid/fe_model.hpp"

namespace spanid {

/// One track of the model file: rail properties, its rail-level nodes, and
/// the sleeper layer with attachments resolved to bridge DOFs.
struct TrackTemplate {
  std::string name;
  RailModel rail;
  std::vector<int> rail_level_nodes;
  InteractionLayer layer;
  double x_origin = 0.0;  // world x of rail coordinate 0
};

struct BridgeModelFile {
  std::shared_ptr<const BridgeModel> model;
  std::vector<TrackTemplate> tracks;
  std::vector<int> reduction_masters;  // resolved master DOF list, ascending
  std::string path;
};

/// Parses the bridge model JSON (keys: units, nodes, members, supports,
/// damping, mass, track, reduction). Parse and schema errors carry the
/// offending field path.
BridgeModelFile load_bridge_model(const std::string& path);

/// Train JSON: velocity_mps or velocity_mph, entry_time_s, axles.
TrainConfig load_train(const std::string& path);

}  // namespace spanid
