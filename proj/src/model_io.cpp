#include "spanid/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace spanid {

using nlohmann::json;

namespace {

json parse_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InputError(std::string(what) + " file not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string(what) + " file " + path + ": " + e.what());
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw InputError("missing field '" + where + "." + key + "'");
  }
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw InputError("field '" + where + "." + key + "' must be a number");
  return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    throw InputError("field '" + where + "." + key + "' must be an integer");
  }
  return v.get<int>();
}

MemberKind kind_from_string(const std::string& s, const std::string& where) {
  if (s == "bar") return MemberKind::kBar;
  if (s == "plane-frame") return MemberKind::kPlaneFrame;
  if (s == "space-frame") return MemberKind::kSpaceFrame;
  throw InputError("field '" + where + ".kind' has unknown value '" + s + "'");
}

}  // namespace

BridgeModelFile load_bridge_model(const std::string& path) {
  json doc = parse_file(path, "bridge model");

  const std::string units = require(doc, "units", "$").get<std::string>();
  if (units != "SI") throw InputError("field '$.units' must be \"SI\"");

  int dim = 2;
  if (doc.contains("dimension")) dim = doc["dimension"].get<int>();

  std::vector<Node> nodes;
  {
    const json& arr = require(doc, "nodes", "$");
    for (size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "$.nodes[" + std::to_string(i) + "]";
      Node node;
      node.id = require_int(arr[i], "id", where);
      const json& pos = require(arr[i], "position", where);
      if (!pos.is_array() || static_cast<int>(pos.size()) != dim) {
        throw InputError("field '" + where + ".position' must have " + std::to_string(dim) +
                         " coordinates");
      }
      for (int c = 0; c < dim; ++c) node.position[c] = pos[c].get<double>();
      nodes.push_back(node);
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });

  {
    const json& arr = require(doc, "supports", "$");
    for (size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "$.supports[" + std::to_string(i) + "]";
      const int node_id = require_int(arr[i], "node", where);
      if (node_id < 0 || node_id >= static_cast<int>(nodes.size())) {
        throw InputError("field '" + where + ".node' references an unknown node");
      }
      const json& fixed = require(arr[i], "fixed", where);
      if (!fixed.is_array() || static_cast<int>(fixed.size()) != dim) {
        throw InputError("field '" + where + ".fixed' must have " + std::to_string(dim) +
                         " flags");
      }
      for (int c = 0; c < dim; ++c) nodes[node_id].fixed[c] = fixed[c].get<bool>();
    }
  }

  std::vector<Member> members;
  {
    const json& arr = require(doc, "members", "$");
    for (size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "$.members[" + std::to_string(i) + "]";
      Member m;
      m.id = require_int(arr[i], "id", where);
      m.node_i = require_int(arr[i], "node_i", where);
      m.node_j = require_int(arr[i], "node_j", where);
      m.kind = kind_from_string(require(arr[i], "kind", where).get<std::string>(), where);
      m.elastic_modulus = require_number(arr[i], "elastic_modulus_pa", where);
      m.area = require_number(arr[i], "area_m2", where);
      m.density = require_number(arr[i], "density_kgpm3", where);
      if (arr[i].contains("second_moment_m4")) {
        const json& sm = arr[i]["second_moment_m4"];
        if (sm.is_array()) {
          m.second_moment_y = sm.at(0).get<double>();
          m.second_moment_z = sm.size() > 1 ? sm.at(1).get<double>() : m.second_moment_y;
        } else {
          m.second_moment_y = sm.get<double>();
          m.second_moment_z = m.second_moment_y;
        }
      }
      members.push_back(m);
    }
  }
  std::sort(members.begin(), members.end(),
            [](const Member& a, const Member& b) { return a.id < b.id; });

  DampingSpec damping;
  if (doc.contains("damping")) {
    const json& d = doc["damping"];
    damping.zeta = require_number(d, "zeta", "$.damping");
    if (d.contains("anchor_modes")) {
      damping.anchor_mode_lo = d["anchor_modes"].at(0).get<int>();
      damping.anchor_mode_hi = d["anchor_modes"].at(1).get<int>();
    }
    if (d.contains("omega_a_radps")) {
      damping.omega_a = d["omega_a_radps"].get<double>();
      damping.omega_b = require_number(d, "omega_b_radps", "$.damping");
    }
  }

  bool lumped = false;
  if (doc.contains("mass")) {
    const std::string f = require(doc["mass"], "formulation", "$.mass").get<std::string>();
    if (f == "lumped") lumped = true;
    else if (f != "consistent") throw InputError("field '$.mass.formulation' must be consistent or lumped");
  }

  BridgeModelFile out;
  out.path = path;
  out.model = std::make_shared<const BridgeModel>(std::move(nodes), std::move(members), dim,
                                                  damping, lumped);
  const BridgeModel& model = *out.model;
  const int vertical = dim - 1;

  if (doc.contains("track")) {
    const json& tracks = require(doc["track"], "tracks", "$.track");
    for (size_t ti = 0; ti < tracks.size(); ++ti) {
      const std::string where = "$.track.tracks[" + std::to_string(ti) + "]";
      const json& tj = tracks[ti];
      TrackTemplate track;
      track.name = tj.contains("name") ? tj["name"].get<std::string>()
                                       : "track" + std::to_string(ti);
      const json& rail = require(tj, "rail", where);
      track.rail.flexural_rigidity = require_number(rail, "flexural_rigidity_nm2", where + ".rail");
      track.rail.mass_per_length = require_number(rail, "mass_per_length_kgpm", where + ".rail");
      track.rail.n_modes = rail.contains("n_modes") ? rail["n_modes"].get<int>() : 5;

      const json& level = require(tj, "rail_level_nodes", where);
      for (const auto& v : level) track.rail_level_nodes.push_back(v.get<int>());
      if (track.rail_level_nodes.empty()) {
        throw InputError("field '" + where + ".rail_level_nodes' must not be empty");
      }
      double x_min = 1e300, x_max = -1e300;
      for (int nid : track.rail_level_nodes) {
        if (nid < 0 || nid >= model.node_count()) {
          throw InputError("field '" + where + ".rail_level_nodes' references node " +
                           std::to_string(nid));
        }
        x_min = std::min(x_min, model.nodes()[nid].position.x());
        x_max = std::max(x_max, model.nodes()[nid].position.x());
      }
      track.x_origin = x_min;
      track.rail.length = rail.contains("length_m") ? rail["length_m"].get<double>()
                                                    : x_max - x_min;

      const json& sleepers = require(tj, "sleepers", where);
      for (size_t si = 0; si < sleepers.size(); ++si) {
        const std::string swhere = where + ".sleepers[" + std::to_string(si) + "]";
        const json& sj = sleepers[si];
        Sleeper s;
        s.x = require_number(sj, "x_m", swhere);
        if (sj.contains("stiffness_npm")) s.stiffness = sj["stiffness_npm"].get<double>();
        if (sj.contains("damping_nspm")) s.damping = sj["damping_nspm"].get<double>();

        int node_id = -1;
        if (sj.contains("node")) {
          node_id = sj["node"].get<int>();
        } else {
          // Nearest rail-level node by position along the track.
          double best = 1e300;
          for (int nid : track.rail_level_nodes) {
            const double d = std::abs(model.nodes()[nid].position.x() - track.x_origin - s.x);
            if (d < best) {
              best = d;
              node_id = nid;
            }
          }
        }
        s.bridge_dof = model.dof_index(node_id, vertical);
        if (s.bridge_dof < 0) {
          throw InputError("sleeper at '" + swhere + "' attaches to node " +
                           std::to_string(node_id) + " whose vertical DOF is fixed");
        }
        track.layer.sleepers.push_back(s);
      }
      out.tracks.push_back(std::move(track));
    }
  }

  // Reduction partition: rail-level DOFs plus any explicitly listed masters.
  std::set<int> masters;
  bool auto_rail = true;
  if (doc.contains("reduction")) {
    const json& red = doc["reduction"];
    if (red.contains("auto_rail_level")) auto_rail = red["auto_rail_level"].get<bool>();
    if (red.contains("master_dofs")) {
      for (const auto& v : red["master_dofs"]) {
        const int dof = v.get<int>();
        if (dof < 0 || dof >= model.free_dof_count()) {
          throw InputError("field '$.reduction.master_dofs' has out-of-range DOF " +
                           std::to_string(dof));
        }
        masters.insert(dof);
      }
    }
  }
  if (auto_rail) {
    for (const TrackTemplate& track : out.tracks) {
      for (int nid : track.rail_level_nodes) {
        for (int c = 0; c < dim; ++c) {
          const int dof = model.dof_index(nid, c);
          if (dof >= 0) masters.insert(dof);
        }
      }
    }
  }
  out.reduction_masters.assign(masters.begin(), masters.end());
  return out;
}

TrainConfig load_train(const std::string& path) {
  json doc = parse_file(path, "train");
  TrainConfig train;
  const bool has_mps = doc.contains("velocity_mps");
  const bool has_mph = doc.contains("velocity_mph");
  if (has_mps == has_mph) {
    throw InputError("train file must set exactly one of velocity_mps or velocity_mph");
  }
  train.velocity_mps = has_mps ? doc["velocity_mps"].get<double>()
                               : doc["velocity_mph"].get<double>() * 0.44704;
  if (doc.contains("entry_time_s")) train.entry_time_s = doc["entry_time_s"].get<double>();
  const json& axles = require(doc, "axles", "$");
  for (size_t i = 0; i < axles.size(); ++i) {
    const std::string where = "$.axles[" + std::to_string(i) + "]";
    Axle a;
    a.mass_kg = require_number(axles[i], "mass_kg", where);
    a.load_n = require_number(axles[i], "load_n", where);
    a.offset_m = require_number(axles[i], "offset_m", where);
    train.axles.push_back(a);
  }
  train.validate();
  return train;
}

}  // namespace spanid
