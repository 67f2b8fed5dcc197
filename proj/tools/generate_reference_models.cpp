// Emits the reference bridge/train/scenario files under data/ and prints
// sanity diagnostics (definiteness, frequency ranges, reduction size).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spanid/fe_model.hpp"
#include "spanid/model_io.hpp"
#include "spanid/reduction.hpp"

using nlohmann::json;
using namespace spanid;

namespace {

constexpr double kSpan = 95.0;
constexpr double kHeight = 21.0;
constexpr double kWidth = 10.0;
constexpr int kPanels = 9;
constexpr double kE = 2.0e11;
constexpr double kRho = 7850.0;
constexpr double kGravity = 9.81;

double panel_x(int i) { return kSpan * i / kPanels; }

json member_json(int id, const char* kind, int ni, int nj, double area, double second_moment) {
  json m = {{"id", id},          {"kind", kind},
            {"node_i", ni},      {"node_j", nj},
            {"elastic_modulus_pa", kE}, {"area_m2", area},
            {"density_kgpm3", kRho}};
  if (std::string(kind) != "bar") m["second_moment_m4"] = second_moment;
  return m;
}

// One truss plane: 10 bottom + 10 top nodes, 9 chord panels each, 10
// verticals, 9 diagonals. Diagonals run t_i -> b_{i+1} on the left half
// (i = 0..4) and b_i -> t_{i+1} on the right (i = 5..8); top node t_5
// carries no diagonal, so the vertical b5-t5 is the classic zero-force
// member (member offset 23 within the plane).
void emit_plane(const char* kind, int bottom0, int top0, int id0, json& out) {
  const double a_chord = 0.04, i_chord = 4.0e-4;
  const double a_vert = 0.015, i_vert = 1.5e-4;
  const double a_diag = 0.02, i_diag = 2.0e-4;
  int id = id0;
  for (int i = 0; i < kPanels; ++i)
    out.push_back(member_json(id++, kind, bottom0 + i, bottom0 + i + 1, a_chord, i_chord));
  for (int i = 0; i < kPanels; ++i)
    out.push_back(member_json(id++, kind, top0 + i, top0 + i + 1, a_chord, i_chord));
  for (int i = 0; i <= kPanels; ++i)
    out.push_back(member_json(id++, kind, bottom0 + i, top0 + i, a_vert, i_vert));
  for (int i = 0; i <= 4; ++i)
    out.push_back(member_json(id++, kind, top0 + i, bottom0 + i + 1, a_diag, i_diag));
  for (int i = 5; i < kPanels; ++i)
    out.push_back(member_json(id++, kind, bottom0 + i, top0 + i + 1, a_diag, i_diag));
}

json track_json(const std::string& name, const std::vector<int>& rail_level_nodes,
                const std::vector<double>& sleeper_x) {
  json sleepers = json::array();
  for (double x : sleeper_x) {
    sleepers.push_back({{"x_m", x}, {"stiffness_npm", 2.0e8}, {"damping_nspm", 5.0e4}});
  }
  return {{"name", name},
          {"rail",
           {{"flexural_rigidity_nm2", 1.28e7}, {"mass_per_length_kgpm", 120.0}, {"n_modes", 5}}},
          {"rail_level_nodes", rail_level_nodes},
          {"sleepers", sleepers}};
}

json bridge_2d() {
  json doc;
  doc["units"] = "SI";
  doc["dimension"] = 2;

  json nodes = json::array();
  for (int i = 0; i <= kPanels; ++i)
    nodes.push_back({{"id", i}, {"position", {panel_x(i), 0.0}}});
  for (int i = 0; i <= kPanels; ++i)
    nodes.push_back({{"id", 10 + i}, {"position", {panel_x(i), kHeight}}});
  doc["nodes"] = nodes;

  doc["supports"] = json::array({{{"node", 0}, {"fixed", {true, true}}},
                                 {{"node", 9}, {"fixed", {false, true}}}});

  json members = json::array();
  emit_plane("plane-frame", 0, 10, 0, members);
  doc["members"] = members;

  doc["damping"] = {{"zeta", 0.02}, {"anchor_modes", {1, 2}}};
  doc["mass"] = {{"formulation", "consistent"}};

  std::vector<int> level(10);
  for (int i = 0; i < 10; ++i) level[i] = i;
  std::vector<double> sleeper_x;
  for (int i = 1; i <= 8; ++i) sleeper_x.push_back(panel_x(i));
  doc["track"] = {{"tracks", json::array({track_json("main", level, sleeper_x)})}};
  doc["reduction"] = {{"auto_rail_level", true}};
  return doc;
}

json bridge_3d() {
  json doc;
  doc["units"] = "SI";
  doc["dimension"] = 3;

  json nodes = json::array();
  for (int i = 0; i <= kPanels; ++i)                 // 0..9   bottom left
    nodes.push_back({{"id", i}, {"position", {panel_x(i), 0.0, 0.0}}});
  for (int i = 0; i <= kPanels; ++i)                 // 10..19 bottom right
    nodes.push_back({{"id", 10 + i}, {"position", {panel_x(i), kWidth, 0.0}}});
  for (int i = 0; i <= kPanels; ++i)                 // 20..29 top left
    nodes.push_back({{"id", 20 + i}, {"position", {panel_x(i), 0.0, kHeight}}});
  for (int i = 0; i <= kPanels; ++i)                 // 30..39 top right
    nodes.push_back({{"id", 30 + i}, {"position", {panel_x(i), kWidth, kHeight}}});
  doc["nodes"] = nodes;

  doc["supports"] = json::array({{{"node", 0}, {"fixed", {true, true, true}}},
                                 {{"node", 9}, {"fixed", {false, true, true}}},
                                 {{"node", 10}, {"fixed", {true, false, true}}},
                                 {{"node", 19}, {"fixed", {false, false, true}}}});

  json members = json::array();
  emit_plane("space-frame", 0, 20, 0, members);    // left plane,  members 0..36
  emit_plane("space-frame", 10, 30, 37, members);  // right plane, members 37..73
  int id = 74;
  // Floor beams between the bottom chords; the sleepers bear on their ends.
  for (int i = 0; i <= kPanels; ++i)
    members.push_back(member_json(id++, "space-frame", i, 10 + i, 0.03, 5.0e-4));
  // Bottom lateral bracing, alternating.
  for (int i = 0; i < kPanels; ++i) {
    if (i % 2 == 0) members.push_back(member_json(id++, "bar", i, 10 + i + 1, 0.008, 0));
    else            members.push_back(member_json(id++, "bar", 10 + i, i + 1, 0.008, 0));
  }
  // Top struts and top lateral bracing.
  for (int i = 0; i <= kPanels; ++i)
    members.push_back(member_json(id++, "bar", 20 + i, 30 + i, 0.008, 0));
  for (int i = 0; i < kPanels; ++i) {
    if (i % 2 == 0) members.push_back(member_json(id++, "bar", 20 + i, 30 + i + 1, 0.008, 0));
    else            members.push_back(member_json(id++, "bar", 30 + i, 20 + i + 1, 0.008, 0));
  }
  // End portal diagonals against transverse sway of the top chords.
  members.push_back(member_json(id++, "bar", 20, 10, 0.01, 0));
  members.push_back(member_json(id++, "bar", 29, 19, 0.01, 0));
  doc["members"] = members;

  doc["damping"] = {{"zeta", 0.02}, {"anchor_modes", {1, 2}}};
  doc["mass"] = {{"formulation", "consistent"}};

  std::vector<int> left(10), right(10);
  for (int i = 0; i < 10; ++i) {
    left[i] = i;
    right[i] = 10 + i;
  }
  std::vector<double> sleeper_x;
  for (int i = 1; i <= 8; ++i) sleeper_x.push_back(panel_x(i));
  doc["track"] = {{"tracks", json::array({track_json("left", left, sleeper_x),
                                          track_json("right", right, sleeper_x)})}};
  doc["reduction"] = {{"auto_rail_level", true}, {"master_dofs", json::array()}};
  return doc;
}

json train_json(double velocity_mph, bool loco_only) {
  json axles = json::array();
  auto push = [&](double offset, double mass) {
    axles.push_back({{"mass_kg", mass}, {"load_n", mass * kGravity}, {"offset_m", offset}});
  };
  push(0.0, 29000.0);
  push(2.6, 29000.0);
  push(14.0, 29000.0);
  push(16.6, 29000.0);
  if (!loco_only) {
    for (int car = 0; car < 6; ++car) {
      const double s = 22.0 + 18.0 * car;
      push(s, 22000.0);
      push(s + 1.8, 22000.0);
      push(s + 12.7, 22000.0);
      push(s + 14.5, 22000.0);
    }
  }
  return {{"velocity_mph", velocity_mph}, {"entry_time_s", 0.0}, {"axles", axles}};
}

void write(const std::string& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  std::cout << "wrote " << path << "\n";
}

void check_model(const std::string& path, bool reduced_check) {
  BridgeModelFile file = load_bridge_model(path);
  const BridgeModel& model = *file.model;
  Vector freqs = natural_frequencies_hz(
      model.assemble_stiffness(DeviationRatios::healthy(model.member_count())), model.mass());
  std::printf("  %s: %d members, %d free DOFs, f1=%.3f Hz, f_max=%.1f Hz\n", path.c_str(),
              model.member_count(), model.free_dof_count(), freqs[0],
              freqs[freqs.size() - 1]);
  if (reduced_check) {
    auto partition =
        MasterSlavePartition::from_masters(file.reduction_masters, model.free_dof_count());
    Matrix k = model.assemble_stiffness(DeviationRatios::healthy(model.member_count()));
    GuyanTransform t = guyan_transform(k, partition);
    SystemMatrices full{model.mass(), model.baseline_damping(), k};
    SystemMatrices red = reduce_system(full, t);
    Vector rfreqs = natural_frequencies_hz(red.stiffness, red.mass);
    std::printf("  reduced: %d masters, f1=%.3f Hz, f_max=%.1f Hz (full %.1f Hz)\n",
                partition.master_count(), rfreqs[0], rfreqs[rfreqs.size() - 1],
                freqs[freqs.size() - 1]);
    for (int i = 0; i < 5 && i < rfreqs.size(); ++i) {
      std::printf("    mode %d: full %.4f Hz, reduced %.4f Hz (%.2f%%)\n", i + 1, freqs[i],
                  rfreqs[i], 100.0 * (rfreqs[i] - freqs[i]) / freqs[i]);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir);
  auto at = [&](const std::string& name) { return dir + "/" + name; };

  write(at("bridge_2d.json"), bridge_2d());

  json b3 = bridge_3d();
  write(at("bridge_3d.json"), b3);
  {
    // Extra masters beyond the rail level: every top-chord lateral DOF (the
    // lowest modes are top-chord sway) and the midspan top-chord verticals
    // where responses are measured. Resolved against the actual DOF
    // numbering, then rewritten.
    BridgeModelFile file = load_bridge_model(at("bridge_3d.json"));
    json masters = json::array();
    for (int node = 20; node < 40; ++node) {
      const int dof = file.model->dof_index(node, 1);
      if (dof >= 0) masters.push_back(dof);
    }
    for (int node : {24, 25, 34, 35}) {
      const int dof = file.model->dof_index(node, 2);
      if (dof >= 0) masters.push_back(dof);
    }
    b3["reduction"]["master_dofs"] = masters;
    write(at("bridge_3d.json"), b3);
  }

  write(at("train_freight_50mph.json"), train_json(50.0, false));
  write(at("train_freight_80mph.json"), train_json(80.0, false));
  write(at("train_loco_50mph.json"), train_json(50.0, true));

  std::cout << "model diagnostics:\n";
  check_model(at("bridge_2d.json"), true);
  check_model(at("bridge_3d.json"), true);

  // Scenarios. Member numbering follows the generator layout above.
  json case1 = {
      {"bridge_model", "bridge_2d.json"},
      {"train", "train_freight_50mph.json"},
      {"scheme", "rk4"},
      {"dt_s", 4.0e-4},
      {"seed", 20240501},
      {"noise_level", 0.0},
      {"ground_truth_deviations",
       json::array({{{"member", 4}, {"k", 0.7}},     // bottom chord, midspan
                    {{"member", 32}, {"k", 1.25}},   // diagonal t4-b5
                    {{"member", 20}, {"k", 0.8}}})}, // vertical b2-t2
      {"gradient_scales", json::array({{{"member", 23}, {"s", 1.0e4}}})},
      {"schedule",
       {{"optimizer", "rmsprop"}, {"learning_rate", 3.0e-3}, {"max_epochs", 300},
        {"batch_count", 4}, {"tolerance", 1.0e-6}}}};
  write(at("scenario_2d_case1.json"), case1);

  json noisy = case1;
  noisy["noise_level"] = 0.05;
  noisy["seed"] = 20240502;
  write(at("scenario_2d_noise.json"), noisy);

  json verify2d = {{"bridge_model", "bridge_2d.json"},
                   {"train", "train_loco_50mph.json"},
                   {"scheme", "rk4"},
                   {"dt_s", 4.0e-4},
                   {"seed", 7},
                   {"ground_truth_deviations",
                    json::array({{{"member", 4}, {"k", 0.85}}, {{"member", 20}, {"k", 1.1}}})},
                   {"schedule", {{"batch_count", 4}, {"max_epochs", 1}}}};
  write(at("scenario_2d_verify.json"), verify2d);

  json cluster = {
      {"bridge_model", "bridge_3d.json"},
      {"train", "train_freight_80mph.json"},
      {"track", 0},
      {"scheme", "radau"},
      {"dt_s", 2.0e-3},
      {"reduce", true},
      {"seed", 20240503},
      {"ground_truth_deviations",
       json::array({{{"member", 4}, {"k", 0.75}},    // bottom chord b4-b5 left
                    {{"member", 22}, {"k", 0.86}},   // vertical b4-t4 left
                    {{"member", 32}, {"k", 0.83}},   // diagonal t4-b5 left
                    {{"member", 78}, {"k", 0.91}}})},  // floor beam at panel 4
      {"schedule",
       {{"optimizer", "rmsprop"}, {"max_epochs", 400}, {"batch_count", 48},
        {"tolerance", 1.0e-6},
        {"cyclic", {{"base", 5.0e-4}, {"max", 1.0e-3}, {"step_size", 50}, {"gamma", 1.0}}}}}};
  {
    // Scale the weakly observable classes: verticals, top struts, top
    // lateral bracing, end portals.
    json scales = json::array();
    auto scale_range = [&](int lo, int hi) {
      for (int m = lo; m <= hi; ++m) scales.push_back({{"member", m}, {"s", 1.0e3}});
    };
    scale_range(18, 27);
    scale_range(55, 64);
    scale_range(93, 113);
    cluster["gradient_scales"] = scales;

    // Observe the rail-level master DOFs only (the auto set).
    BridgeModelFile file = load_bridge_model(at("bridge_3d.json"));
    json observed = json::array();
    for (int node = 0; node < 20; ++node) {
      for (int c = 0; c < 3; ++c) {
        const int dof = file.model->dof_index(node, c);
        if (dof >= 0) observed.push_back(dof);
      }
    }
    cluster["observed_dofs"] = observed;
  }
  write(at("scenario_3d_cluster.json"), cluster);

  json verify3d = {{"bridge_model", "bridge_3d.json"},
                   {"train", "train_loco_50mph.json"},
                   {"track", 0},
                   {"scheme", "radau"},
                   {"dt_s", 2.0e-3},
                   {"reduce", true},
                   {"seed", 11},
                   {"ground_truth_deviations",
                    json::array({{{"member", 4}, {"k", 0.8}}, {{"member", 78}, {"k", 1.2}}})},
                   {"schedule", {{"batch_count", 8}, {"max_epochs", 1}}}};
  write(at("scenario_3d_verify.json"), verify3d);

  std::cout << "done\n";
  return 0;
}
