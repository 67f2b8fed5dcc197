#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spanid/learn.hpp"

namespace spanid {

inline constexpr const char* kToolVersion = "0.1.0";

nlohmann::json result_to_json(const IdentificationResult& result,
                              const nlohmann::json& config_echo);

nlohmann::json make_manifest(const std::string& command,
                             const std::vector<std::string>& inputs,
                             const nlohmann::json& resolved_config, std::uint64_t seed,
                             double wall_clock_s,
                             const std::vector<std::string>& outputs);

void write_json_file(const std::string& path, const nlohmann::json& doc);

/// Bar chart of deviation ratios per member; members in `highlight` are
/// drawn in a second color.
void write_deviation_bar_chart(const std::string& path, const Vector& k,
                               const std::vector<int>& highlight);

/// Training loss curve on a log10 vertical axis.
void write_loss_curve(const std::string& path, const std::vector<double>& loss_history);

/// Per-member error bars in percent with the false-positive threshold line.
void write_error_bar_chart(const std::string& path, const Vector& k,
                           const Vector* ground_truth, double threshold_pct);

}  // namespace spanid
