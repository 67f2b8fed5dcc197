#include "spanid/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace spanid {

using nlohmann::json;

namespace {
std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}
}  // namespace

json result_to_json(const IdentificationResult& result, const json& config_echo) {
  json doc;
  doc["final_deviation_ratios"] = to_std(result.final_k);
  doc["loss_history"] = result.loss_history;
  doc["primary_loss_history"] = result.primary_loss_history;
  {
    json hist = json::array();
    for (const Vector& k : result.k_history) hist.push_back(to_std(k));
    doc["deviation_ratio_history"] = std::move(hist);
  }
  doc["epochs_run"] = result.epochs_run;
  doc["converged_early"] = result.converged_early;
  doc["wall_clock_s"] = result.wall_clock_s;

  const DamageReport& rep = result.report;
  json damaged = json::array();
  for (const auto& row : rep.damaged) {
    damaged.push_back({{"member", row.member},
                       {"ground_truth", row.ground_truth},
                       {"predicted", row.predicted},
                       {"relative_error_pct", row.relative_error_pct}});
  }
  json fps = json::array();
  for (const auto& row : rep.false_positives) {
    fps.push_back(
        {{"member", row.member}, {"predicted", row.predicted}, {"error_pct", row.error_pct}});
  }
  doc["damaged_members"] = std::move(damaged);
  doc["false_positives"] = std::move(fps);
  doc["average_accuracy_pct"] = rep.average_accuracy_pct;
  doc["max_damaged_error_pct"] = rep.max_damaged_error_pct;
  doc["has_ground_truth"] = rep.has_ground_truth;
  doc["config"] = config_echo;
  doc["tool_version"] = kToolVersion;
  return doc;
}

json make_manifest(const std::string& command, const std::vector<std::string>& inputs,
                   const json& resolved_config, std::uint64_t seed, double wall_clock_s,
                   const std::vector<std::string>& outputs) {
  json doc;
  doc["command"] = command;
  doc["inputs"] = inputs;
  doc["config"] = resolved_config;
  doc["seed"] = seed;
  doc["tool_version"] = kToolVersion;
  doc["wall_clock_s"] = wall_clock_s;
  doc["outputs"] = outputs;
  return doc;
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
}

namespace {

struct SvgCanvas {
  std::ostringstream body;
  double width, height;

  SvgCanvas(double w, double h) : width(w), height(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            const std::string& dash = "") {
    body << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
         << "\" stroke=\"" << stroke << "\" stroke-width=\"1\"";
    if (!dash.empty()) body << " stroke-dasharray=\"" << dash << "\"";
    body << "/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start") {
    body << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s
         << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body << x << ',' << y << ' ';
    body << "\"/>\n";
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

}  // namespace

void write_deviation_bar_chart(const std::string& path, const Vector& k,
                               const std::vector<int>& highlight) {
  const int n = static_cast<int>(k.size());
  const double margin = 50, bar_area_w = std::max(400.0, 9.0 * n), h = 300;
  SvgCanvas svg(bar_area_w + 2 * margin, h + 2 * margin);

  const double k_max = std::max(1.5, k.maxCoeff() * 1.1);
  auto ybar = [&](double v) { return margin + h - h * v / k_max; };

  svg.line(margin, margin + h, margin + bar_area_w, margin + h, "black");
  svg.line(margin, margin, margin, margin + h, "black");
  svg.line(margin, ybar(1.0), margin + bar_area_w, ybar(1.0), "gray", "4 3");
  svg.text(margin - 4, ybar(1.0) + 4, "1.0", 10, "end");

  const double bw = bar_area_w / n;
  for (int i = 0; i < n; ++i) {
    const bool hot = std::find(highlight.begin(), highlight.end(), i) != highlight.end();
    svg.rect(margin + i * bw + 1, ybar(k[i]), bw - 2, margin + h - ybar(k[i]),
             hot ? "#c0392b" : "#5b7fa6");
    if (n <= 60 || i % 5 == 0) {
      svg.text(margin + (i + 0.5) * bw, margin + h + 12, std::to_string(i), 8, "middle");
    }
  }
  svg.text(margin, margin - 10, "deviation ratio per member", 13);
  svg.save(path);
}

void write_loss_curve(const std::string& path, const std::vector<double>& loss_history) {
  const double margin = 55, w = 520, h = 300;
  SvgCanvas svg(w + 2 * margin, h + 2 * margin);
  svg.line(margin, margin + h, margin + w, margin + h, "black");
  svg.line(margin, margin, margin, margin + h, "black");
  if (!loss_history.empty()) {
    double lo = 1e300, hi = -1e300;
    for (double v : loss_history) {
      if (v > 0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
    if (hi <= lo) hi = lo + 1;
    std::vector<std::pair<double, double>> pts;
    const int n = static_cast<int>(loss_history.size());
    for (int i = 0; i < n; ++i) {
      const double v = loss_history[i] > 0 ? std::log10(loss_history[i]) : lo;
      pts.push_back({margin + w * i / std::max(1, n - 1),
                     margin + h - h * (v - lo) / (hi - lo)});
    }
    svg.polyline(pts, "#c0392b");
    svg.text(margin - 6, margin + 8, "1e" + fmt(hi, 2), 10, "end");
    svg.text(margin - 6, margin + h, "1e" + fmt(lo, 2), 10, "end");
  }
  svg.text(margin, margin - 10, "training loss (log scale) vs epoch", 13);
  svg.save(path);
}

void write_error_bar_chart(const std::string& path, const Vector& k,
                           const Vector* ground_truth, double threshold_pct) {
  const int n = static_cast<int>(k.size());
  const double margin = 50, bar_area_w = std::max(400.0, 9.0 * n), h = 300;
  SvgCanvas svg(bar_area_w + 2 * margin, h + 2 * margin);

  Vector err(n);
  for (int i = 0; i < n; ++i) {
    const double ref = ground_truth ? (*ground_truth)[i] : 1.0;
    err[i] = 100.0 * std::abs(k[i] - ref) / ref;
  }
  const double e_max = std::max(threshold_pct * 2, err.maxCoeff() * 1.1);
  auto ybar = [&](double v) { return margin + h - h * std::min(v, e_max) / e_max; };

  svg.line(margin, margin + h, margin + bar_area_w, margin + h, "black");
  svg.line(margin, margin, margin, margin + h, "black");
  svg.line(margin, ybar(threshold_pct), margin + bar_area_w, ybar(threshold_pct), "gray", "4 3");
  svg.text(margin - 4, ybar(threshold_pct) + 4, fmt(threshold_pct, 2) + "%", 10, "end");

  const double bw = bar_area_w / n;
  for (int i = 0; i < n; ++i) {
    svg.rect(margin + i * bw + 1, ybar(err[i]), bw - 2, margin + h - ybar(err[i]),
             err[i] > threshold_pct ? "#c0392b" : "#5b7fa6");
    if (n <= 60 || i % 5 == 0) {
      svg.text(margin + (i + 0.5) * bw, margin + h + 12, std::to_string(i), 8, "middle");
    }
  }
  svg.text(margin, margin - 10,
           ground_truth ? "deviation-ratio error vs ground truth (%)"
                        : "deviation from healthy state (%)",
           13);
  svg.save(path);
}

}  // namespace spanid
