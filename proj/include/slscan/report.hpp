#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "slscan/detector.hpp"

namespace slscan {

inline nlohmann::ordered_json kernel_json(const CovarianceKernel& k) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(k.kind());
  if (k.kind() == KernelKind::stationary_ar1) j["phi"] = k.phi();
  if (k.kind() == KernelKind::stationary_ar1 || k.kind() == KernelKind::random_walk) j["sigma_eps"] = k.sigma_eps();
  if (k.kind() == KernelKind::custom) j["size"] = k.size();
  return j;
}

inline nlohmann::ordered_json config_json(const DetectionConfig& cfg, std::size_t sequences, std::size_t length) {
  nlohmann::ordered_json j;
  j["c"] = cfg.threshold;
  j["i0"] = cfg.i0;
  j["lambda1"] = cfg.params.lambda1;
  j["lambda2"] = cfg.params.lambda2;
  j["N"] = sequences;
  j["T"] = length;
  j["kernel"] = kernel_json(cfg.kernel);
  j["schedule"] = {{"kind", to_string(cfg.schedule.kind)},
                   {"growth", cfg.schedule.growth},
                   {"scales", cfg.schedule.scales()},
                   {"i_T", cfg.schedule.i_T}};
  j["recursion"] = "children (b, tau) and (tau+1, e)";
  return j;
}

/// {"changepoints": [{"t", "scale", "score"}], "config": {...}, "diagnostics": {...}}.
/// `extra` entries are merged into diagnostics.
inline nlohmann::ordered_json report_json(const ChangePointReport& report,
                                          const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json j;
  j["changepoints"] = nlohmann::ordered_json::array();
  for (const auto& d : report.detections) j["changepoints"].push_back({{"t", d.tau}, {"scale", d.scale}, {"score", d.score}});
  j["config"] = config_json(report.config, report.sequences, report.length);
  nlohmann::ordered_json diag;
  diag["scan_triples"] = report.diagnostics.scan_triples;
  diag["refine_triples"] = report.diagnostics.refine_triples;
  diag["guard_floored"] = report.diagnostics.guard_floored;
  diag["segments"] = report.diagnostics.segments;
  diag["max_depth"] = report.diagnostics.max_depth;
  for (const auto& [key, value] : extra.items()) diag[key] = value;
  j["diagnostics"] = diag;
  return j;
}

inline void write_report_json(std::ostream& out, const ChangePointReport& report,
                              const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  out << report_json(report, extra).dump(2) << "\n";
}

inline void write_report_csv(std::ostream& out, const ChangePointReport& report) {
  out << "t,scale,score\n";
  const auto old = out.precision(17);
  for (const auto& d : report.detections) out << d.tau << "," << d.scale << "," << d.score << "\n";
  out.precision(old);
}

/// Change-point locations from a report JSON, a bare JSON array, or plain
/// text with one integer per line or comma separated.
inline std::vector<std::int64_t> read_change_points(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<std::int64_t> out;
  if (first == std::string::npos) return out;
  if (text[first] == '{' || text[first] == '[') {
    const auto j = nlohmann::json::parse(text);
    const auto& arr = j.is_object() ? j.at("changepoints") : j;
    for (const auto& e : arr) out.push_back(e.is_object() ? e.at("t").get<std::int64_t>() : e.get<std::int64_t>());
    return out;
  }
  std::string token;
  for (char ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == ' ' || ch == '\t') {
      if (!token.empty()) out.push_back(std::stoll(token));
      token.clear();
    } else {
      token.push_back(ch);
    }
  }
  if (!token.empty()) out.push_back(std::stoll(token));
  return out;
}

}  // namespace slscan
