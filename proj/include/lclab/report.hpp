// report.hpp - serialization of check results: JSON reports for machines, CSV
// series for per-sample data, and the run manifest tying a run's artifacts
// together.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lclab/core.hpp"
#include "lclab/opcalc.hpp"
#include "lclab/verify.hpp"

namespace lclab {

using OrderedJson = nlohmann::ordered_json;

// ===== CSV =====

// RFC 4180 quoting: fields containing separators, quotes, or line breaks are
// wrapped in double quotes with embedded quotes doubled.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

// Columnar numeric table; first line is the header, numbers are written in
// their shortest round-trip form.
inline std::string csv_table(const std::vector<std::string>& header,
                             const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size())
    throw invalid_argument_error("csv_table: header/column count mismatch");
  size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& col : columns)
    if (col.size() != rows) throw invalid_argument_error("csv_table: ragged columns");
  std::string out = csv_row(header);
  std::vector<std::string> fields(header.size());
  for (size_t r = 0; r < rows; ++r) {
    for (size_t c = 0; c < columns.size(); ++c) fields[c] = to_string_shortest(columns[c][r]);
    out += csv_row(fields);
  }
  return out;
}

inline std::string margins_csv(const InequalityReport& rep) {
  return csv_table({"sample", "margin"}, {rep.samples, rep.margins});
}

inline std::string decay_csv(const DecayFit& fit) {
  return csv_table({"time", "value"}, {fit.times, fit.values});
}

// ===== JSON =====

inline OrderedJson report_json(const InequalityReport& rep) {
  OrderedJson j;
  j["name"] = rep.name;
  j["passed"] = rep.passed;
  j["smallest_c"] = rep.smallest_c;
  j["tolerance"] = rep.tolerance;
  j["samples"] = rep.samples;
  j["margins"] = rep.margins;
  return j;
}

inline OrderedJson decay_fit_json(const DecayFit& fit) {
  OrderedJson j;
  j["status"] = fit_status_name(fit.status);
  j["moment"] = fit.moment;
  j["window"] = {fit.window_lo, fit.window_hi};
  j["fitted_exponent"] = fit.fitted_exponent;
  j["residual"] = fit.residual;
  j["fitted_c"] = fit.fitted_c;
  j["points_above_floor"] = fit.points_above_floor;
  j["times"] = fit.times;
  j["values"] = fit.values;
  return j;
}

inline OrderedJson expansion_json(const CommutatorExpansion& exp, double ceiling) {
  OrderedJson j;
  j["order"] = exp.order;
  j["side"] = exp.side == ExpansionSide::left ? "left" : "right";
  j["term_norms"] = exp.term_norms;
  j["remainder_norm"] = exp.residual_norm;
  j["ceiling"] = ceiling;
  j["s"] = exp.s;
  return j;
}

inline OrderedJson soliton_json(const SolitonSpeedReport& rep) {
  OrderedJson j;
  j["flagged"] = rep.flagged;
  j["kappa"] = rep.kappa;
  j["test_slope"] = rep.test_slope;
  // non-finite doubles serialize as null (no crossover observed)
  j["crossover_time"] = rep.crossover_time;
  j["mass_bound"] = report_json(rep.mass_bound);
  return j;
}

// ===== hashing =====

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
  return out;
}

// ===== run manifest =====

// Wall-clock accounting per pipeline stage.
class StageClock {
 public:
  void start(std::string name) {
    stop();
    current_ = std::move(name);
    mark_ = std::chrono::steady_clock::now();
    open_ = true;
  }

  void stop() {
    if (!open_) return;
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - mark_;
    done_.emplace_back(current_, dt.count());
    open_ = false;
  }

  const std::vector<std::pair<std::string, double>>& stages() const { return done_; }

 private:
  std::vector<std::pair<std::string, double>> done_;
  std::string current_;
  std::chrono::steady_clock::time_point mark_;
  bool open_ = false;
};

struct RunManifest {
  std::string config_hash;  // hash of the canonical config serialization
  std::string tool_version;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<std::string> files;                     // every artifact written
  std::vector<std::pair<std::string, bool>> summary;  // check name -> passed
  std::string failure;  // empty unless a stage aborted; partial inventory kept

  bool all_passed() const {
    if (!failure.empty()) return false;
    for (const auto& [name, ok] : summary)
      if (!ok) return false;
    return true;
  }
};

// Deterministic manifest: wall-clock timings are the one run-dependent field,
// so they go to a plain-text sidecar and the JSON stays byte-stable across
// identical runs.
inline OrderedJson manifest_json(const RunManifest& m) {
  OrderedJson j;
  j["config_hash"] = m.config_hash;
  j["tool_version"] = m.tool_version;
  j["files"] = m.files;
  OrderedJson checks = OrderedJson::object();
  for (const auto& [name, ok] : m.summary) checks[name] = ok;
  j["checks"] = checks;
  j["all_passed"] = m.all_passed();
  j["failure"] = m.failure;
  j["timings_file"] = "timings.txt";
  return j;
}

inline std::string timings_text(const RunManifest& m) {
  std::string out = "# wall-clock seconds per stage\n";
  for (const auto& [name, sec] : m.stage_seconds)
    out += name + " " + to_string_shortest(sec) + "\n";
  return out;
}

// ===== file output =====

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("write_text_file: cannot open " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw error("write_text_file: short write to " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("read_text_file: cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace lclab
