#pragma once

// Bandwidth / latency accounting for the edge -> server split.
// Zero protocol overhead; kB means 1000 bytes.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vad/errors.hpp"
#include "vad/metrics.hpp"

namespace vad {

struct DeviceProfile {
  double bandwidth_bytes_per_s = 100'000.0;
  double cpu_scale = 3.0;
  std::optional<double> compute_budget;      // edge model parameter count bound
  std::optional<std::uint64_t> comm_budget;  // payload byte bound

  void validate() const {
    if (!(bandwidth_bytes_per_s > 0.0)) throw InvalidArgument("DeviceProfile: bandwidth must be positive");
    if (!(cpu_scale > 0.0)) throw InvalidArgument("DeviceProfile: cpu_scale must be positive");
    if (compute_budget && !(*compute_budget > 0.0)) throw InvalidArgument("DeviceProfile: compute budget must be positive");
    if (comm_budget && *comm_budget == 0) throw InvalidArgument("DeviceProfile: communication budget must be positive");
  }
};

inline double tx_time(double payload_bytes, const DeviceProfile& profile) {
  if (payload_bytes < 0.0) throw InvalidArgument("tx_time: negative payload");
  return payload_bytes / profile.bandwidth_bytes_per_s;
}

inline double scale_edge_time(double measured_ms, const DeviceProfile& profile) {
  if (measured_ms < 0.0) throw InvalidArgument("scale_edge_time: negative time");
  return measured_ms * profile.cpu_scale;
}

// Timing decomposition of one scenario, per image.
struct LatencyRow {
  std::string name;
  double edge_feature_ms = 0.0;
  double edge_encode_ms = 0.0;
  double server_decode_ms = 0.0;
  double server_feature_ms = 0.0;
  double server_ad_ms = 0.0;
  double payload_bytes = 0.0;
  double tx_s = 0.0;
  double total_s = 0.0;
  std::optional<double> delta_vs_baseline_percent;

  double edge_ms() const { return edge_feature_ms + edge_encode_ms; }
  double server_ms() const { return server_decode_ms + server_feature_ms + server_ad_ms; }
};

// Edge and server milliseconds plus transmission seconds.
inline double total_time(const LatencyRow& row) {
  const double parts[] = {row.edge_feature_ms, row.edge_encode_ms, row.server_decode_ms, row.server_feature_ms,
                          row.server_ad_ms, row.tx_s};
  for (double p : parts)
    if (p < 0.0) throw InvalidArgument("total_time: negative component in row " + row.name);
  return row.edge_ms() / 1000.0 + row.tx_s + row.server_ms() / 1000.0;
}

struct LatencyOptions {
  std::string baseline = "original";
  // Multiply edge components by the profile's cpu_scale (measured on a
  // server-class host). Off when the inputs are already edge timings.
  bool scale_edge = false;
  // Compute deltas from totals rounded to the printed 2 decimals.
  bool delta_from_rounded_totals = false;
};

struct LatencyReport {
  std::string baseline;
  bool edge_scaled = false;
  std::vector<LatencyRow> rows;

  const LatencyRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
};

inline double round_to(double v, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::round(v * f) / f;
}

// Fills tx_s, total_s and the baseline delta of every row.
inline LatencyReport build_latency_report(std::vector<LatencyRow> rows, const DeviceProfile& profile,
                                          const LatencyOptions& opt) {
  profile.validate();
  LatencyReport rep;
  rep.baseline = opt.baseline;
  rep.edge_scaled = opt.scale_edge;
  for (auto& r : rows) {
    if (opt.scale_edge) {
      r.edge_feature_ms = scale_edge_time(r.edge_feature_ms, profile);
      r.edge_encode_ms = scale_edge_time(r.edge_encode_ms, profile);
    }
    r.tx_s = tx_time(r.payload_bytes, profile);
    r.total_s = total_time(r);
  }
  const LatencyRow* base = nullptr;
  for (const auto& r : rows)
    if (r.name == opt.baseline) base = &r;
  if (base) {
    const double b = opt.delta_from_rounded_totals ? round_to(base->total_s, 2) : base->total_s;
    if (b > 0.0)
      for (auto& r : rows) {
        const double t = opt.delta_from_rounded_totals ? round_to(r.total_s, 2) : r.total_s;
        r.delta_vs_baseline_percent = delta_percent(t, b);
      }
  }
  rep.rows = std::move(rows);
  return rep;
}

struct ConstraintViolation {
  enum class Kind { compute, communication } kind;
  double actual;
  double budget;
};

struct ConstraintCheck {
  bool ok = true;
  std::vector<ConstraintViolation> violations;
};

// Absent budgets pass vacuously.
inline ConstraintCheck check_constraints(double edge_model_params, double payload_bytes, const DeviceProfile& profile) {
  ConstraintCheck c;
  if (profile.compute_budget && edge_model_params > *profile.compute_budget)
    c.violations.push_back({ConstraintViolation::Kind::compute, edge_model_params, *profile.compute_budget});
  if (profile.comm_budget && payload_bytes > static_cast<double>(*profile.comm_budget))
    c.violations.push_back(
        {ConstraintViolation::Kind::communication, payload_bytes, static_cast<double>(*profile.comm_budget)});
  c.ok = c.violations.empty();
  return c;
}

inline std::string describe(const ConstraintViolation& v) {
  std::ostringstream os;
  os << (v.kind == ConstraintViolation::Kind::compute ? "compute" : "communication") << " budget exceeded: "
     << v.actual << " > " << v.budget;
  return os.str();
}

// Component breakdown in milliseconds (edge / server), one row per scenario.
inline std::string latency_components_tsv(const LatencyReport& rep) {
  using detail::fmt_fixed;
  std::ostringstream os;
  os << "method\tedge_feature_ms\tedge_encode_ms\tserver_decode_ms\tserver_feature_ms\tserver_ad_ms\ttotal_ms\n";
  for (const auto& r : rep.rows)
    os << r.name << '\t' << fmt_fixed(r.edge_feature_ms, 2) << '\t' << fmt_fixed(r.edge_encode_ms, 2) << '\t'
       << fmt_fixed(r.server_decode_ms, 2) << '\t' << fmt_fixed(r.server_feature_ms, 2) << '\t'
       << fmt_fixed(r.server_ad_ms, 2) << '\t' << fmt_fixed(r.edge_ms() + r.server_ms(), 2) << '\n';
  return os.str();
}

inline std::string format_delta_percent(const std::optional<double>& d) {
  if (!d) return "-";
  const double r = std::round(*d);
  if (r == 0.0) return "0%";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.0f%%", r);
  return buf;
}

// Payload, transmission time, end-to-end total and delta vs baseline.
inline std::string latency_totals_tsv(const LatencyReport& rep) {
  using detail::fmt_fixed;
  std::ostringstream os;
  os << "method\tpayload_kB\ttx_s\ttotal_s\tdelta_time\n";
  for (const auto& r : rep.rows)
    os << r.name << '\t' << fmt_fixed(r.payload_bytes / 1000.0, 3) << '\t' << fmt_fixed(r.tx_s, 2) << '\t'
       << fmt_fixed(r.total_s, 2) << '\t' << format_delta_percent(r.delta_vs_baseline_percent) << '\n';
  return os.str();
}

}  // namespace vad
