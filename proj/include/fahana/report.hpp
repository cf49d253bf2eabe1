#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fahana/evaluator.hpp"
#include "fahana/fairness.hpp"

namespace fahana {

// One scored replay row, everything relative to the chosen baseline row.
struct ScoreRow {
  std::string model;
  double overall_acc = 0.0;
  double acc_light = 0.0;
  double acc_dark = 0.0;
  double unfairness_score = 0.0;
  double reward_value = 0.0;
  bool meets_accuracy = false;
  std::optional<bool> meets_timing;            // only when a timing budget applies
  std::optional<double> fairness_change;       // + means fairer than baseline
  std::optional<std::int64_t> params;
  std::optional<double> storage_mb;
  std::optional<double> storage_reduction;     // baseline size / row size
  std::optional<double> latency_raspberry_ms;
  std::optional<double> speedup_raspberry;
  std::optional<double> latency_odroid_ms;
  std::optional<double> speedup_odroid;
};

struct ScoreReport {
  std::string baseline;
  std::vector<ScoreRow> rows;
};

// Scores every row of a replay table against the given constraints and
// the baseline row. Size reduction prefers the parameter-count ratio
// (printed storage is rounded too coarsely to reproduce ratios) and falls
// back to recorded storage.
inline ScoreReport score_report(const ReplayTable& table, const Specification& spec,
                                const RewardParams& rparams, const std::string& baseline_id) {
  const ReplayRow& base = table.row(baseline_id);
  const double base_unfair = unfairness(replay_evaluate(baseline_id, table));

  ScoreReport report;
  report.baseline = baseline_id;
  for (const ReplayRow& row : table.rows) {
    ScoreRow out;
    out.model = row.model;
    out.overall_acc = row.overall_acc;
    out.acc_light = row.acc_light;
    out.acc_dark = row.acc_dark;
    out.params = row.params;
    out.storage_mb = row.storage_mb;
    out.latency_raspberry_ms = row.latency_raspberry_ms;
    out.latency_odroid_ms = row.latency_odroid_ms;

    const EvaluationResult result = evaluate_replay(row.model, table, spec, rparams);
    out.unfairness_score = *result.unfairness_score;
    out.reward_value = result.reward_value;
    out.meets_accuracy = row.overall_acc >= spec.accuracy_constraint;
    if (std::isfinite(spec.timing_constraint_ms) && result.latency_ms)
      out.meets_timing = *result.latency_ms <= spec.timing_constraint_ms;

    out.fairness_change = relative_fairness_change(out.unfairness_score, base_unfair);
    if (base.params && row.params)
      out.storage_reduction = static_cast<double>(*base.params) / static_cast<double>(*row.params);
    else if (base.storage_mb && row.storage_mb)
      out.storage_reduction = *base.storage_mb / *row.storage_mb;
    if (base.latency_raspberry_ms && row.latency_raspberry_ms)
      out.speedup_raspberry = *base.latency_raspberry_ms / *row.latency_raspberry_ms;
    if (base.latency_odroid_ms && row.latency_odroid_ms)
      out.speedup_odroid = *base.latency_odroid_ms / *row.latency_odroid_ms;
    report.rows.push_back(std::move(out));
  }
  return report;
}

// -------------------------------------------------------------------------
// Formatting: unfairness at 4 decimals, rewards at 2, percents and ratios
// at 2.
// -------------------------------------------------------------------------

namespace detail {

inline std::string fmt(const char* spec_str, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec_str, v);
  return buf;
}

inline std::string fmt_opt(const char* spec_str, const std::optional<double>& v,
                           const char* absent = "-") {
  return v ? fmt(spec_str, *v) : std::string(absent);
}

}  // namespace detail

inline void write_score_report_csv(std::ostream& out, const ScoreReport& report) {
  out << "model,overall_acc,acc_light,acc_dark,unfairness,reward,meets_accuracy,meets_timing,"
         "fairness_change_pct,params,storage_mb,storage_reduction,latency_raspberry_ms,"
         "speedup_raspberry,latency_odroid_ms,speedup_odroid\n";
  for (const ScoreRow& r : report.rows) {
    out << r.model << "," << detail::fmt("%.4f", r.overall_acc) << ","
        << detail::fmt("%.4f", r.acc_light) << "," << detail::fmt("%.4f", r.acc_dark) << ","
        << detail::fmt("%.4f", r.unfairness_score) << ","
        << detail::fmt("%.2f", r.reward_value) << "," << (r.meets_accuracy ? "yes" : "no") << ","
        << (r.meets_timing ? (*r.meets_timing ? "yes" : "no") : "-") << ",";
    std::optional<double> change_pct;
    if (r.fairness_change) change_pct = 100.0 * *r.fairness_change;
    out << detail::fmt_opt("%.2f", change_pct, "") << ",";
    out << (r.params ? std::to_string(*r.params) : std::string()) << ","
        << detail::fmt_opt("%.2f", r.storage_mb, "") << ","
        << detail::fmt_opt("%.2f", r.storage_reduction, "") << ","
        << detail::fmt_opt("%.2f", r.latency_raspberry_ms, "") << ","
        << detail::fmt_opt("%.2f", r.speedup_raspberry, "") << ","
        << detail::fmt_opt("%.2f", r.latency_odroid_ms, "") << ","
        << detail::fmt_opt("%.2f", r.speedup_odroid, "") << "\n";
  }
}

inline void print_score_report(std::ostream& out, const ScoreReport& report) {
  out << "baseline: " << report.baseline << "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %8s %9s %8s %8s %10s %8s %8s %8s\n", "model", "acc",
                "unfair", "reward", "fair%", "size-red", "sp-rasp", "sp-odr", "ok");
  out << line;
  for (const ScoreRow& r : report.rows) {
    std::string ok = r.meets_accuracy ? "acc" : "-";
    if (r.meets_timing) ok += *r.meets_timing ? "+time" : "-time";
    std::optional<double> change_pct;
    if (r.fairness_change) change_pct = 100.0 * *r.fairness_change;
    std::snprintf(line, sizeof(line), "%-18s %8.4f %9.4f %8.2f %8s %10s %8s %8s %8s\n",
                  r.model.c_str(), r.overall_acc, r.unfairness_score, r.reward_value,
                  detail::fmt_opt("%.2f", change_pct).c_str(),
                  detail::fmt_opt("%.2fx", r.storage_reduction).c_str(),
                  detail::fmt_opt("%.2fx", r.speedup_raspberry).c_str(),
                  detail::fmt_opt("%.2fx", r.speedup_odroid).c_str(), ok.c_str());
    out << line;
  }
}

}  // namespace fahana
