#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fahana/errors.hpp"
#include "fahana/fairness.hpp"
#include "fahana/latency.hpp"
#include "fahana/random.hpp"
#include "fahana/reward.hpp"
#include "fahana/search_space.hpp"

namespace fahana {

inline double storage_mb(std::int64_t params) {
  return static_cast<double>(params) * 4.0 / (1024.0 * 1024.0);
}

// ---------------------------------------------------------------------------
// Accuracy backends
//
// An accuracy backend maps an architecture to grouped accuracies. Calls
// are counted on the shared base so tests can observe that the timing
// bypass really skips the expensive step.
// ---------------------------------------------------------------------------

class AccuracyBackend {
 public:
  virtual ~AccuracyBackend() = default;

  GroupedAccuracy evaluate(const ArchitectureSpec& arch) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return run(arch);
  }

  std::int64_t call_count() const { return calls_.load(std::memory_order_relaxed); }

 private:
  virtual GroupedAccuracy run(const ArchitectureSpec& arch) = 0;

  std::atomic<std::int64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Surrogate model
//
// A closed-form stand-in for training: accuracy saturates with total
// weight count, the majority/minority gap shrinks as the blocks nearest
// the classifier grow, and a small deterministic perturbation keyed by
// (seed, architecture) keeps the landscape non-degenerate. Pure function
// of its inputs.
// ---------------------------------------------------------------------------

struct SurrogateConfig {
  double max_accuracy = 0.9;
  double min_accuracy = 0.5;
  double size_scale = 1e4;
  double base_gap = 0.5;
  double tail_scale = 5e3;
  int tail_window = 2;
  double majority_fraction = 0.9;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
};

inline void validate_surrogate_config(const SurrogateConfig& cfg) {
  if (!(cfg.min_accuracy >= 0.0 && cfg.min_accuracy <= cfg.max_accuracy &&
        cfg.max_accuracy <= 1.0))
    throw ValidationError("need 0 <= min_accuracy <= max_accuracy <= 1");
  if (!(cfg.size_scale > 0.0) || !(cfg.tail_scale > 0.0))
    throw ValidationError("size_scale and tail_scale must be > 0");
  if (cfg.base_gap < 0.0 || cfg.noise_amplitude < 0.0)
    throw ValidationError("base_gap and noise_amplitude must be >= 0");
  if (cfg.tail_window < 1) throw ValidationError("tail_window must be >= 1");
  if (!(cfg.majority_fraction > 0.0 && cfg.majority_fraction < 1.0))
    throw ValidationError("majority_fraction must lie in (0, 1)");
}

namespace detail {

// Deterministic noise stream keyed by the seed and the architecture's
// canonical content.
inline KeyedStream surrogate_stream(const ArchitectureSpec& arch, std::uint64_t seed) {
  KeyedStream stream(seed);
  stream.absorb(static_cast<std::uint64_t>(arch.header_out_channels));
  for (const BlockChoice& b : arch.blocks) {
    stream.absorb(b.skipped ? 1u : 0u);
    stream.absorb(static_cast<std::uint64_t>(b.block_type));
    stream.absorb(static_cast<std::uint64_t>(b.kernel));
    stream.absorb(static_cast<std::uint64_t>(b.ch2));
    stream.absorb(static_cast<std::uint64_t>(b.ch3));
  }
  return stream;
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

inline GroupedAccuracy surrogate_evaluate(const ArchitectureSpec& arch,
                                          const SurrogateConfig& cfg) {
  validate_surrogate_config(cfg);
  const std::int64_t params = param_count(arch);
  const double base =
      cfg.max_accuracy - (cfg.max_accuracy - cfg.min_accuracy) *
                             std::exp(-static_cast<double>(params) / cfg.size_scale);

  // Weight mass in the last tail_window non-skipped blocks; the stages
  // closest to the classifier drive how well the minority group is fit.
  const std::vector<int> ch1 = effective_input_channels(arch);
  std::int64_t tail_params = 0;
  int taken = 0;
  for (int i = static_cast<int>(arch.blocks.size()) - 1; i >= 0 && taken < cfg.tail_window; --i) {
    const BlockChoice& b = arch.blocks[i];
    if (b.skipped) continue;
    tail_params += block_param_count(b.block_type, b.kernel, ch1[i], b.ch2, b.ch3);
    ++taken;
  }
  const double gap = cfg.base_gap * std::exp(-static_cast<double>(tail_params) / cfg.tail_scale);

  const KeyedStream stream = detail::surrogate_stream(arch, cfg.seed);
  const double eps1 = cfg.noise_amplitude * (2.0 * stream.uniform(0) - 1.0);
  const double eps2 = cfg.noise_amplitude * (2.0 * stream.uniform(1) - 1.0);

  GroupedAccuracy ga;
  const double majority = detail::clamp01(base + eps1);
  const double minority = detail::clamp01(base - gap + eps2);
  ga.per_group = {majority, minority};
  ga.overall = cfg.majority_fraction * majority + (1.0 - cfg.majority_fraction) * minority;
  const std::int64_t virtual_total = 1000000;
  const std::int64_t majority_size =
      static_cast<std::int64_t>(std::llround(cfg.majority_fraction * virtual_total));
  ga.group_sizes = {majority_size, virtual_total - majority_size};
  return ga;
}

class SurrogateBackend : public AccuracyBackend {
 public:
  explicit SurrogateBackend(SurrogateConfig cfg) : cfg_(cfg) { validate_surrogate_config(cfg_); }

  const SurrogateConfig& config() const { return cfg_; }

 private:
  GroupedAccuracy run(const ArchitectureSpec& arch) override {
    return surrogate_evaluate(arch, cfg_);
  }

  SurrogateConfig cfg_;
};

// ---------------------------------------------------------------------------
// Replay tables: recorded results of named models, CSV with header
//   model,overall_acc,acc_light,acc_dark,params,storage_mb,
//   latency_raspberry_ms,latency_odroid_ms
// Numeric fields other than the accuracies may be empty when unrecorded.
// ---------------------------------------------------------------------------

inline constexpr const char* kReplayCsvHeader =
    "model,overall_acc,acc_light,acc_dark,params,storage_mb,latency_raspberry_ms,"
    "latency_odroid_ms";

struct ReplayRow {
  std::string model;
  double overall_acc = 0.0;
  double acc_light = 0.0;
  double acc_dark = 0.0;
  std::optional<std::int64_t> params;
  std::optional<double> storage_mb;
  std::optional<double> latency_raspberry_ms;
  std::optional<double> latency_odroid_ms;

  std::optional<double> latency_for(const std::string& device_id) const {
    if (device_id == "raspberry") return latency_raspberry_ms;
    if (device_id == "odroid") return latency_odroid_ms;
    throw ValidationError("replay table has no latency column for device " + device_id);
  }
};

struct ReplayTable {
  std::vector<ReplayRow> rows;
  std::map<std::string, std::size_t> index;

  const ReplayRow& row(const std::string& model) const {
    const auto it = index.find(model);
    if (it == index.end()) throw UnknownArchitecture("no replay row for model " + model);
    return rows[it->second];
  }
};

inline ReplayTable replay_table_from_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("replay table: empty input");
  if (detail::strip_cr(line) != kReplayCsvHeader) throw ParseError("replay table: bad header row");
  ReplayTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string context = "replay table line " + std::to_string(line_no);
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 8) throw ParseError(context + ": expected 8 fields");
    ReplayRow row;
    row.model = f[0];
    if (row.model.empty()) throw ParseError(context + ": empty model name");
    row.overall_acc = detail::parse_double(f[1], context);
    row.acc_light = detail::parse_double(f[2], context);
    row.acc_dark = detail::parse_double(f[3], context);
    if (!f[4].empty()) row.params = detail::parse_long(f[4], context);
    if (!f[5].empty()) row.storage_mb = detail::parse_double(f[5], context);
    if (!f[6].empty()) row.latency_raspberry_ms = detail::parse_double(f[6], context);
    if (!f[7].empty()) row.latency_odroid_ms = detail::parse_double(f[7], context);
    if (!table.index.emplace(row.model, table.rows.size()).second)
      throw ParseError(context + ": duplicate model " + row.model);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Recorded tables carry the printed overall accuracy; the exact group
// weights behind it are not recoverable, so group sizes are nominal.
inline GroupedAccuracy replay_evaluate(const std::string& model, const ReplayTable& table) {
  const ReplayRow& row = table.row(model);
  GroupedAccuracy ga;
  ga.overall = row.overall_acc;
  ga.per_group = {row.acc_light, row.acc_dark};
  ga.group_sizes = {1, 1};
  return ga;
}

// ---------------------------------------------------------------------------
// Full evaluation with the timing bypass
// ---------------------------------------------------------------------------

struct EvaluationResult {
  std::optional<GroupedAccuracy> grouped;
  std::optional<double> unfairness_score;
  std::optional<double> latency_ms;
  std::int64_t params = 0;
  bool feasible = false;
  double reward_value = kInfeasibleReward;
};

// Latency comes first: an architecture that cannot meet the timing budget
// is rejected without invoking the accuracy backend. An accuracy miss
// does not bypass anything; its grouped results are still reported.
inline EvaluationResult evaluate_full(const ArchitectureSpec& arch, const Specification& spec,
                                      const RewardParams& rparams, const LatencyTable& table,
                                      int input_resolution, AccuracyBackend& backend) {
  EvaluationResult result;
  result.params = param_count(arch);
  const double latency = estimate(arch, table, input_resolution);
  result.latency_ms = latency;
  if (!meets_timing(latency, spec)) return result;

  GroupedAccuracy ga = backend.evaluate(arch);
  const double unfair = unfairness(ga);
  result.unfairness_score = unfair;
  result.feasible = meets_accuracy(ga.overall, spec);
  result.reward_value = reward(ga.overall, unfair, latency, spec, rparams);
  result.grouped = std::move(ga);
  return result;
}

// Replay flavor: accuracies and latency are recorded, so nothing is
// bypassed. A non-finite timing constraint disables the timing gate
// (recorded tables may lack latency for some device).
inline EvaluationResult evaluate_replay(const std::string& model, const ReplayTable& table,
                                        const Specification& spec, const RewardParams& rparams) {
  const ReplayRow& row = table.row(model);
  EvaluationResult result;
  if (row.params) result.params = *row.params;
  GroupedAccuracy ga = replay_evaluate(model, table);
  const double unfair = unfairness(ga);
  result.unfairness_score = unfair;

  bool timing_ok = true;
  if (std::isfinite(spec.timing_constraint_ms)) {
    const std::optional<double> latency = row.latency_for(spec.device_id);
    if (!latency)
      throw MissingEntry("model " + model + " has no recorded latency for " + spec.device_id);
    result.latency_ms = latency;
    timing_ok = meets_timing(*latency, spec);
  } else if (!spec.device_id.empty()) {
    result.latency_ms = row.latency_for(spec.device_id);
  }

  result.feasible = timing_ok && meets_accuracy(ga.overall, spec);
  result.reward_value = result.feasible
                            ? rparams.alpha * ga.overall - rparams.beta * unfair
                            : kInfeasibleReward;
  result.grouped = std::move(ga);
  return result;
}

}  // namespace fahana
