#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fahana/controller.hpp"
#include "fahana/errors.hpp"
#include "fahana/evaluator.hpp"
#include "fahana/freezer.hpp"
#include "fahana/latency.hpp"
#include "fahana/random.hpp"
#include "fahana/reward.hpp"
#include "fahana/search_space.hpp"

namespace fahana {

// =========================================================================
// Search orchestration
//
// One run: optional freeze phase that shrinks the space, then `episodes`
// iterations of sample-a-batch / evaluate / update. Everything is driven
// by a single master seed; batch evaluations may fan out over threads but
// land by index, so logs do not depend on the parallelism level.
// =========================================================================

struct FreezeSettings {
  std::string trace_path;
  double freeze_ratio = 0.5;
  VariationNormalization normalization = VariationNormalization::None;
  std::vector<int> layer_to_block_map;  // empty: identity, one layer per block
  std::vector<int> block_out_channels;  // empty: keep header channels
};

struct RunConfig {
  SearchSpaceConfig search_space;
  Specification specification;
  RewardParams reward_params;
  ControllerHyperparams controller;
  SurrogateConfig surrogate;
  int episodes = 500;
  std::string backend = "surrogate";
  std::uint64_t seed = 0;
  int parallelism = 1;
  std::string latency_table_path;
  std::optional<FreezeSettings> freeze;
  std::string output_dir;
};

struct RunRecord {
  int episode = 0;  // 1-based
  int sample = 0;   // 1-based within the batch
  std::vector<int> actions;
  double reward = 0.0;
  bool feasible = false;
  double latency_ms = 0.0;
  std::optional<double> accuracy;
  std::optional<double> unfairness_score;
  std::int64_t params = 0;
};

struct BestSoFarEntry {
  int episode = 0;
  double reward = 0.0;
};

struct RunSummary {
  int episodes = 0;
  int samples_per_episode = 0;
  std::int64_t total_evaluations = 0;
  std::int64_t backend_calls = 0;
  double valid_rate = 0.0;
  double best_reward = 0.0;
  int best_episode = 0;
  int best_sample = 0;
  std::vector<int> best_actions;
  ArchitectureSpec best_architecture;
  std::vector<BestSoFarEntry> best_so_far;
  double wall_time_ms = 0.0;
};

struct RunLog {
  std::vector<RunRecord> records;
  RunSummary summary;
};

struct RunOutcome {
  RunLog log;
  ControllerState controller;
  SearchSpaceConfig effective_space;
  std::optional<FreezePlan> freeze_plan;
  int frozen_blocks = 0;
};

inline double valid_rate(const RunLog& log) {
  if (log.records.empty()) throw ValidationError("run log has no records");
  std::int64_t feasible = 0;
  for (const RunRecord& r : log.records) feasible += r.feasible ? 1 : 0;
  return static_cast<double>(feasible) / static_cast<double>(log.records.size());
}

namespace detail {

// Evaluates a batch, fanning out across threads when asked; results land
// by sample index so the outcome is identical at any parallelism level.
inline std::vector<EvaluationResult> evaluate_batch(
    const std::vector<SampledEpisode>& batch, const Specification& spec,
    const RewardParams& rparams, const LatencyTable& table, int input_resolution,
    AccuracyBackend& backend, int parallelism) {
  std::vector<EvaluationResult> results(batch.size());
  const int workers =
      std::max(1, std::min<int>(parallelism, static_cast<int>(batch.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      results[i] =
          evaluate_full(batch[i].architecture, spec, rparams, table, input_resolution, backend);
    return results;
  }
  std::vector<std::exception_ptr> failures(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < batch.size(); i += workers)
          results[i] = evaluate_full(batch[i].architecture, spec, rparams, table,
                                     input_resolution, backend);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : failures)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace detail

// Core loop against an in-memory latency table (and, when freezing, an
// in-memory trace). The path-based overload below loads both from disk.
// A resumed controller replaces the fresh seeded one; its hyperparams win.
inline RunOutcome run_search(const RunConfig& cfg, const LatencyTable& table,
                             const std::optional<FeatureTrace>& trace = std::nullopt,
                             const std::optional<ControllerState>& resume = std::nullopt) {
  const auto start_time = std::chrono::steady_clock::now();
  validate_config(cfg.search_space);
  if (cfg.backend != "surrogate")
    throw ValidationError("search requires the surrogate backend; a replay table of named "
                          "models cannot score sampled architectures");
  if (cfg.episodes < 1) throw ValidationError("episodes must be >= 1");
  if (cfg.parallelism < 1) throw ValidationError("parallelism must be >= 1");
  if (!(cfg.specification.timing_constraint_ms > 0.0))
    throw ValidationError("timing constraint must be > 0");
  if (!cfg.specification.device_id.empty() && !table.device_id.empty() &&
      cfg.specification.device_id != table.device_id)
    throw ValidationError("specification device " + cfg.specification.device_id +
                          " does not match latency table device " + table.device_id);

  RunOutcome out;
  out.effective_space = cfg.search_space;

  if (cfg.freeze) {
    if (!trace) throw ValidationError("freeze requested but no trace provided");
    const std::vector<double> variations =
        layer_variation(*trace, cfg.freeze->normalization);
    FreezePlan plan = split_point(variations, cfg.freeze->freeze_ratio);
    std::vector<int> map = cfg.freeze->layer_to_block_map;
    if (map.empty()) {
      if (trace->num_layers() != cfg.search_space.num_searchable_blocks)
        throw InconsistentMap(
            "trace layers do not match searchable blocks; provide layer_to_block_map");
      map.resize(variations.size());
      for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int>(i) + 1;
    }
    FreezeOutcome frozen =
        apply_freeze(plan, cfg.search_space, map, cfg.freeze->block_out_channels);
    out.freeze_plan = std::move(plan);
    out.frozen_blocks = frozen.frozen_block_count;
    out.effective_space = std::move(frozen.config);
  }

  SurrogateBackend backend(cfg.surrogate);
  if (resume) {
    if (resume->arities != decision_arities(out.effective_space))
      throw ValidationError("resumed controller was built for a different search space");
    out.controller = *resume;
  } else {
    out.controller = controller_init(out.effective_space, cfg.controller, cfg.seed);
  }
  std::mt19937_64 sample_rng(mix64(cfg.seed));
  const int m = out.controller.hyper.batch_size;

  RunLog& log = out.log;
  log.summary.episodes = cfg.episodes;
  log.summary.samples_per_episode = m;
  double best_reward = -std::numeric_limits<double>::infinity();

  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    std::vector<SampledEpisode> batch;
    batch.reserve(m);
    for (int s = 0; s < m; ++s)
      batch.push_back(sample(out.controller, out.effective_space, sample_rng));

    const std::vector<EvaluationResult> results = detail::evaluate_batch(
        batch, cfg.specification, cfg.reward_params, table,
        out.effective_space.input_resolution, backend, cfg.parallelism);

    std::vector<EpisodeRecord> episodes;
    episodes.reserve(m);
    for (int s = 0; s < m; ++s) {
      const EvaluationResult& r = results[s];
      RunRecord rec;
      rec.episode = episode;
      rec.sample = s + 1;
      rec.actions = batch[s].actions;
      rec.reward = r.reward_value;
      rec.feasible = r.feasible;
      rec.latency_ms = r.latency_ms.value_or(0.0);
      if (r.grouped) rec.accuracy = r.grouped->overall;
      rec.unfairness_score = r.unfairness_score;
      rec.params = r.params;
      log.records.push_back(std::move(rec));

      if (r.reward_value > best_reward) {
        best_reward = r.reward_value;
        log.summary.best_reward = r.reward_value;
        log.summary.best_episode = episode;
        log.summary.best_sample = s + 1;
        log.summary.best_actions = batch[s].actions;
        log.summary.best_architecture = batch[s].architecture;
        log.summary.best_so_far.push_back(BestSoFarEntry{episode, r.reward_value});
      }

      episodes.push_back(
          EpisodeRecord{batch[s].actions, batch[s].step_logprobs, r.reward_value, r.feasible});
    }
    out.controller = controller_update(out.controller, episodes);
  }

  log.summary.total_evaluations = static_cast<std::int64_t>(log.records.size());
  log.summary.backend_calls = backend.call_count();
  log.summary.valid_rate = valid_rate(log);
  log.summary.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_time)
          .count();
  return out;
}

// -------------------------------------------------------------------------
// Exhaustive oracle: evaluates the whole space in canonical enumeration
// order. Ties for the best reward resolve to the earliest architecture.
// -------------------------------------------------------------------------

struct OracleRow {
  std::vector<int> actions;
  double reward = 0.0;
  bool feasible = false;
  double latency_ms = 0.0;
  std::optional<double> accuracy;
  std::optional<double> unfairness_score;
  std::int64_t params = 0;
};

struct OracleResult {
  std::vector<OracleRow> rows;
  std::size_t best_index = 0;
};

inline OracleResult exhaustive_oracle(const SearchSpaceConfig& space, const Specification& spec,
                                      const RewardParams& rparams, const LatencyTable& table,
                                      AccuracyBackend& backend,
                                      std::int64_t limit = 100000) {
  if (cardinality(space) > limit)
    throw SpaceTooLarge("space too large for exhaustive evaluation");
  OracleResult result;
  Enumerator en(space);
  double best = -std::numeric_limits<double>::infinity();
  while (auto arch = en.next()) {
    const EvaluationResult r =
        evaluate_full(*arch, spec, rparams, table, space.input_resolution, backend);
    OracleRow row;
    row.actions = encode(*arch, space);
    row.reward = r.reward_value;
    row.feasible = r.feasible;
    row.latency_ms = r.latency_ms.value_or(0.0);
    if (r.grouped) row.accuracy = r.grouped->overall;
    row.unfairness_score = r.unfairness_score;
    row.params = r.params;
    if (row.reward > best) {
      best = row.reward;
      result.best_index = result.rows.size();
    }
    result.rows.push_back(std::move(row));
  }
  if (result.rows.empty()) throw ValidationError("empty search space");
  return result;
}

// -------------------------------------------------------------------------
// Log serialization. The CSV carries the per-evaluation records and is
// reproducible byte for byte; wall time lives only in the JSON summary.
// -------------------------------------------------------------------------

inline constexpr const char* kRunLogCsvHeader =
    "episode,sample,actions,reward,feasible,latency_ms,accuracy,unfairness,params";

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string join_actions(const std::vector<int>& actions) {
  std::string s;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(actions[i]);
  }
  return s;
}

}  // namespace detail

inline void write_runlog_csv(std::ostream& out, const RunLog& log) {
  out << kRunLogCsvHeader << "\n";
  for (const RunRecord& r : log.records) {
    out << r.episode << "," << r.sample << "," << detail::join_actions(r.actions) << ","
        << detail::format_double(r.reward) << "," << (r.feasible ? 1 : 0) << ","
        << detail::format_double(r.latency_ms) << ","
        << (r.accuracy ? detail::format_double(*r.accuracy) : std::string()) << ","
        << (r.unfairness_score ? detail::format_double(*r.unfairness_score) : std::string())
        << "," << r.params << "\n";
  }
}

inline nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json best_so_far = nlohmann::json::array();
  for (const BestSoFarEntry& e : s.best_so_far)
    best_so_far.push_back({{"episode", e.episode}, {"reward", e.reward}});
  return nlohmann::json{{"episodes", s.episodes},
                        {"samples_per_episode", s.samples_per_episode},
                        {"total_evaluations", s.total_evaluations},
                        {"backend_calls", s.backend_calls},
                        {"valid_rate", s.valid_rate},
                        {"best_reward", s.best_reward},
                        {"best_episode", s.best_episode},
                        {"best_sample", s.best_sample},
                        {"best_actions", s.best_actions},
                        {"best_architecture", to_json(s.best_architecture)},
                        {"best_so_far", best_so_far},
                        {"wall_time_ms", s.wall_time_ms}};
}

// -------------------------------------------------------------------------
// RunConfig JSON
// -------------------------------------------------------------------------

inline RewardParams reward_params_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {}, {"alpha", "beta"}, "reward params");
  RewardParams p;
  if (j.contains("alpha")) p.alpha = detail::get_field<double>(j, "alpha", "reward params");
  if (j.contains("beta")) p.beta = detail::get_field<double>(j, "beta", "reward params");
  return p;
}

inline Specification specification_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {"timing_constraint_ms", "accuracy_constraint"}, {"device_id"},
                         "specification");
  Specification spec;
  spec.timing_constraint_ms =
      detail::get_field<double>(j, "timing_constraint_ms", "specification");
  spec.accuracy_constraint = detail::get_field<double>(j, "accuracy_constraint", "specification");
  if (j.contains("device_id"))
    spec.device_id = detail::get_field<std::string>(j, "device_id", "specification");
  return spec;
}

inline ControllerHyperparams controller_hyperparams_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {},
                         {"hidden_dim", "embedding_dim", "learning_rate", "discount",
                          "baseline_decay", "batch_size", "temperature"},
                         "controller config");
  ControllerHyperparams h;
  if (j.contains("hidden_dim"))
    h.hidden_dim = detail::get_field<int>(j, "hidden_dim", "controller config");
  if (j.contains("embedding_dim"))
    h.embedding_dim = detail::get_field<int>(j, "embedding_dim", "controller config");
  if (j.contains("learning_rate"))
    h.learning_rate = detail::get_field<double>(j, "learning_rate", "controller config");
  if (j.contains("discount"))
    h.discount = detail::get_field<double>(j, "discount", "controller config");
  if (j.contains("baseline_decay"))
    h.baseline_decay = detail::get_field<double>(j, "baseline_decay", "controller config");
  if (j.contains("batch_size"))
    h.batch_size = detail::get_field<int>(j, "batch_size", "controller config");
  if (j.contains("temperature"))
    h.temperature = detail::get_field<double>(j, "temperature", "controller config");
  validate_hyperparams(h);
  return h;
}

inline SurrogateConfig surrogate_config_from_json(const nlohmann::json& j,
                                                  std::uint64_t default_seed) {
  detail::require_fields(j, {},
                         {"max_accuracy", "min_accuracy", "size_scale", "base_gap", "tail_scale",
                          "tail_window", "majority_fraction", "noise_amplitude", "seed"},
                         "surrogate config");
  SurrogateConfig s;
  s.seed = default_seed;
  if (j.contains("max_accuracy"))
    s.max_accuracy = detail::get_field<double>(j, "max_accuracy", "surrogate config");
  if (j.contains("min_accuracy"))
    s.min_accuracy = detail::get_field<double>(j, "min_accuracy", "surrogate config");
  if (j.contains("size_scale"))
    s.size_scale = detail::get_field<double>(j, "size_scale", "surrogate config");
  if (j.contains("base_gap"))
    s.base_gap = detail::get_field<double>(j, "base_gap", "surrogate config");
  if (j.contains("tail_scale"))
    s.tail_scale = detail::get_field<double>(j, "tail_scale", "surrogate config");
  if (j.contains("tail_window"))
    s.tail_window = detail::get_field<int>(j, "tail_window", "surrogate config");
  if (j.contains("majority_fraction"))
    s.majority_fraction = detail::get_field<double>(j, "majority_fraction", "surrogate config");
  if (j.contains("noise_amplitude"))
    s.noise_amplitude = detail::get_field<double>(j, "noise_amplitude", "surrogate config");
  if (j.contains("seed"))
    s.seed = detail::get_field<std::uint64_t>(j, "seed", "surrogate config");
  validate_surrogate_config(s);
  return s;
}

inline FreezeSettings freeze_settings_from_json(const nlohmann::json& j) {
  detail::require_fields(
      j, {"trace_path"},
      {"freeze_ratio", "normalization", "layer_to_block_map", "block_out_channels"},
      "freeze settings");
  FreezeSettings f;
  f.trace_path = detail::get_field<std::string>(j, "trace_path", "freeze settings");
  if (j.contains("freeze_ratio"))
    f.freeze_ratio = detail::get_field<double>(j, "freeze_ratio", "freeze settings");
  if (j.contains("normalization")) {
    const std::string n = detail::get_field<std::string>(j, "normalization", "freeze settings");
    if (n == "none")
      f.normalization = VariationNormalization::None;
    else if (n == "per_dimension")
      f.normalization = VariationNormalization::PerDimension;
    else
      throw ParseError("freeze settings: unknown normalization \"" + n + "\"");
  }
  if (j.contains("layer_to_block_map"))
    f.layer_to_block_map =
        detail::get_field<std::vector<int>>(j, "layer_to_block_map", "freeze settings");
  if (j.contains("block_out_channels"))
    f.block_out_channels =
        detail::get_field<std::vector<int>>(j, "block_out_channels", "freeze settings");
  return f;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {"search_space", "specification", "episodes", "seed"},
                         {"reward", "controller", "surrogate", "backend", "parallelism",
                          "latency_table", "freeze", "output_dir"},
                         "run config");
  RunConfig cfg;
  cfg.search_space = search_space_config_from_json(j.at("search_space"));
  cfg.specification = specification_from_json(j.at("specification"));
  cfg.episodes = detail::get_field<int>(j, "episodes", "run config");
  cfg.seed = detail::get_field<std::uint64_t>(j, "seed", "run config");
  if (j.contains("reward")) cfg.reward_params = reward_params_from_json(j.at("reward"));
  if (j.contains("controller"))
    cfg.controller = controller_hyperparams_from_json(j.at("controller"));
  cfg.surrogate = surrogate_config_from_json(
      j.contains("surrogate") ? j.at("surrogate") : nlohmann::json::object(), cfg.seed);
  if (j.contains("backend"))
    cfg.backend = detail::get_field<std::string>(j, "backend", "run config");
  if (j.contains("parallelism"))
    cfg.parallelism = detail::get_field<int>(j, "parallelism", "run config");
  if (j.contains("latency_table"))
    cfg.latency_table_path = detail::get_field<std::string>(j, "latency_table", "run config");
  if (j.contains("freeze")) cfg.freeze = freeze_settings_from_json(j.at("freeze"));
  if (j.contains("output_dir"))
    cfg.output_dir = detail::get_field<std::string>(j, "output_dir", "run config");
  return cfg;
}

// Path-based entry point: loads the latency table and, when freezing, the
// trace from the configured paths.
inline RunOutcome run_search(const RunConfig& cfg) {
  if (cfg.latency_table_path.empty())
    throw ValidationError("run config needs a latency_table path");
  std::ifstream table_in(cfg.latency_table_path);
  if (!table_in) throw IoError("cannot open latency table " + cfg.latency_table_path);
  const LatencyTable table = latency_table_from_stream(table_in);
  std::optional<FeatureTrace> trace;
  if (cfg.freeze) {
    std::ifstream trace_in(cfg.freeze->trace_path);
    if (!trace_in) throw IoError("cannot open trace " + cfg.freeze->trace_path);
    trace = trace_from_stream(trace_in);
  }
  return run_search(cfg, table, trace);
}

}  // namespace fahana
