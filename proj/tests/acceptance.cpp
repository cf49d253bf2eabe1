// Acceptance gate: one line per criterion, nonzero exit when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fahana/harness.hpp"
#include "fahana/report.hpp"

using namespace fahana;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct Checker {
  std::vector<std::string> problems;
  void require(bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  }
  void near(double actual, double expected, double tol, const std::string& label) {
    if (!(std::fabs(actual - expected) < tol))
      problems.push_back(label + ": got " + fmt("%.10g", actual) + ", want " +
                         fmt("%.10g", expected) + " +/- " + fmt("%g", tol));
  }
};

ReplayTable load_replay(const char* name) {
  const std::string path = std::string(FAHANA_DATA_DIR) + "/" + name;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return replay_table_from_stream(in);
}

// ---- shared fixtures -----------------------------------------------------

// Small two-block space whose reward landscape is cheap to scan exhaustively.
SearchSpaceConfig bench_space() {
  SearchSpaceConfig cfg;
  cfg.num_searchable_blocks = 2;
  cfg.kernel_choices = {3, 5};
  cfg.ch2_choices = {8, 16};
  cfg.ch3_choices = {8, 16};
  cfg.allow_skip = true;
  cfg.header_out_channels = 8;
  cfg.input_resolution = 16;
  return cfg;
}

SurrogateConfig bench_surrogate() {
  SurrogateConfig s;
  s.size_scale = 2000.0;
  s.tail_scale = 800.0;
  s.noise_amplitude = 0.02;
  s.seed = 0;
  return s;
}

RunConfig bench_run(const SearchSpaceConfig& space, double timing_ms, int episodes,
                    std::uint64_t seed) {
  RunConfig cfg;
  cfg.search_space = space;
  cfg.specification = Specification{timing_ms, 0.0, "bench"};
  cfg.surrogate = bench_surrogate();
  cfg.controller.hidden_dim = 16;
  cfg.controller.embedding_dim = 8;
  cfg.episodes = episodes;
  cfg.seed = seed;
  return cfg;
}

// ---- 1: recorded accuracy disparity --------------------------------------

const std::map<std::string, double>& published_disparity() {
  static const std::map<std::string, double> values{
      {"MobileNetV2", 0.2325},       {"ProxylessNAS-Mobile", 0.3094},
      {"MnasNet-0.5", 0.4521},       {"MobileNetV3-Small", 0.3253},
      {"MnasNet-1.0", 0.2913},       {"FaHaNa-Small", 0.1973},
      {"ResNet-50", 0.1855},         {"ResNet-18", 0.2155},
      {"ResNet-34", 0.2397},         {"ProxylessNAS-GPU", 0.2667},
      {"MobileNetV3-Large", 0.4543}, {"FaHaNa-Fair", 0.1755},
      {"SqueezeNet-1.0", 0.2159},
  };
  return values;
}

Checker check_disparity() {
  Checker c;
  int checked = 0;
  for (const char* file : {"replay_g1.csv", "replay_g2.csv", "replay_table1.csv"}) {
    const ReplayTable table = load_replay(file);
    for (const ReplayRow& row : table.rows) {
      const auto it = published_disparity().find(row.model);
      c.require(it != published_disparity().end(),
                std::string(file) + ": no recorded disparity for " + row.model);
      if (it == published_disparity().end()) continue;
      const double u = unfairness(replay_evaluate(row.model, table));
      c.near(u, it->second, 5e-5, std::string(file) + " " + row.model + " disparity");
      ++checked;
    }
  }
  c.require(checked == 19, "expected 19 rows across the replay files, saw " +
                               std::to_string(checked));
  return c;
}

// ---- 2: recorded reward gates --------------------------------------------

Checker check_rewards() {
  Checker c;
  const double sentinel = kInfeasibleReward;
  struct Expected {
    const char* model;
    double reward;
  };
  const std::vector<Expected> g1{
      {"MobileNetV2", 0.58},      {"ProxylessNAS-Mobile", 0.50}, {"MnasNet-0.5", sentinel},
      {"MobileNetV3-Small", sentinel}, {"MnasNet-1.0", sentinel},    {"FaHaNa-Small", 0.62},
  };
  const std::vector<Expected> g2{
      {"ResNet-50", 0.65},       {"ResNet-18", 0.62},  {"ResNet-34", 0.59},
      {"ProxylessNAS-GPU", 0.57}, {"MobileNetV3-Large", sentinel}, {"FaHaNa-Fair", 0.67},
  };
  const auto check_group = [&](const char* file, double ac, const std::vector<Expected>& rows) {
    const ReplayTable table = load_replay(file);
    const Specification spec{kInf, ac, ""};
    for (const Expected& e : rows) {
      const EvaluationResult r = evaluate_replay(e.model, table, spec, RewardParams{});
      if (e.reward == sentinel) {
        c.require(r.reward_value == sentinel && !r.feasible,
                  std::string(e.model) + ": expected the infeasible sentinel, got " +
                      fmt("%.10g", r.reward_value));
      } else {
        c.near(r.reward_value, e.reward, 5e-3, std::string(e.model) + " reward");
        c.require(r.feasible, std::string(e.model) + ": expected feasible");
      }
    }
  };
  check_group("replay_g1.csv", 0.81, g1);
  check_group("replay_g2.csv", 0.83, g2);

  // Recorded device latencies decide the timing gate at a 1500 ms budget.
  const std::vector<std::pair<const char*, bool>> meets{
      {"SqueezeNet-1.0", true}, {"MobileNetV3-Small", true}, {"MnasNet-0.5", true},
      {"MobileNetV2", false},   {"ProxylessNAS-GPU", false}, {"MnasNet-1.0", false},
      {"ProxylessNAS-Mobile", false},
  };
  const ReplayTable table1 = load_replay("replay_table1.csv");
  const Specification timing_spec{1500.0, 0.0, "raspberry"};
  for (const auto& [model, expected] : meets) {
    const EvaluationResult r = evaluate_replay(model, table1, timing_spec, RewardParams{});
    c.require(r.feasible == expected, std::string(model) + ": timing verdict should be " +
                                          (expected ? "pass" : "fail"));
  }
  return c;
}

// ---- 3: baseline-relative ratios -----------------------------------------

Checker check_ratios() {
  Checker c;
  const ReplayTable g1 = load_replay("replay_g1.csv");
  const ScoreReport r1 =
      score_report(g1, Specification{kInf, 0.81, "raspberry"}, RewardParams{}, "MobileNetV2");
  const ScoreRow* small = nullptr;
  for (const ScoreRow& row : r1.rows)
    if (row.model == "FaHaNa-Small") small = &row;
  c.require(small != nullptr, "FaHaNa-Small missing from the group-1 report");
  if (small) {
    c.require(small->fairness_change.has_value(), "fairness change missing");
    if (small->fairness_change)
      c.near(100.0 * *small->fairness_change, 15.14, 5e-3, "fairness improvement percent");
    c.require(small->storage_reduction.has_value(), "storage reduction missing");
    if (small->storage_reduction)
      c.near(*small->storage_reduction, 5.28, 5e-3, "storage reduction ratio");
    c.require(small->speedup_raspberry.has_value() && small->speedup_odroid.has_value(),
              "speedups missing");
    if (small->speedup_raspberry) c.near(*small->speedup_raspberry, 5.75, 5e-3, "speedup (rasp)");
    if (small->speedup_odroid) c.near(*small->speedup_odroid, 5.79, 5e-3, "speedup (odroid)");
  }

  const ReplayTable g2 = load_replay("replay_g2.csv");
  const ScoreReport r2 =
      score_report(g2, Specification{kInf, 0.83, ""}, RewardParams{}, "ResNet-50");
  for (const ScoreRow& row : r2.rows)
    if (row.model == "FaHaNa-Fair") {
      c.require(row.fairness_change.has_value(), "group-2 fairness change missing");
      if (row.fairness_change)
        c.near(100.0 * *row.fairness_change, 5.39, 5e-3, "group-2 fairness improvement percent");
    }
  return c;
}

// ---- 4: policy gradient vs central finite differences --------------------

Checker check_gradient() {
  Checker c;
  SearchSpaceConfig cfg;
  cfg.num_searchable_blocks = 1;
  cfg.kernel_choices = {3, 5};
  cfg.ch2_choices = {8, 16};
  cfg.ch3_choices = {8, 16};
  cfg.allow_skip = true;
  cfg.header_out_channels = 8;
  cfg.input_resolution = 16;

  for (const double discount : {1.0, 0.9}) {
    ControllerHyperparams hyper;
    hyper.hidden_dim = 4;
    hyper.embedding_dim = 3;
    hyper.batch_size = 3;
    hyper.discount = discount;
    ControllerState state = controller_init(cfg, hyper, 2024);
    state.baseline = 0.1;

    const std::vector<EpisodeRecord> batch{
        {{1, 2, 1, 0, 1}, {}, 0.7, true},
        {{0, 0, 0, 0, 0}, {}, -1.0, false},
        {{1, 1, 0, 1, 0}, {}, 0.3, true},
    };
    const ControllerParams analytic = policy_gradient(state, batch);

    // Relative tolerance 1e-4 with an absolute floor of 1e-10: the central
    // difference quantizes near 1e-12, so coordinates whose derivative is
    // ~1e-9 cannot support a purely relative comparison.
    const double h = 1e-5;
    double worst = 0.0;
    analytic.for_each_tensor([&](const char* name, const auto& grad) {
      state.params.for_each_tensor([&](const char* other, auto& value) {
        if (std::string(name) != other) return;
        for (Eigen::Index i = 0; i < value.size(); ++i) {
          const double saved = value.data()[i];
          value.data()[i] = saved + h;
          const double up = policy_objective(state, batch);
          value.data()[i] = saved - h;
          const double down = policy_objective(state, batch);
          value.data()[i] = saved;
          const double numeric = (up - down) / (2.0 * h);
          const double a = grad.data()[i];
          const double bound = 1e-10 + 1e-4 * std::max(std::fabs(a), std::fabs(numeric));
          worst = std::max(worst, std::fabs(a - numeric) / bound);
        }
      });
    });
    c.require(worst < 1.0, "discount " + fmt("%.1f", discount) +
                               ": worst gradient error at " + fmt("%.3g", worst) +
                               " of the 1e-4 relative / 1e-10 absolute bound");
  }
  return c;
}

// ---- 5: seeded searches reach the oracle's top percentile ----------------

Checker check_search_quality() {
  Checker c;
  const SearchSpaceConfig space = bench_space();
  const BigInt card = cardinality(space);
  c.require(card >= 1000 && card <= 10000,
            "bench space cardinality out of range: " + card.str());

  const LatencyTable table = generate_latency_table(space, "bench", 1e-6, 1.0);
  SurrogateBackend oracle_backend(bench_surrogate());
  const Specification spec{1.5, 0.0, "bench"};
  const OracleResult oracle =
      exhaustive_oracle(space, spec, RewardParams{}, table, oracle_backend);
  c.require(BigInt(oracle.rows.size()) == card, "oracle row count mismatch");

  std::vector<double> rewards;
  rewards.reserve(oracle.rows.size());
  for (const OracleRow& r : oracle.rows) rewards.push_back(r.reward);
  std::sort(rewards.begin(), rewards.end(), std::greater<>());
  const std::size_t k = std::max<std::size_t>(1, rewards.size() / 100);
  const double threshold = rewards[k - 1];

  int passes = 0;
  std::string misses;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const RunOutcome out = run_search(bench_run(space, 1.5, 500, seed), table);
    if (out.log.summary.best_reward >= threshold) {
      ++passes;
    } else {
      misses += " seed " + std::to_string(seed) + " best " +
                fmt("%.6f", out.log.summary.best_reward);
    }
  }
  c.require(passes >= 9, "only " + std::to_string(passes) + "/10 seeds reached the top " +
                             std::to_string(k) + " rewards (threshold " +
                             fmt("%.6f", threshold) + ");" + misses);
  return c;
}

// ---- 6: freeze split selection and space reduction -----------------------

Checker check_freezing() {
  Checker c;

  // (a) fixed profile: the jump sits at layer 3.
  const FreezePlan fixed = split_point({1.0, 1.0, 10.0, 9.0}, 0.5);
  c.require(fixed.split_layer == 3,
            "profile [1,1,10,9]: split at " + std::to_string(fixed.split_layer));
  c.require(fixed.frozen_layer_count == 2, "profile [1,1,10,9]: wrong frozen count");

  // (b) synthetic traces that stay flat through layer 12 and jump at 13.
  for (const std::uint64_t seed : {1ULL, 2ULL}) {
    const FeatureTrace trace = generate_trace(17, 16, 2, 8, 12, 0.05, 1.0, 0.01, seed);
    const FreezePlan plan =
        split_point(layer_variation(trace, VariationNormalization::None), 0.5);
    c.require(plan.split_layer == 12 || plan.split_layer == 13,
              "trace seed " + std::to_string(seed) + ": split at " +
                  std::to_string(plan.split_layer));
  }

  // (c) freezing 8 of 17 blocks divides the space by the per-block factor^8.
  SearchSpaceConfig wide;
  wide.num_searchable_blocks = 17;
  wide.kernel_choices = {3, 5, 7};
  wide.ch2_choices = {8, 16, 24, 32};
  wide.ch3_choices = {8, 16, 24, 32};
  wide.allow_skip = true;
  wide.header_out_channels = 8;
  wide.input_resolution = 224;

  std::vector<double> profile(17, 0.1);
  for (int l = 8; l < 17; ++l) profile[l] = 1.0;
  const FreezePlan plan = split_point(profile, 0.5);
  c.require(plan.split_layer == 9 && plan.frozen_layer_count == 8,
            "17-layer profile: split at " + std::to_string(plan.split_layer));
  std::vector<int> identity(17);
  for (int i = 0; i < 17; ++i) identity[i] = i + 1;

  const FreezeOutcome frozen = apply_freeze(plan, wide, identity);
  c.require(frozen.frozen_block_count == 8, "expected 8 frozen blocks");
  c.require(frozen.config.num_searchable_blocks == 9, "expected 9 searchable blocks left");
  const BigInt options = per_block_option_count(wide);
  BigInt factor = 1;
  for (int i = 0; i < 8; ++i) factor *= options;
  // With the skip placeholder the all-skip exclusion leaves a remainder of
  // factor - 1; without it the ratio is exact.
  c.require(cardinality(wide) == factor * cardinality(frozen.config) + (factor - 1),
            "skip-enabled cardinality reduction is not the per-block factor^8");

  SearchSpaceConfig no_skip = wide;
  no_skip.allow_skip = false;
  const FreezeOutcome frozen_ns = apply_freeze(plan, no_skip, identity);
  const BigInt options_ns = per_block_option_count(no_skip);
  BigInt factor_ns = 1;
  for (int i = 0; i < 8; ++i) factor_ns *= options_ns;
  c.require(cardinality(no_skip) == factor_ns * cardinality(frozen_ns.config),
            "skip-free cardinality reduction is not the per-block factor^8");

  // (d) paired seeded runs under a tight budget: the frozen space's valid
  // rate strictly exceeds the full space's.
  SearchSpaceConfig deep = bench_space();
  deep.kernel_choices = {3};
  deep.num_searchable_blocks = 4;
  const LatencyTable table = generate_latency_table(deep, "bench", 1e-6, 1.0);
  const FeatureTrace trace = generate_trace(4, 8, 2, 4, 2, 0.05, 1.0, 0.0, 1);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const RunConfig full_cfg = bench_run(deep, 1.3, 40, seed);
    const RunOutcome full = run_search(full_cfg, table);

    RunConfig frozen_cfg = full_cfg;
    frozen_cfg.freeze = FreezeSettings{};
    frozen_cfg.freeze->freeze_ratio = 0.5;
    const RunOutcome part = run_search(frozen_cfg, table, trace);
    c.require(part.frozen_blocks == 2, "paired run froze " +
                                           std::to_string(part.frozen_blocks) + " blocks");
    c.require(part.log.summary.valid_rate > full.log.summary.valid_rate,
              "seed " + std::to_string(seed) + ": frozen valid rate " +
                  fmt("%.3f", part.log.summary.valid_rate) + " not above full " +
                  fmt("%.3f", full.log.summary.valid_rate));
  }
  return c;
}

// ---- 7: enumeration count matches the closed-form cardinality ------------

Checker check_enumeration() {
  Checker c;
  std::mt19937_64 gen(99);
  const auto subset = [&](std::vector<int> options) {
    const std::uint64_t all = (1ULL << options.size()) - 1;
    const std::uint64_t mask = 1 + gen() % all;
    std::vector<int> picked;
    for (std::size_t i = 0; i < options.size(); ++i)
      if (mask & (1ULL << i)) picked.push_back(options[i]);
    return picked;
  };

  int done = 0;
  for (int attempt = 0; attempt < 2000 && done < 50; ++attempt) {
    SearchSpaceConfig cfg;
    cfg.num_searchable_blocks = 1 + static_cast<int>(gen() % 3);
    cfg.kernel_choices = subset({3, 5, 7});
    cfg.ch2_choices = subset({8, 16, 24, 32});
    cfg.ch3_choices = subset({8, 16, 24, 32});
    cfg.allow_skip = (gen() & 1) != 0;
    cfg.header_out_channels = (gen() & 1) ? 8 : 16;
    cfg.input_resolution = 8 << (gen() % 3);
    const BigInt card = cardinality(cfg);
    if (card > 100000) continue;

    const std::vector<ArchitectureSpec> archs = enumerate_all(cfg, 100000);
    c.require(BigInt(archs.size()) == card,
              "config " + std::to_string(done) + ": enumerated " +
                  std::to_string(archs.size()) + " of " + card.str());

    std::set<std::vector<int>> seen;
    bool duplicate = false;
    for (const ArchitectureSpec& arch : archs)
      if (!seen.insert(encode(arch, cfg)).second) duplicate = true;
    c.require(!duplicate, "config " + std::to_string(done) + ": duplicate encodings");
    ++done;
  }
  c.require(done == 50, "only sampled " + std::to_string(done) + " configs");
  return c;
}

// ---- 8: determinism across parallelism and backend bypass ----------------

Checker check_determinism() {
  Checker c;
  const SearchSpaceConfig space = bench_space();
  const LatencyTable table = generate_latency_table(space, "bench", 1e-6, 1.0);

  const RunConfig base = bench_run(space, 1.5, 30, 42);
  RunConfig wide = base;
  wide.parallelism = 8;
  const auto log_bytes = [](const RunOutcome& out) {
    std::ostringstream s;
    write_runlog_csv(s, out.log);
    return s.str();
  };
  const RunOutcome serial_a = run_search(base, table);
  const RunOutcome serial_b = run_search(base, table);
  const RunOutcome parallel = run_search(wide, table);
  const std::string bytes = log_bytes(serial_a);
  c.require(bytes == log_bytes(serial_b), "repeated serial runs differ");
  c.require(bytes == log_bytes(parallel), "8-way parallel log differs from serial");
  c.require(to_json(serial_a.controller) == to_json(parallel.controller),
            "trained controllers differ across parallelism");

  // Every architecture misses a budget below the smallest latency, so the
  // accuracy backend must never be consulted.
  RunConfig blocked = bench_run(space, 0.5, 10, 7);
  blocked.parallelism = 4;
  const RunOutcome out = run_search(blocked, table);
  c.require(out.log.summary.total_evaluations == 50, "expected 50 evaluations");
  c.require(out.log.summary.backend_calls == 0,
            "backend called " + std::to_string(out.log.summary.backend_calls) +
                " times for timing-infeasible samples");
  c.require(out.log.summary.valid_rate == 0.0, "expected no feasible samples");
  return c;
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0 = no stated budget
  std::function<Checker()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"recorded-accuracy-disparity", 1.0, check_disparity},
      {"recorded-reward-gates", 1.0, check_rewards},
      {"baseline-relative-ratios", 0.0, check_ratios},
      {"policy-gradient-finite-difference", 10.0, check_gradient},
      {"search-reaches-oracle-top-percentile", 300.0, check_search_quality},
      {"freeze-split-and-space-reduction", 120.0, check_freezing},
      {"enumeration-matches-cardinality", 120.0, check_enumeration},
      {"determinism-and-backend-bypass", 0.0, check_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& criterion = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Checker result;
    try {
      result = criterion.run();
    } catch (const std::exception& e) {
      result.problems.push_back(std::string("unhandled exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.budget_seconds > 0.0 && seconds >= criterion.budget_seconds)
      result.problems.push_back("took " + fmt("%.2f", seconds) + " s, budget " +
                                fmt("%.0f", criterion.budget_seconds) + " s");
    const bool ok = result.problems.empty();
    failures += ok ? 0 : 1;
    std::printf("[%s] %zu %s (%.2f s)\n", ok ? "PASS" : "FAIL", i + 1, criterion.name, seconds);
    for (const std::string& p : result.problems) std::printf("       - %s\n", p.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
