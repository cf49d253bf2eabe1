#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fahana/fahana.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fahana::IoError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw fahana::IoError("cannot write " + path);
  return out;
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw fahana::ParseError(path + ": " + e.what());
  }
}

// Writes either to a file or to stdout when no path was given.
void emit(const std::optional<std::string>& path, const std::string& content) {
  if (path) {
    std::ofstream out = open_output(*path);
    out << content;
    if (!out) throw fahana::IoError("failed writing " + *path);
  } else {
    std::cout << content;
  }
}

struct SearchArgs {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  std::optional<std::string> resume_path;
};

int run_search_command(const SearchArgs& args) {
  fahana::RunConfig cfg = fahana::run_config_from_json(load_json(args.config_path));
  if (args.out_dir) cfg.output_dir = *args.out_dir;
  if (args.jobs) cfg.parallelism = *args.jobs;
  if (cfg.output_dir.empty())
    throw fahana::ValidationError("no output directory (set output_dir or pass --out)");
  if (cfg.latency_table_path.empty())
    throw fahana::ValidationError("run config needs a latency_table path");

  std::ifstream table_in = open_input(cfg.latency_table_path);
  const fahana::LatencyTable table = fahana::latency_table_from_stream(table_in);
  std::optional<fahana::FeatureTrace> trace;
  if (cfg.freeze) {
    std::ifstream trace_in = open_input(cfg.freeze->trace_path);
    trace = fahana::trace_from_stream(trace_in);
  }
  std::optional<fahana::ControllerState> resume;
  if (args.resume_path)
    resume = fahana::controller_from_json(load_json(*args.resume_path));

  const fahana::RunOutcome outcome = fahana::run_search(cfg, table, trace, resume);

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw fahana::IoError("cannot create " + cfg.output_dir + ": " + ec.message());
  {
    std::ofstream out = open_output((fs::path(cfg.output_dir) / "runlog.csv").string());
    fahana::write_runlog_csv(out, outcome.log);
  }
  emit((fs::path(cfg.output_dir) / "summary.json").string(),
       fahana::to_json(outcome.log.summary).dump(2) + "\n");
  emit((fs::path(cfg.output_dir) / "best_architecture.json").string(),
       fahana::to_json(outcome.log.summary.best_architecture).dump(2) + "\n");
  emit((fs::path(cfg.output_dir) / "controller.json").string(),
       fahana::to_json(outcome.controller).dump() + "\n");
  if (outcome.freeze_plan)
    emit((fs::path(cfg.output_dir) / "freeze_plan.json").string(),
         fahana::to_json(*outcome.freeze_plan).dump(2) + "\n");

  std::cout << "episodes: " << outcome.log.summary.episodes
            << "  evaluations: " << outcome.log.summary.total_evaluations << "\n";
  if (outcome.freeze_plan)
    std::cout << "frozen blocks: " << outcome.frozen_blocks
              << "  searchable: " << outcome.effective_space.num_searchable_blocks << "\n";
  std::cout << "valid rate: " << outcome.log.summary.valid_rate << "\n";
  std::cout << "best reward: " << outcome.log.summary.best_reward << " (episode "
            << outcome.log.summary.best_episode << ", sample "
            << outcome.log.summary.best_sample << ")\n";
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness- and hardware-aware architecture search"};
  app.require_subcommand(1);

  SearchArgs search_args;
  std::string out_path_value, resume_value;
  int jobs_value = 0;
  auto* search = app.add_subcommand("search", "run a seeded architecture search");
  search->add_option("--config", search_args.config_path, "run config JSON")->required();
  auto* out_opt = search->add_option("--out", out_path_value, "output directory");
  auto* jobs_opt = search->add_option("--jobs", jobs_value, "evaluation threads");
  auto* resume_opt = search->add_option("--resume", resume_value, "controller checkpoint JSON");

  std::string enum_config;
  std::int64_t enum_limit = 0;
  std::string enum_out_value;
  auto* enumerate = app.add_subcommand("enumerate", "list every architecture in a space");
  enumerate->add_option("--config", enum_config, "search space config JSON")->required();
  enumerate->add_option("--limit", enum_limit, "refuse spaces larger than this")->required();
  auto* enum_out_opt = enumerate->add_option("--out", enum_out_value, "output file");

  std::string freeze_trace;
  double freeze_ratio = 0.5;
  std::string freeze_norm = "none", freeze_out_value;
  auto* freeze = app.add_subcommand("freeze", "pick a freezing split from a feature trace");
  freeze->add_option("--trace", freeze_trace, "feature trace JSONL")->required();
  freeze->add_option("--ratio", freeze_ratio, "threshold as a fraction of the max variation")
      ->required();
  freeze->add_option("--normalization", freeze_norm, "none | per_dimension");
  auto* freeze_out_opt = freeze->add_option("--out", freeze_out_value, "output file");

  std::string lat_arch, lat_table;
  int lat_resolution = 0;
  auto* latency = app.add_subcommand("latency", "estimate latency from a lookup table");
  latency->add_option("--arch", lat_arch, "architecture JSON")->required();
  latency->add_option("--table", lat_table, "latency table CSV")->required();
  latency->add_option("--resolution", lat_resolution, "input resolution")->required();

  std::string score_replay, score_baseline, score_device = "raspberry";
  double score_ac = 0.0, score_tc = 0.0, score_alpha = 1.0, score_beta = 1.0;
  bool score_csv = false;
  std::string score_out_value;
  auto* score = app.add_subcommand("score", "score a replay table against constraints");
  score->add_option("--replay", score_replay, "replay results CSV")->required();
  score->add_option("--baseline", score_baseline, "baseline model id")->required();
  score->add_option("--ac", score_ac, "accuracy constraint")->required();
  auto* tc_opt = score->add_option("--tc", score_tc, "timing constraint in ms");
  score->add_option("--device", score_device, "device for the timing gate");
  score->add_option("--alpha", score_alpha, "accuracy weight");
  score->add_option("--beta", score_beta, "unfairness weight");
  score->add_flag("--csv", score_csv, "emit CSV instead of a table");
  auto* score_out_opt = score->add_option("--out", score_out_value, "output file");

  std::string pareto_points, pareto_out_value;
  auto* pareto = app.add_subcommand("pareto", "extract the accuracy/unfairness frontier");
  pareto->add_option("--points", pareto_points, "points CSV (id,accuracy,unfairness)")
      ->required();
  auto* pareto_out_opt = pareto->add_option("--out", pareto_out_value, "output file");

  std::string gt_config, gt_device, gt_out_value;
  double gt_coeff = 1e-5, gt_header = 0.0;
  auto* gen_table = app.add_subcommand("gen-table", "synthesize a latency table for a space");
  gen_table->add_option("--config", gt_config, "search space config JSON")->required();
  gen_table->add_option("--device", gt_device, "device id")->required();
  gen_table->add_option("--coeff", gt_coeff, "ms per weight per pixel");
  gen_table->add_option("--header-overhead", gt_header, "fixed header cost in ms");
  auto* gt_out_opt = gen_table->add_option("--out", gt_out_value, "output file");

  int tr_layers = 0, tr_dim = 16, tr_groups = 2, tr_samples = 8, tr_flat = 0;
  double tr_base = 0.05, tr_jump = 1.0, tr_noise = 0.01;
  std::uint64_t tr_seed = 0;
  std::string tr_out_value;
  auto* gen_trace = app.add_subcommand("gen-trace", "synthesize a per-layer feature trace");
  gen_trace->add_option("--layers", tr_layers, "number of layers")->required();
  gen_trace->add_option("--flat-until", tr_flat, "last layer with the small amplitude")
      ->required();
  gen_trace->add_option("--dim", tr_dim, "feature dimension");
  gen_trace->add_option("--groups", tr_groups, "number of groups");
  gen_trace->add_option("--samples", tr_samples, "samples per group per layer");
  gen_trace->add_option("--base", tr_base, "group-mean separation before the jump");
  gen_trace->add_option("--jump", tr_jump, "group-mean separation after the jump");
  gen_trace->add_option("--noise", tr_noise, "per-sample noise");
  gen_trace->add_option("--seed", tr_seed, "rng seed");
  auto* tr_out_opt = gen_trace->add_option("--out", tr_out_value, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (search->parsed()) {
      if (*out_opt) search_args.out_dir = out_path_value;
      if (*jobs_opt) search_args.jobs = jobs_value;
      if (*resume_opt) search_args.resume_path = resume_value;
      return run_search_command(search_args);
    }
    if (enumerate->parsed()) {
      const fahana::SearchSpaceConfig cfg =
          fahana::search_space_config_from_json(load_json(enum_config));
      const auto archs = fahana::enumerate_all(cfg, enum_limit);
      std::ostringstream out;
      for (const fahana::ArchitectureSpec& arch : archs) {
        nlohmann::json j = fahana::to_json(arch);
        j["actions"] = fahana::encode(arch, cfg);
        out << j.dump() << "\n";
      }
      emit(*enum_out_opt ? std::optional(enum_out_value) : std::nullopt, out.str());
      std::cerr << archs.size() << " architectures\n";
      return 0;
    }
    if (freeze->parsed()) {
      std::ifstream in = open_input(freeze_trace);
      const fahana::FeatureTrace trace = fahana::trace_from_stream(in);
      fahana::VariationNormalization norm;
      if (freeze_norm == "none")
        norm = fahana::VariationNormalization::None;
      else if (freeze_norm == "per_dimension")
        norm = fahana::VariationNormalization::PerDimension;
      else
        throw fahana::ValidationError("unknown normalization \"" + freeze_norm + "\"");
      const fahana::FreezePlan plan =
          fahana::split_point(fahana::layer_variation(trace, norm), freeze_ratio);
      emit(*freeze_out_opt ? std::optional(freeze_out_value) : std::nullopt,
           fahana::to_json(plan).dump(2) + "\n");
      return 0;
    }
    if (latency->parsed()) {
      const fahana::ArchitectureSpec arch =
          fahana::architecture_from_json(load_json(lat_arch));
      std::ifstream in = open_input(lat_table);
      const fahana::LatencyTable table = fahana::latency_table_from_stream(in);
      const double total = fahana::estimate(arch, table, lat_resolution);
      nlohmann::json j{{"device", table.device_id},
                       {"header_overhead_ms", table.header_overhead_ms},
                       {"latency_ms", total}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (score->parsed()) {
      std::ifstream in = open_input(score_replay);
      const fahana::ReplayTable table = fahana::replay_table_from_stream(in);
      fahana::Specification spec;
      spec.accuracy_constraint = score_ac;
      spec.timing_constraint_ms =
          *tc_opt ? score_tc : std::numeric_limits<double>::infinity();
      spec.device_id = score_device;
      const fahana::ScoreReport report = fahana::score_report(
          table, spec, fahana::RewardParams{score_alpha, score_beta}, score_baseline);
      std::ostringstream out;
      if (score_csv)
        fahana::write_score_report_csv(out, report);
      else
        fahana::print_score_report(out, report);
      emit(*score_out_opt ? std::optional(score_out_value) : std::nullopt, out.str());
      return 0;
    }
    if (pareto->parsed()) {
      std::ifstream in = open_input(pareto_points);
      const auto front = fahana::pareto_front(fahana::tradeoff_points_from_stream(in));
      std::ostringstream out;
      fahana::write_tradeoff_points(out, front);
      emit(*pareto_out_opt ? std::optional(pareto_out_value) : std::nullopt, out.str());
      return 0;
    }
    if (gen_table->parsed()) {
      const fahana::SearchSpaceConfig cfg =
          fahana::search_space_config_from_json(load_json(gt_config));
      const fahana::LatencyTable table =
          fahana::generate_latency_table(cfg, gt_device, gt_coeff, gt_header);
      std::ostringstream out;
      fahana::write_latency_table(out, table);
      emit(*gt_out_opt ? std::optional(gt_out_value) : std::nullopt, out.str());
      std::cerr << table.entries.size() << " entries\n";
      return 0;
    }
    if (gen_trace->parsed()) {
      const fahana::FeatureTrace trace =
          fahana::generate_trace(tr_layers, tr_dim, tr_groups, tr_samples, tr_flat, tr_base,
                                 tr_jump, tr_noise, tr_seed);
      std::ostringstream out;
      fahana::write_trace(out, trace);
      emit(*tr_out_opt ? std::optional(tr_out_value) : std::nullopt, out.str());
      return 0;
    }
  } catch (const fahana::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fahana::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
