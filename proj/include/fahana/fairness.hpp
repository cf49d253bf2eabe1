#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fahana/errors.hpp"

namespace fahana {

struct OutcomeRecord {
  int predicted_class = 0;
  int true_class = 0;
  int group_id = 0;
};

struct LabeledOutcomes {
  std::vector<OutcomeRecord> records;
  int num_groups = 0;
};

struct GroupedAccuracy {
  double overall = 0.0;
  std::vector<double> per_group;
  std::vector<std::int64_t> group_sizes;
};

// Per-group and sample-weighted overall accuracy. Every group id in
// [0, num_groups) must occur at least once.
inline GroupedAccuracy group_accuracy(const LabeledOutcomes& outcomes) {
  if (outcomes.num_groups < 1) throw ValidationError("num_groups must be >= 1");
  if (outcomes.records.empty()) throw EmptyGroup("no outcome records");
  std::vector<std::int64_t> sizes(outcomes.num_groups, 0);
  std::vector<std::int64_t> hits(outcomes.num_groups, 0);
  for (const OutcomeRecord& r : outcomes.records) {
    if (r.group_id < 0 || r.group_id >= outcomes.num_groups)
      throw ValidationError("group id " + std::to_string(r.group_id) + " out of range");
    sizes[r.group_id] += 1;
    if (r.predicted_class == r.true_class) hits[r.group_id] += 1;
  }
  GroupedAccuracy ga;
  std::int64_t total = 0, total_hits = 0;
  for (int g = 0; g < outcomes.num_groups; ++g) {
    if (sizes[g] == 0) throw EmptyGroup("group " + std::to_string(g) + " has no records");
    ga.per_group.push_back(static_cast<double>(hits[g]) / static_cast<double>(sizes[g]));
    ga.group_sizes.push_back(sizes[g]);
    total += sizes[g];
    total_hits += hits[g];
  }
  ga.overall = static_cast<double>(total_hits) / static_cast<double>(total);
  return ga;
}

// Sum over groups of |group accuracy - overall accuracy|. With two groups
// this collapses to |a_0 - a_1| whenever overall is the weighted mean.
inline double unfairness(const GroupedAccuracy& ga) {
  if (ga.per_group.empty()) throw ValidationError("no per-group accuracies");
  double u = 0.0;
  for (double a : ga.per_group) u += std::fabs(a - ga.overall);
  return u;
}

// Relative improvement of a candidate's unfairness over a baseline's:
// positive means fairer.
inline double relative_fairness_change(double candidate_unfairness, double baseline_unfairness) {
  if (!(baseline_unfairness > 0.0))
    throw ZeroBaseline("baseline unfairness must be positive");
  return (baseline_unfairness - candidate_unfairness) / baseline_unfairness;
}

// JSON-lines loader, one {"predicted_class", "true_class", "group_id"}
// object per line. num_groups is max group id + 1.
inline LabeledOutcomes labeled_outcomes_from_stream(std::istream& in) {
  LabeledOutcomes out;
  std::string line;
  int max_group = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("outcomes line " + std::to_string(line_no) + ": " + e.what());
    }
    OutcomeRecord r;
    try {
      r.predicted_class = j.at("predicted_class").get<int>();
      r.true_class = j.at("true_class").get<int>();
      r.group_id = j.at("group_id").get<int>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("outcomes line " + std::to_string(line_no) + ": bad record");
    }
    if (r.group_id < 0)
      throw ParseError("outcomes line " + std::to_string(line_no) + ": negative group id");
    max_group = std::max(max_group, r.group_id);
    out.records.push_back(r);
  }
  out.num_groups = max_group + 1;
  return out;
}

}  // namespace fahana
