#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fahana/errors.hpp"
#include "fahana/random.hpp"
#include "fahana/search_space.hpp"

namespace fahana {

using FeatureVector = std::vector<double>;

// Per-layer, per-group feature samples collected from a backbone forward
// pass. layers[l][g] holds the sample vectors of group g at layer l+1
// (layers are 1-based everywhere user-facing).
struct FeatureTrace {
  std::vector<std::vector<std::vector<FeatureVector>>> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_groups() const { return layers.empty() ? 0 : static_cast<int>(layers[0].size()); }
};

enum class VariationNormalization { None, PerDimension };

namespace detail {

inline void check_trace(const FeatureTrace& trace) {
  if (trace.layers.empty()) throw ValidationError("trace has no layers");
  const int groups = trace.num_groups();
  if (groups < 2) throw ValidationError("trace needs at least 2 groups");
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    if (static_cast<int>(layer.size()) != groups)
      throw ValidationError("layer " + std::to_string(l + 1) + ": inconsistent group count");
    std::size_t dim = 0;
    bool have_dim = false;
    for (std::size_t g = 0; g < layer.size(); ++g) {
      if (layer[g].empty())
        throw ValidationError("layer " + std::to_string(l + 1) + ", group " + std::to_string(g) +
                              ": no samples");
      for (const FeatureVector& v : layer[g]) {
        if (!have_dim) {
          dim = v.size();
          have_dim = true;
          if (dim == 0) throw DimensionMismatch("layer " + std::to_string(l + 1) +
                                                ": zero-dimensional features");
        } else if (v.size() != dim) {
          throw DimensionMismatch("layer " + std::to_string(l + 1) +
                                  ": feature dimensions disagree");
        }
      }
    }
  }
}

inline FeatureVector mean_of(const std::vector<FeatureVector>& samples) {
  FeatureVector mean(samples[0].size(), 0.0);
  for (const FeatureVector& v : samples)
    for (std::size_t d = 0; d < v.size(); ++d) mean[d] += v[d];
  for (double& m : mean) m /= static_cast<double>(samples.size());
  return mean;
}

}  // namespace detail

// How far the groups' mean feature vectors sit apart at each layer.
// Two groups: the distance between the means. More groups: the root of
// the summed squared deviations of each group mean from their grand mean
// (which reduces to distance/sqrt(2) at two groups; the two-group case is
// kept as the plain distance).
inline std::vector<double> layer_variation(
    const FeatureTrace& trace, VariationNormalization norm = VariationNormalization::None) {
  detail::check_trace(trace);
  std::vector<double> variations;
  variations.reserve(trace.layers.size());
  for (const auto& layer : trace.layers) {
    std::vector<FeatureVector> means;
    means.reserve(layer.size());
    for (const auto& group : layer) means.push_back(detail::mean_of(group));
    const std::size_t dim = means[0].size();
    double sq = 0.0;
    if (means.size() == 2) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = means[0][d] - means[1][d];
        sq += diff * diff;
      }
    } else {
      FeatureVector grand(dim, 0.0);
      for (const FeatureVector& m : means)
        for (std::size_t d = 0; d < dim; ++d) grand[d] += m[d];
      for (double& g : grand) g /= static_cast<double>(means.size());
      for (const FeatureVector& m : means)
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = m[d] - grand[d];
          sq += diff * diff;
        }
    }
    double v = std::sqrt(sq);
    if (norm == VariationNormalization::PerDimension) v /= std::sqrt(static_cast<double>(dim));
    variations.push_back(v);
  }
  return variations;
}

struct FreezePlan {
  std::vector<double> variations;
  double threshold = 0.0;
  int split_layer = 0;  // 1-based; layers before it are frozen
  int frozen_layer_count = 0;
};

// Threshold = ratio * max variation; the split layer is the first one at
// or above it. Everything before the split layer gets frozen.
inline FreezePlan split_point(const std::vector<double>& variations, double freeze_ratio) {
  if (variations.empty()) throw ValidationError("no variations");
  if (!(freeze_ratio >= 0.0 && freeze_ratio <= 1.0))
    throw ValidationError("freeze ratio must lie in [0, 1]");
  double max_v = 0.0;
  for (double v : variations) {
    if (v < 0.0) throw ValidationError("variations must be non-negative");
    max_v = std::max(max_v, v);
  }
  if (max_v == 0.0) throw AllZeroVariations("all layer variations are zero");
  FreezePlan plan;
  plan.variations = variations;
  plan.threshold = freeze_ratio * max_v;
  for (std::size_t l = 0; l < variations.size(); ++l) {
    if (variations[l] >= plan.threshold) {
      plan.split_layer = static_cast<int>(l) + 1;
      break;
    }
  }
  plan.frozen_layer_count = plan.split_layer - 1;
  return plan;
}

struct FreezeOutcome {
  int frozen_block_count = 0;
  SearchSpaceConfig config;
};

// Projects a layer-level freeze plan onto searchable blocks.
// layer_to_block_map assigns each trace layer a 1-based backbone block
// (non-decreasing); blocks strictly before the split layer's block are
// frozen out of the search space. block_out_channels (one entry per
// block) supplies the new header channel count; pass empty to keep the
// existing header channels.
inline FreezeOutcome apply_freeze(const FreezePlan& plan, const SearchSpaceConfig& cfg,
                                  const std::vector<int>& layer_to_block_map,
                                  const std::vector<int>& block_out_channels = {}) {
  validate_config(cfg);
  const int backbone_blocks = cfg.num_searchable_blocks;
  if (layer_to_block_map.size() != plan.variations.size())
    throw InconsistentMap("layer map length does not match trace layers");
  for (std::size_t i = 0; i < layer_to_block_map.size(); ++i) {
    const int b = layer_to_block_map[i];
    if (b < 1 || b > backbone_blocks)
      throw InconsistentMap("layer map entry out of block range");
    if (i > 0 && b < layer_to_block_map[i - 1])
      throw InconsistentMap("layer map must be non-decreasing");
  }
  if (!block_out_channels.empty() &&
      static_cast<int>(block_out_channels.size()) != backbone_blocks)
    throw InconsistentMap("block_out_channels length does not match blocks");
  if (plan.split_layer < 1 || plan.split_layer > static_cast<int>(layer_to_block_map.size()))
    throw InconsistentMap("split layer outside the mapped range");

  FreezeOutcome out;
  out.frozen_block_count = layer_to_block_map[plan.split_layer - 1] - 1;
  out.config = cfg;
  out.config.num_searchable_blocks = backbone_blocks - out.frozen_block_count;
  if (out.frozen_block_count > 0 && !block_out_channels.empty())
    out.config.header_out_channels = block_out_channels[out.frozen_block_count - 1];
  return out;
}

inline nlohmann::json to_json(const FreezePlan& plan) {
  return nlohmann::json{{"variations", plan.variations},
                        {"threshold", plan.threshold},
                        {"split_layer", plan.split_layer},
                        {"frozen_layer_count", plan.frozen_layer_count}};
}

// ---------------------------------------------------------------------------
// Trace files: JSON lines of {"layer": l, "group": g, "features": [...]},
// one line per sample, layers 1-based and contiguous, groups 0-based.
// ---------------------------------------------------------------------------

inline FeatureTrace trace_from_stream(std::istream& in) {
  struct Sample {
    int layer, group;
    FeatureVector features;
  };
  std::vector<Sample> samples;
  int max_layer = 0, max_group = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    Sample s;
    try {
      s.layer = j.at("layer").get<int>();
      s.group = j.at("group").get<int>();
      s.features = j.at("features").get<FeatureVector>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("trace line " + std::to_string(line_no) + ": bad record");
    }
    if (s.layer < 1) throw ParseError("trace line " + std::to_string(line_no) + ": layer < 1");
    if (s.group < 0) throw ParseError("trace line " + std::to_string(line_no) + ": group < 0");
    max_layer = std::max(max_layer, s.layer);
    max_group = std::max(max_group, s.group);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ParseError("trace: no samples");
  FeatureTrace trace;
  trace.layers.assign(max_layer,
                      std::vector<std::vector<FeatureVector>>(max_group + 1));
  for (Sample& s : samples)
    trace.layers[s.layer - 1][s.group].push_back(std::move(s.features));
  detail::check_trace(trace);
  return trace;
}

inline void write_trace(std::ostream& out, const FeatureTrace& trace) {
  for (std::size_t l = 0; l < trace.layers.size(); ++l)
    for (std::size_t g = 0; g < trace.layers[l].size(); ++g)
      for (const FeatureVector& v : trace.layers[l][g]) {
        nlohmann::json j{{"layer", l + 1}, {"group", g}, {"features", v}};
        out << j.dump() << "\n";
      }
}

// ---------------------------------------------------------------------------
// Synthetic traces
//
// Group means sit base_amplitude apart through layer flat_until and
// jump_amplitude apart beyond it, with Gaussian per-sample noise. Two
// groups straddle a per-layer axis; more groups sit on distinct axes
// scaled so the expected dispersion equals the amplitude.
// ---------------------------------------------------------------------------

inline FeatureTrace generate_trace(int layers, int dim, int groups, int samples_per_group,
                                   int flat_until, double base_amplitude, double jump_amplitude,
                                   double noise, std::uint64_t seed) {
  if (layers < 1 || dim < 1 || groups < 2 || samples_per_group < 1)
    throw ValidationError("trace shape parameters out of range");
  if (groups > 2 && groups > dim)
    throw ValidationError("need dim >= groups to separate more than two groups");
  if (base_amplitude < 0.0 || jump_amplitude < 0.0 || noise < 0.0)
    throw ValidationError("amplitudes and noise must be non-negative");
  std::mt19937_64 rng(seed);
  FeatureTrace trace;
  trace.layers.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const double amp = (l + 1 <= flat_until) ? base_amplitude : jump_amplitude;
    const int axis = l % dim;
    trace.layers[l].resize(groups);
    for (int g = 0; g < groups; ++g) {
      FeatureVector mean(dim, 0.0);
      if (groups == 2) {
        mean[axis] = (g == 0 ? -0.5 : 0.5) * amp;
      } else {
        mean[g % dim] = amp / std::sqrt(static_cast<double>(groups - 1));
      }
      for (int s = 0; s < samples_per_group; ++s) {
        FeatureVector v(dim);
        for (int d = 0; d < dim; ++d) v[d] = mean[d] + noise * normal01(rng);
        trace.layers[l][g].push_back(std::move(v));
      }
    }
  }
  return trace;
}

}  // namespace fahana
