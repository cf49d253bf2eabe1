#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "fahana/errors.hpp"

namespace fahana {

using BigInt = boost::multiprecision::cpp_int;

// Block menu. MB is an inverted-bottleneck block with stride 2 (the only
// block that downsamples), DB the same with stride 1, RB a two-conv
// residual block, CB a single conventional convolution.
enum class BlockType { MB = 0, DB = 1, RB = 2, CB = 3 };

inline constexpr int kNumBlockTypes = 4;
inline constexpr int kDecisionsPerBlock = 5;

inline const char* block_type_name(BlockType t) {
  switch (t) {
    case BlockType::MB: return "MB";
    case BlockType::DB: return "DB";
    case BlockType::RB: return "RB";
    case BlockType::CB: return "CB";
  }
  return "?";
}

inline BlockType block_type_from_name(const std::string& s) {
  if (s == "MB") return BlockType::MB;
  if (s == "DB") return BlockType::DB;
  if (s == "RB") return BlockType::RB;
  if (s == "CB") return BlockType::CB;
  throw ParseError("unknown block type: " + s);
}

inline int block_stride(BlockType t) { return t == BlockType::MB ? 2 : 1; }

struct BlockChoice {
  bool skipped = false;
  BlockType block_type = BlockType::MB;
  int kernel = 0;
  int ch2 = 0;
  int ch3 = 0;

  bool operator==(const BlockChoice&) const = default;
};

struct SearchSpaceConfig {
  int num_searchable_blocks = 0;
  std::vector<int> kernel_choices;
  std::vector<int> ch2_choices;
  std::vector<int> ch3_choices;
  bool allow_skip = true;
  int header_out_channels = 0;
  int input_resolution = 0;

  bool operator==(const SearchSpaceConfig&) const = default;

  // Canonical stand-in values for a skipped block: the smallest element of
  // each choice set. Keeps encodings unique.
  BlockChoice skip_placeholder() const {
    return BlockChoice{true, BlockType::MB, kernel_choices.front(), ch2_choices.front(),
                       ch3_choices.front()};
  }
};

struct ArchitectureSpec {
  std::vector<BlockChoice> blocks;
  int header_out_channels = 0;

  bool operator==(const ArchitectureSpec&) const = default;
};

namespace detail {

inline bool strictly_increasing_positive(const std::vector<int>& v) {
  if (v.empty()) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] <= 0) return false;
    if (i > 0 && v[i] <= v[i - 1]) return false;
  }
  return true;
}

inline std::optional<int> index_of(const std::vector<int>& v, int value) {
  const auto it = std::find(v.begin(), v.end(), value);
  if (it == v.end()) return std::nullopt;
  return static_cast<int>(it - v.begin());
}

}  // namespace detail

inline void validate_config(const SearchSpaceConfig& cfg) {
  if (cfg.num_searchable_blocks < 1)
    throw ValidationError("num_searchable_blocks must be >= 1");
  if (!detail::strictly_increasing_positive(cfg.kernel_choices))
    throw ValidationError("kernel_choices must be non-empty, strictly increasing, positive");
  for (int k : cfg.kernel_choices)
    if (k % 2 == 0) throw ValidationError("kernel_choices must be odd");
  if (!detail::strictly_increasing_positive(cfg.ch2_choices))
    throw ValidationError("ch2_choices must be non-empty, strictly increasing, positive");
  if (!detail::strictly_increasing_positive(cfg.ch3_choices))
    throw ValidationError("ch3_choices must be non-empty, strictly increasing, positive");
  if (cfg.header_out_channels < 1) throw ValidationError("header_out_channels must be >= 1");
  if (cfg.input_resolution < 1) throw ValidationError("input_resolution must be >= 1");
}

// Options per block position: every (type, kernel, ch2, ch3) combination,
// plus the skip option when enabled.
inline std::int64_t per_block_option_count(const SearchSpaceConfig& cfg) {
  const std::int64_t combos = static_cast<std::int64_t>(kNumBlockTypes) *
                              static_cast<std::int64_t>(cfg.kernel_choices.size()) *
                              static_cast<std::int64_t>(cfg.ch2_choices.size()) *
                              static_cast<std::int64_t>(cfg.ch3_choices.size());
  return combos + (cfg.allow_skip ? 1 : 0);
}

// P^n, minus the single all-skip assignment when skipping is allowed.
inline BigInt cardinality(const SearchSpaceConfig& cfg) {
  validate_config(cfg);
  BigInt p(per_block_option_count(cfg));
  BigInt total = 1;
  for (int i = 0; i < cfg.num_searchable_blocks; ++i) total *= p;
  if (cfg.allow_skip) total -= 1;
  return total;
}

// Arity of each of the five per-block decisions, in sampling order:
// skip?, block type, kernel, ch2, ch3. A disabled skip decision has a
// single forced outcome.
inline std::vector<int> decision_arities(const SearchSpaceConfig& cfg) {
  return {cfg.allow_skip ? 2 : 1, kNumBlockTypes, static_cast<int>(cfg.kernel_choices.size()),
          static_cast<int>(cfg.ch2_choices.size()), static_cast<int>(cfg.ch3_choices.size())};
}

// Input channels seen by each block position: the ch3 of the nearest
// preceding non-skipped block, or the header's output channels.
inline std::vector<int> effective_input_channels(const ArchitectureSpec& arch) {
  std::vector<int> ch1(arch.blocks.size());
  int running = arch.header_out_channels;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    ch1[i] = running;
    if (!arch.blocks[i].skipped) running = arch.blocks[i].ch3;
  }
  return ch1;
}

// Feature-map resolution entering each block; stride-2 blocks halve it
// (floor, never below 1).
inline std::vector<int> block_input_resolutions(const ArchitectureSpec& arch,
                                                int input_resolution) {
  std::vector<int> res(arch.blocks.size());
  int running = input_resolution;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    res[i] = running;
    if (!arch.blocks[i].skipped && block_stride(arch.blocks[i].block_type) == 2)
      running = std::max(1, running / 2);
  }
  return res;
}

inline bool validate(const ArchitectureSpec& arch, const SearchSpaceConfig& cfg) {
  if (static_cast<int>(arch.blocks.size()) != cfg.num_searchable_blocks) return false;
  if (arch.header_out_channels != cfg.header_out_channels) return false;
  bool any_active = false;
  const BlockChoice placeholder =
      cfg.kernel_choices.empty() ? BlockChoice{} : cfg.skip_placeholder();
  for (const BlockChoice& b : arch.blocks) {
    if (b.skipped) {
      if (!cfg.allow_skip) return false;
      if (b != placeholder) return false;
      continue;
    }
    any_active = true;
    if (!detail::index_of(cfg.kernel_choices, b.kernel)) return false;
    if (!detail::index_of(cfg.ch2_choices, b.ch2)) return false;
    if (!detail::index_of(cfg.ch3_choices, b.ch3)) return false;
  }
  return any_active;
}

// ---------------------------------------------------------------------------
// Action-sequence encoding
//
// Five decisions per block, fixed order (skip?, type, kernel, ch2, ch3).
// Skip decision: index 0 = skip, 1 = keep (arity 1 when skipping is
// disabled). A skipped block's remaining four decisions are forced to 0.
// ---------------------------------------------------------------------------

inline std::vector<int> encode(const ArchitectureSpec& arch, const SearchSpaceConfig& cfg) {
  if (!validate(arch, cfg)) throw InvalidArchitecture("architecture does not fit the space");
  std::vector<int> actions;
  actions.reserve(arch.blocks.size() * kDecisionsPerBlock);
  for (const BlockChoice& b : arch.blocks) {
    if (b.skipped) {
      actions.insert(actions.end(), {0, 0, 0, 0, 0});
      continue;
    }
    actions.push_back(cfg.allow_skip ? 1 : 0);
    actions.push_back(static_cast<int>(b.block_type));
    actions.push_back(*detail::index_of(cfg.kernel_choices, b.kernel));
    actions.push_back(*detail::index_of(cfg.ch2_choices, b.ch2));
    actions.push_back(*detail::index_of(cfg.ch3_choices, b.ch3));
  }
  return actions;
}

inline ArchitectureSpec decode(const std::vector<int>& actions, const SearchSpaceConfig& cfg) {
  validate_config(cfg);
  const std::vector<int> arity = decision_arities(cfg);
  if (static_cast<int>(actions.size()) != cfg.num_searchable_blocks * kDecisionsPerBlock)
    throw MalformedActions("expected " +
                           std::to_string(cfg.num_searchable_blocks * kDecisionsPerBlock) +
                           " actions, got " + std::to_string(actions.size()));
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int a = actions[t];
    if (a < 0 || a >= arity[t % kDecisionsPerBlock])
      throw MalformedActions("action " + std::to_string(t) + " out of range");
  }
  ArchitectureSpec arch;
  arch.header_out_channels = cfg.header_out_channels;
  arch.blocks.reserve(cfg.num_searchable_blocks);
  for (int i = 0; i < cfg.num_searchable_blocks; ++i) {
    const int* a = actions.data() + static_cast<std::size_t>(i) * kDecisionsPerBlock;
    if (cfg.allow_skip && a[0] == 0) {
      arch.blocks.push_back(cfg.skip_placeholder());
      continue;
    }
    arch.blocks.push_back(BlockChoice{false, static_cast<BlockType>(a[1]),
                                      cfg.kernel_choices[a[2]], cfg.ch2_choices[a[3]],
                                      cfg.ch3_choices[a[4]]});
  }
  return arch;
}

// ---------------------------------------------------------------------------
// Parameter counting
// ---------------------------------------------------------------------------

// Weight count of one block given its input channels. MB/DB are
// expand + depthwise + project; RB is two full convs plus a 1x1 shortcut
// when channel counts differ; CB is a single conv.
inline std::int64_t block_param_count(BlockType type, int kernel, int ch1, int ch2, int ch3) {
  const std::int64_t k2 = static_cast<std::int64_t>(kernel) * kernel;
  const std::int64_t c1 = ch1, c2 = ch2, c3 = ch3;
  switch (type) {
    case BlockType::MB:
    case BlockType::DB:
      return c1 * c2 + k2 * c2 + c2 * c3;
    case BlockType::RB:
      return k2 * c1 * c2 + k2 * c2 * c3 + (ch1 != ch3 ? c1 * c3 : 0);
    case BlockType::CB:
      return k2 * c1 * c3;
  }
  return 0;
}

inline std::int64_t param_count(const ArchitectureSpec& arch) {
  const std::vector<int> ch1 = effective_input_channels(arch);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    const BlockChoice& b = arch.blocks[i];
    if (b.skipped) continue;
    total += block_param_count(b.block_type, b.kernel, ch1[i], b.ch2, b.ch3);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Enumeration
//
// Per-block options sorted by (skipped, type, kernel, ch2, ch3) with
// skipped=false first, so the skip option holds the last index and the
// all-skip assignment is the final raw combination (and is dropped).
// ---------------------------------------------------------------------------

class Enumerator {
 public:
  explicit Enumerator(SearchSpaceConfig cfg) : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    option_count_ = per_block_option_count(cfg_);
    indices_.assign(cfg_.num_searchable_blocks, 0);
  }

  std::optional<ArchitectureSpec> next() {
    while (!done_) {
      const bool all_skip =
          cfg_.allow_skip && std::all_of(indices_.begin(), indices_.end(), [&](std::int64_t i) {
            return i == option_count_ - 1;
          });
      if (all_skip) {
        advance();
        continue;
      }
      ArchitectureSpec arch = materialize();
      advance();
      return arch;
    }
    return std::nullopt;
  }

 private:
  ArchitectureSpec materialize() const {
    ArchitectureSpec arch;
    arch.header_out_channels = cfg_.header_out_channels;
    arch.blocks.reserve(indices_.size());
    for (std::int64_t idx : indices_) arch.blocks.push_back(option(idx));
    return arch;
  }

  BlockChoice option(std::int64_t idx) const {
    if (cfg_.allow_skip && idx == option_count_ - 1) return cfg_.skip_placeholder();
    const std::int64_t n3 = static_cast<std::int64_t>(cfg_.ch3_choices.size());
    const std::int64_t n2 = static_cast<std::int64_t>(cfg_.ch2_choices.size());
    const std::int64_t nk = static_cast<std::int64_t>(cfg_.kernel_choices.size());
    const int ch3 = cfg_.ch3_choices[idx % n3];
    idx /= n3;
    const int ch2 = cfg_.ch2_choices[idx % n2];
    idx /= n2;
    const int kernel = cfg_.kernel_choices[idx % nk];
    idx /= nk;
    return BlockChoice{false, static_cast<BlockType>(idx), kernel, ch2, ch3};
  }

  void advance() {
    for (int i = static_cast<int>(indices_.size()) - 1; i >= 0; --i) {
      if (++indices_[i] < option_count_) return;
      indices_[i] = 0;
    }
    done_ = true;
  }

  SearchSpaceConfig cfg_;
  std::int64_t option_count_ = 0;
  std::vector<std::int64_t> indices_;
  bool done_ = false;
};

inline std::vector<ArchitectureSpec> enumerate_all(const SearchSpaceConfig& cfg,
                                                   std::int64_t limit) {
  if (cardinality(cfg) > limit)
    throw SpaceTooLarge("cardinality exceeds enumeration limit " + std::to_string(limit));
  std::vector<ArchitectureSpec> out;
  Enumerator en(cfg);
  while (auto arch = en.next()) out.push_back(std::move(*arch));
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline void require_fields(const nlohmann::json& j, const std::vector<std::string>& required,
                           const std::vector<std::string>& optional, const char* what) {
  if (!j.is_object()) throw ParseError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(required.begin(), required.end(), key) == required.end() &&
        std::find(optional.begin(), optional.end(), key) == optional.end())
      throw ParseError(std::string(what) + ": unknown field \"" + key + "\"");
  }
  for (const std::string& key : required)
    if (!j.contains(key)) throw ParseError(std::string(what) + ": missing field \"" + key + "\"");
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const char* what) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string(what) + ": field \"" + key + "\" has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const SearchSpaceConfig& cfg) {
  return nlohmann::json{{"num_searchable_blocks", cfg.num_searchable_blocks},
                        {"kernel_choices", cfg.kernel_choices},
                        {"ch2_choices", cfg.ch2_choices},
                        {"ch3_choices", cfg.ch3_choices},
                        {"allow_skip", cfg.allow_skip},
                        {"header_out_channels", cfg.header_out_channels},
                        {"input_resolution", cfg.input_resolution}};
}

inline SearchSpaceConfig search_space_config_from_json(const nlohmann::json& j) {
  detail::require_fields(j,
                         {"num_searchable_blocks", "kernel_choices", "ch2_choices", "ch3_choices",
                          "allow_skip", "header_out_channels", "input_resolution"},
                         {}, "search space config");
  SearchSpaceConfig cfg;
  cfg.num_searchable_blocks =
      detail::get_field<int>(j, "num_searchable_blocks", "search space config");
  cfg.kernel_choices =
      detail::get_field<std::vector<int>>(j, "kernel_choices", "search space config");
  cfg.ch2_choices = detail::get_field<std::vector<int>>(j, "ch2_choices", "search space config");
  cfg.ch3_choices = detail::get_field<std::vector<int>>(j, "ch3_choices", "search space config");
  cfg.allow_skip = detail::get_field<bool>(j, "allow_skip", "search space config");
  cfg.header_out_channels =
      detail::get_field<int>(j, "header_out_channels", "search space config");
  cfg.input_resolution = detail::get_field<int>(j, "input_resolution", "search space config");
  validate_config(cfg);
  return cfg;
}

inline nlohmann::json to_json(const ArchitectureSpec& arch) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockChoice& b : arch.blocks) {
    blocks.push_back({{"skipped", b.skipped},
                      {"block_type", block_type_name(b.block_type)},
                      {"kernel", b.kernel},
                      {"ch2", b.ch2},
                      {"ch3", b.ch3}});
  }
  return nlohmann::json{{"header_out_channels", arch.header_out_channels}, {"blocks", blocks}};
}

inline ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {"header_out_channels", "blocks"}, {}, "architecture");
  ArchitectureSpec arch;
  arch.header_out_channels = detail::get_field<int>(j, "header_out_channels", "architecture");
  const nlohmann::json& blocks = j.at("blocks");
  if (!blocks.is_array()) throw ParseError("architecture: \"blocks\" must be an array");
  for (const nlohmann::json& jb : blocks) {
    detail::require_fields(jb, {"skipped", "block_type", "kernel", "ch2", "ch3"}, {}, "block");
    BlockChoice b;
    b.skipped = detail::get_field<bool>(jb, "skipped", "block");
    b.block_type = block_type_from_name(detail::get_field<std::string>(jb, "block_type", "block"));
    b.kernel = detail::get_field<int>(jb, "kernel", "block");
    b.ch2 = detail::get_field<int>(jb, "ch2", "block");
    b.ch3 = detail::get_field<int>(jb, "ch3", "block");
    arch.blocks.push_back(b);
  }
  return arch;
}

}  // namespace fahana
