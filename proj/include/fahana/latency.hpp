#pragma once

#include <compare>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fahana/errors.hpp"
#include "fahana/search_space.hpp"

namespace fahana {

// Lookup key for one measured block configuration on one device.
struct BlockSignature {
  BlockType block_type = BlockType::MB;
  int kernel = 0;
  int ch_in = 0;
  int ch_mid = 0;
  int ch_out = 0;
  int stride = 1;
  int resolution = 0;

  auto operator<=>(const BlockSignature&) const = default;
};

// Measured (or synthesized) per-block latencies for a single device, plus
// the fixed cost of the frozen header that every candidate shares.
struct LatencyTable {
  std::string device_id;
  std::map<BlockSignature, double> entries;
  double header_overhead_ms = 0.0;
};

inline BlockSignature signature_of(const BlockChoice& b, int ch_in, int resolution) {
  return BlockSignature{b.block_type, b.kernel,          ch_in,     b.ch2,
                        b.ch3,        block_stride(b.block_type), resolution};
}

// Header overhead plus the table entry of every non-skipped block. Exact
// lookup only: a missing signature is an error, never interpolated.
inline double estimate(const ArchitectureSpec& arch, const LatencyTable& table,
                       int input_resolution) {
  const std::vector<int> ch1 = effective_input_channels(arch);
  const std::vector<int> res = block_input_resolutions(arch, input_resolution);
  double total = table.header_overhead_ms;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    const BlockChoice& b = arch.blocks[i];
    if (b.skipped) continue;
    const BlockSignature sig = signature_of(b, ch1[i], res[i]);
    const auto it = table.entries.find(sig);
    if (it == table.entries.end()) {
      std::ostringstream msg;
      msg << "no latency entry for device " << table.device_id << ": "
          << block_type_name(sig.block_type) << " k" << sig.kernel << " " << sig.ch_in << "->"
          << sig.ch_mid << "->" << sig.ch_out << " s" << sig.stride << " r" << sig.resolution;
      throw MissingEntry(msg.str());
    }
    total += it->second;
  }
  return total;
}

// ---------------------------------------------------------------------------
// CSV format
//
//   device,block_type,kernel,ch_in,ch_mid,ch_out,stride,resolution,latency_ms
//
// One row per signature; a single row with block_type HEADER (all keys 0)
// carries the header overhead.
// ---------------------------------------------------------------------------

inline constexpr const char* kLatencyCsvHeader =
    "device,block_type,kernel,ch_in,ch_mid,ch_out,stride,resolution,latency_ms";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline long parse_long(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": not an integer: \"" + s + "\"");
  }
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": not a number: \"" + s + "\"");
  }
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline LatencyTable latency_table_from_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("latency table: empty input");
  if (detail::strip_cr(line) != kLatencyCsvHeader)
    throw ParseError("latency table: bad header row");
  LatencyTable table;
  bool have_device = false;
  bool have_header_row = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string context = "latency table line " + std::to_string(line_no);
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 9) throw ParseError(context + ": expected 9 fields");
    if (!have_device) {
      table.device_id = f[0];
      have_device = true;
    } else if (f[0] != table.device_id) {
      throw ParseError(context + ": mixed devices in one table");
    }
    const double latency = detail::parse_double(f[8], context);
    if (f[1] == "HEADER") {
      if (have_header_row) throw DuplicateSignature(context + ": second HEADER row");
      if (latency < 0.0) throw NonPositiveLatency(context + ": negative header overhead");
      table.header_overhead_ms = latency;
      have_header_row = true;
      continue;
    }
    BlockSignature sig;
    sig.block_type = block_type_from_name(f[1]);
    sig.kernel = static_cast<int>(detail::parse_long(f[2], context));
    sig.ch_in = static_cast<int>(detail::parse_long(f[3], context));
    sig.ch_mid = static_cast<int>(detail::parse_long(f[4], context));
    sig.ch_out = static_cast<int>(detail::parse_long(f[5], context));
    sig.stride = static_cast<int>(detail::parse_long(f[6], context));
    sig.resolution = static_cast<int>(detail::parse_long(f[7], context));
    if (!(latency > 0.0)) throw NonPositiveLatency(context + ": latency must be > 0");
    if (!table.entries.emplace(sig, latency).second)
      throw DuplicateSignature(context + ": duplicate signature");
  }
  return table;
}

inline void write_latency_table(std::ostream& out, const LatencyTable& table) {
  out << kLatencyCsvHeader << "\n";
  out << table.device_id << ",HEADER,0,0,0,0,0,0," << table.header_overhead_ms << "\n";
  for (const auto& [sig, latency] : table.entries) {
    out << table.device_id << "," << block_type_name(sig.block_type) << "," << sig.kernel << ","
        << sig.ch_in << "," << sig.ch_mid << "," << sig.ch_out << "," << sig.stride << ","
        << sig.resolution << "," << latency << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic tables
//
// Covers every signature reachable from a config: each block shape crossed
// with every reachable input-channel count and every resolution on the
// halving chain. Cost model: latency = device_coeff * weights * resolution^2.
// ---------------------------------------------------------------------------

inline LatencyTable generate_latency_table(const SearchSpaceConfig& cfg,
                                           const std::string& device_id, double device_coeff,
                                           double header_overhead_ms) {
  validate_config(cfg);
  if (!(device_coeff > 0.0)) throw ValidationError("device coefficient must be > 0");
  if (header_overhead_ms < 0.0) throw ValidationError("header overhead must be >= 0");

  std::set<int> ch_in_values(cfg.ch3_choices.begin(), cfg.ch3_choices.end());
  ch_in_values.insert(cfg.header_out_channels);
  std::set<int> resolutions;
  int res = cfg.input_resolution;
  for (int i = 0; i < cfg.num_searchable_blocks; ++i) {
    resolutions.insert(res);
    res = std::max(1, res / 2);
  }
  resolutions.insert(res);

  LatencyTable table;
  table.device_id = device_id;
  table.header_overhead_ms = header_overhead_ms;
  for (int t = 0; t < kNumBlockTypes; ++t) {
    const BlockType type = static_cast<BlockType>(t);
    for (int kernel : cfg.kernel_choices)
      for (int ch2 : cfg.ch2_choices)
        for (int ch3 : cfg.ch3_choices)
          for (int ch_in : ch_in_values)
            for (int r : resolutions) {
              const BlockSignature sig{type, kernel, ch_in, ch2, ch3, block_stride(type), r};
              const double weights =
                  static_cast<double>(block_param_count(type, kernel, ch_in, ch2, ch3));
              table.entries[sig] = device_coeff * weights * static_cast<double>(r) * r;
            }
  }
  return table;
}

}  // namespace fahana
