#pragma once

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "fahana/errors.hpp"
#include "fahana/latency.hpp"

namespace fahana {

struct TradeoffPoint {
  std::string id;
  double accuracy = 0.0;
  double unfairness = 0.0;
};

// q dominates p when q is at least as accurate and at most as unfair,
// and strictly better on one of the two.
inline bool dominates(const TradeoffPoint& q, const TradeoffPoint& p) {
  return q.accuracy >= p.accuracy && q.unfairness <= p.unfairness &&
         (q.accuracy > p.accuracy || q.unfairness < p.unfairness);
}

// Non-dominated subset, sorted by accuracy descending; ties keep their
// input order. Duplicate coordinates do not dominate each other, so
// duplicates survive together.
inline std::vector<TradeoffPoint> pareto_front(const std::vector<TradeoffPoint>& points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j)
      dominated = j != i && dominates(points[j], points[i]);
    if (!dominated) keep.push_back(i);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    return points[a].accuracy > points[b].accuracy;
  });
  std::vector<TradeoffPoint> front;
  front.reserve(keep.size());
  for (std::size_t i : keep) front.push_back(points[i]);
  return front;
}

// CSV: id,accuracy,unfairness
inline constexpr const char* kTradeoffCsvHeader = "id,accuracy,unfairness";

inline std::vector<TradeoffPoint> tradeoff_points_from_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("tradeoff points: empty input");
  if (detail::strip_cr(line) != kTradeoffCsvHeader)
    throw ParseError("tradeoff points: bad header row");
  std::vector<TradeoffPoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string context = "tradeoff points line " + std::to_string(line_no);
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 3) throw ParseError(context + ": expected 3 fields");
    points.push_back(TradeoffPoint{f[0], detail::parse_double(f[1], context),
                                   detail::parse_double(f[2], context)});
  }
  return points;
}

inline void write_tradeoff_points(std::ostream& out, const std::vector<TradeoffPoint>& points) {
  out << kTradeoffCsvHeader << "\n";
  for (const TradeoffPoint& p : points)
    out << p.id << "," << p.accuracy << "," << p.unfairness << "\n";
}

}  // namespace fahana
