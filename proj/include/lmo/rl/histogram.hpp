#pragma once

#include <cmath>
#include <vector>

#include "lmo/error.hpp"

namespace lmo::rl {

struct HistogramBin {
  double lo{0.0};
  double hi{0.0};
  std::int64_t count{0};
};

// Equal-width bins over [lo, hi]; the last bin is closed on both sides so
// boundary values (reward exactly 1.0) are counted.
inline std::vector<HistogramBin> build_histogram(const std::vector<double>& values,
                                                 double lo, double hi, int bins) {
  if (bins <= 0 || !(hi > lo)) throw validation_error("bad histogram range");
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    out[b].lo = lo + b * width;
    out[b].hi = lo + (b + 1) * width;
  }
  for (double v : values) {
    if (v < lo || v > hi) throw validation_error("histogram value out of range");
    int b = static_cast<int>((v - lo) / width);
    if (b >= bins) b = bins - 1;
    ++out[b].count;
  }
  return out;
}

// Fraction of total counts in the top quarter of bins.
inline double top_quartile_mass(const std::vector<HistogramBin>& hist) {
  std::int64_t total = 0, top = 0;
  const std::size_t first_top = hist.size() - hist.size() / 4;
  for (std::size_t b = 0; b < hist.size(); ++b) {
    total += hist[b].count;
    if (b >= first_top) top += hist[b].count;
  }
  return total == 0 ? 0.0 : static_cast<double>(top) / total;
}

}  // namespace lmo::rl
