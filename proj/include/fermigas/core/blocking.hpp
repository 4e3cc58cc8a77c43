#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fermigas/core/error.hpp"

namespace fermigas {

struct BlockingLevel {
  std::size_t block_length = 1;
  std::size_t n_blocks = 0;
  double error = 0.0;
};

struct BlockingResult {
  double mean = 0.0;
  double error = 0.0;
  double variance = 0.0;  ///< sample variance of the raw series
  std::size_t block_length = 1;
  std::size_t n_blocks = 0;
  std::vector<BlockingLevel> levels;
};

/// Mean and error of an autocorrelated series by repeated pairwise block averaging.
/// The reported level is the first one whose error agrees with the next doubling
/// within that estimate's own statistical uncertainty; coarsening stops at min_blocks.
inline BlockingResult blocking_analysis(std::span<const double> series, std::size_t min_blocks = 20) {
  require(series.size() >= min_blocks, "blocking_analysis: fewer samples than the minimum block count");
  BlockingResult out;
  std::vector<double> data(series.begin(), series.end());
  double sum = 0.0;
  for (double x : data) sum += x;
  out.mean = sum / static_cast<double>(data.size());
  double ss = 0.0;
  for (double x : data) ss += (x - out.mean) * (x - out.mean);
  out.variance = data.size() > 1 ? ss / static_cast<double>(data.size() - 1) : 0.0;

  std::size_t length = 1;
  while (data.size() >= min_blocks) {
    const double n = static_cast<double>(data.size());
    double s = 0.0;
    for (double x : data) s += (x - out.mean) * (x - out.mean);
    out.levels.push_back({length, data.size(), std::sqrt(s / (n * (n - 1.0)))});
    std::vector<double> next(data.size() / 2);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = 0.5 * (data[2 * i] + data[2 * i + 1]);
    data = std::move(next);
    length *= 2;
  }

  std::size_t chosen = out.levels.size() - 1;
  for (std::size_t k = 0; k + 1 < out.levels.size(); ++k) {
    const auto& lv = out.levels[k];
    const double uncertainty = lv.error / std::sqrt(2.0 * (static_cast<double>(lv.n_blocks) - 1.0));
    if (out.levels[k + 1].error - lv.error <= uncertainty) {
      chosen = k;
      break;
    }
  }
  out.error = out.levels[chosen].error;
  out.block_length = out.levels[chosen].block_length;
  out.n_blocks = out.levels[chosen].n_blocks;
  return out;
}

}  // namespace fermigas
