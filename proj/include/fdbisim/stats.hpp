#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fdbisim/core.hpp"

namespace fdbisim::stats {

/// Chi-squared homogeneity statistic with its Wilson-Hilferty normal score.
struct TwoSampleResult {
  double chi2 = 0.0;
  std::size_t dof = 0;
  double z = 0.0;
};

/// Real feature of a state for binning; NaN for the cemetery, which always
/// gets a category of its own.
double state_feature(const State& s);

/// Two-sample chi-squared test on up to `bins` pooled-quantile bins. When the
/// pooled sample has at most `bins` distinct values each value is its own bin.
TwoSampleResult two_sample_chi2(std::span<const double> a, std::span<const double> b, std::size_t bins = 20);

/// Same test on the joint law of a pair, binned on a per-axis quantile grid.
TwoSampleResult two_sample_chi2_joint(std::span<const double> a1, std::span<const double> a2,
                                      std::span<const double> b1, std::span<const double> b2,
                                      std::size_t bins_per_axis = 5);

/// Upper-tail normal score of a chi-squared statistic.
double wilson_hilferty_z(double chi2, std::size_t dof);

/// Mean and standard error of 0/1 or real samples.
EstimateWithCI summarize(std::span<const double> values, std::uint64_t seed);

}  // namespace fdbisim::stats
