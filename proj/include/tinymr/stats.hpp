// Small statistics helpers: percentile, normal quantile, confidence
// intervals for subsample means drawn without replacement.

#ifndef TINYMR_STATS_HPP
#define TINYMR_STATS_HPP

#include <cstdint>
#include <vector>

namespace tinymr {

// Nearest-rank percentile, q in [0,1]. Copies and sorts.
double percentile(std::vector<double> values, double q);

// Inverse standard normal CDF (Acklam's rational approximation,
// |relative error| < 1.15e-9).
double normal_quantile(double p);

// Half-width of the two-sided CI at `confidence` for the mean of k values
// drawn without replacement from a population of n with variance var
// (finite population correction applied).
double subsample_ci_halfwidth(double var, std::uint64_t n, std::uint64_t k,
                              double confidence);

}  // namespace tinymr

#endif  // TINYMR_STATS_HPP
