#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fdiag {

struct Interval {
    double l = 0.0;
    double r = 0.0;
};

/// Per-ring score differences of a scorer under masking and band-limited noise.
struct ProbeCurve {
    std::vector<Interval> intervals;
    std::vector<double> d_mask;
    std::vector<double> std_mask;
    std::vector<double> d_noise;
    std::vector<double> std_noise;
    std::size_t n_images = 0;
    double sigma = 0.0;  // negative: per-image default (0.3 × image std)
    std::uint64_t seed = 0;
    bool nondeterministic_scorer = false;

    std::size_t size() const { return intervals.size(); }
};

/// CSV with header `l,r,d_mask_mean,d_mask_std,d_noise_mean,d_noise_std,n`.
void write_probe_csv(std::ostream& os, const ProbeCurve& curve);
ProbeCurve read_probe_csv(std::istream& is);

}  // namespace fdiag
