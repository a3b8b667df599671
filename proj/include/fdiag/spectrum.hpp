#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fdiag/fft.hpp"
#include "fdiag/image.hpp"
#include "fdiag/probe_curve.hpp"

namespace fdiag {

/// Azimuthal average of power over normalized radius, B half-open bins on [0,1].
///
/// Frequencies with radius above 1 (the corners) are not binned. The last bin
/// also takes r == 1 exactly.
struct ReducedSpectrum {
    std::vector<double> values;
    std::vector<std::size_t> counts;

    std::size_t bins() const { return values.size(); }
};

struct SpectrumProfile {
    std::vector<double> mean;
    std::vector<double> std;
    /// Number of images in which each bin was non-empty.
    std::vector<std::size_t> count;
    std::size_t n_images = 0;

    std::size_t bins() const { return mean.size(); }
};

struct RangeBoundaries {
    double r1 = 1.0;
    double r2 = 1.0;
    bool r1_saturated = false;
    bool r2_saturated = false;
};

struct RangeRmse {
    double low = 0.0;
    double mid = 0.0;
    double high = 0.0;
    bool low_empty = false;
    bool mid_empty = false;
    bool high_empty = false;
};

enum class ChannelMode { luma, per_channel };

/// Bin index for a normalized radius, or bins when the radius lies past 1.
std::size_t radius_bin(double radius, std::size_t bins);

/// Channel power is averaged before binning.
ReducedSpectrum reduced_spectrum(const Spectrum& spectrum, std::size_t bins);

/// fft2 followed by reduced_spectrum. Luma mode converts RGB first; per-channel
/// mode transforms every channel and averages their power.
ReducedSpectrum reduced_spectrum(const ImageTensor& image, std::size_t bins, ChannelMode mode = ChannelMode::luma);

/// Images may differ in size; `workers` only affects speed.
SpectrumProfile mean_profile(std::span<const ImageTensor> images, std::size_t bins,
                             ChannelMode mode = ChannelMode::luma, std::size_t workers = 1);

/// Per-range RMS of the per-bin magnitude difference sqrt(mean_a) - sqrt(mean_b).
/// Bins are assigned to a range by their center radius.
RangeRmse range_rmse(const SpectrumProfile& a, const SpectrumProfile& b, const RangeBoundaries& bounds);

/// Boundaries from masking/noise curves: r1 opens at the first ring where masking
/// is detected, r2 at the next ring where noise is detected.
RangeBoundaries estimate_boundaries(const ProbeCurve& curve, double eps);

/// Boundaries from a real profile and a generated one: r1 is the first bin whose
/// log-power deviation exceeds eps, r2 the first later bin where the real profile
/// drops below eps times its own maximum.
RangeBoundaries estimate_boundaries(const SpectrumProfile& real, const SpectrumProfile& generated, double eps);

void write_profile_csv(std::ostream& os, const SpectrumProfile& profile);
SpectrumProfile read_profile_csv(std::istream& is);

/// Mean and population std with a summation order fixed by sorting, so any
/// permutation of the input yields bit-identical results.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd order_free_mean_std(std::vector<double> values);

}  // namespace fdiag
