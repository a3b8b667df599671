#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fdiag/image.hpp"

namespace fdiag {

/// 10·log10(peak²/MSE) in dB; identical images give +infinity.
double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

/// Each coefficient is empty when it is undefined for the input (a constant vector).
struct Correlations {
    std::optional<double> plcc;
    std::optional<double> srcc;
    std::optional<double> krcc;
};

/// Pearson on raw values, Spearman on tie-averaged ranks, Kendall tau-b.
/// Throws InvalidInput on length mismatch, n < 2, or non-finite values.
Correlations correlations(std::span<const double> predictions, std::span<const double> targets);

std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Tau-b by Knight's merge-sort method, O(n log n).
std::optional<double> kendall_tau_b(std::span<const double> a, std::span<const double> b);

}  // namespace fdiag
