#include "fdiag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace fdiag {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("score vectors differ in length");
    if (a.size() < 2) throw InvalidInput("correlations need at least 2 samples");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw InvalidInput("score vectors contain non-finite values");
    }
}

// Number of tied pairs among runs of equal values in a sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq&& equal_to_prev) {
    std::int64_t total = 0, run = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (equal_to_prev(i)) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total + run * (run - 1) / 2;
}

// Stable merge sort counting inversions.
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

}  // namespace

double psnr(const ImageTensor& a, const ImageTensor& b, double peak) {
    if (!a.same_shape(b)) throw InvalidInput("psnr needs images of identical shape");
    if (!(peak > 0.0)) throw InvalidInput("psnr peak must be positive");
    if (a.data.empty()) throw InvalidInput("psnr of empty images");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

std::optional<double> kendall_tau_b(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
    });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = a[order[i]];
        ys[i] = b[order[i]];
    }
    const auto n0 = static_cast<std::int64_t>(n * (n - 1) / 2);
    const std::int64_t ties_a = tied_pairs(n, [&](std::size_t i) { return xs[i] == xs[i - 1]; });
    const std::int64_t ties_joint =
        tied_pairs(n, [&](std::size_t i) { return xs[i] == xs[i - 1] && ys[i] == ys[i - 1]; });
    std::vector<double> buf(n);
    const std::int64_t swaps = sort_count_swaps(ys, buf, 0, n);
    const std::int64_t ties_b = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });
    const double denom = std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
    if (denom == 0.0) return std::nullopt;
    const double num = static_cast<double>(n0 - ties_a - ties_b + ties_joint - 2 * swaps);
    return std::clamp(num / denom, -1.0, 1.0);
}

Correlations correlations(std::span<const double> predictions, std::span<const double> targets) {
    check_pair(predictions, targets);
    Correlations out;
    out.plcc = pearson(predictions, targets);
    const auto rp = average_ranks(predictions);
    const auto rt = average_ranks(targets);
    out.srcc = pearson(rp, rt);
    out.krcc = kendall_tau_b(predictions, targets);
    return out;
}

}  // namespace fdiag
