#include "fdiag/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fdiag/parallel.hpp"

namespace fdiag {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double bin_center(std::size_t k, std::size_t bins) {
    return (static_cast<double>(k) + 0.5) / static_cast<double>(bins);
}

void require_eps(double eps) {
    if (!(eps > 0.0)) throw InvalidInput("boundary threshold eps must be positive");
}

}  // namespace

MeanStd order_free_mean_std(std::vector<double> values) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double s = 0.0;
    for (double v : values) s += v;
    const double m = s / n;
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = (values[i] - m) * (values[i] - m);
    std::sort(dev.begin(), dev.end());
    double ss = 0.0;
    for (double d : dev) ss += d;
    return {m, std::sqrt(ss / n)};
}

std::size_t radius_bin(double radius, std::size_t bins) {
    if (radius > 1.0) return bins;
    auto k = static_cast<std::size_t>(std::floor(radius * static_cast<double>(bins)));
    return std::min(k, bins - 1);
}

ReducedSpectrum reduced_spectrum(const Spectrum& spectrum, std::size_t bins) {
    if (bins < 2) throw InvalidInput("reduced spectrum needs at least 2 bins");
    ReducedSpectrum out{std::vector<double>(bins, 0.0), std::vector<std::size_t>(bins, 0)};
    const double inv_c = 1.0 / static_cast<double>(spectrum.channels);
    for (std::size_t y = 0; y < spectrum.height; ++y) {
        for (std::size_t x = 0; x < spectrum.width; ++x) {
            const std::size_t k = radius_bin(spectrum.norm_radius(y, x), bins);
            if (k == bins) continue;
            double p = 0.0;
            for (std::size_t c = 0; c < spectrum.channels; ++c) p += std::norm(spectrum.at(c, y, x));
            out.values[k] += p * inv_c;
            ++out.counts[k];
        }
    }
    for (std::size_t k = 0; k < bins; ++k) {
        if (out.counts[k] > 0) out.values[k] /= static_cast<double>(out.counts[k]);
    }
    return out;
}

ReducedSpectrum reduced_spectrum(const ImageTensor& image, std::size_t bins, ChannelMode mode) {
    if (mode == ChannelMode::luma && image.channels == 3) return reduced_spectrum(fft2(to_luma(image)), bins);
    return reduced_spectrum(fft2(image), bins);
}

SpectrumProfile mean_profile(std::span<const ImageTensor> images, std::size_t bins, ChannelMode mode,
                             std::size_t workers) {
    if (images.empty()) throw InvalidInput("spectrum profile needs a nonempty dataset");
    if (bins < 2) throw InvalidInput("reduced spectrum needs at least 2 bins");
    std::vector<ReducedSpectrum> per_image(images.size());
    parallel_for(images.size(), workers, [&](std::size_t i) { per_image[i] = reduced_spectrum(images[i], bins, mode); });

    SpectrumProfile out;
    out.mean.assign(bins, 0.0);
    out.std.assign(bins, 0.0);
    out.count.assign(bins, 0);
    out.n_images = images.size();
    std::vector<double> column;
    for (std::size_t k = 0; k < bins; ++k) {
        column.clear();
        for (const auto& rs : per_image) {
            if (rs.counts[k] > 0) column.push_back(rs.values[k]);
        }
        const MeanStd ms = order_free_mean_std(column);
        out.mean[k] = ms.mean;
        out.std[k] = ms.std;
        out.count[k] = column.size();
    }
    return out;
}

RangeRmse range_rmse(const SpectrumProfile& a, const SpectrumProfile& b, const RangeBoundaries& bounds) {
    if (a.bins() != b.bins()) throw InvalidInput("profiles have different bin counts");
    if (!(0.0 <= bounds.r1 && bounds.r1 <= bounds.r2 && bounds.r2 <= 1.0)) {
        throw InvalidInput("range boundaries must satisfy 0 <= r1 <= r2 <= 1");
    }
    double acc[3] = {0.0, 0.0, 0.0};
    std::size_t n[3] = {0, 0, 0};
    const std::size_t bins = a.bins();
    for (std::size_t k = 0; k < bins; ++k) {
        const double c = bin_center(k, bins);
        const int range = c < bounds.r1 ? 0 : (c < bounds.r2 ? 1 : 2);
        const double d = std::sqrt(std::max(a.mean[k], 0.0)) - std::sqrt(std::max(b.mean[k], 0.0));
        acc[range] += d * d;
        ++n[range];
    }
    RangeRmse out;
    double* dst[3] = {&out.low, &out.mid, &out.high};
    bool* empty[3] = {&out.low_empty, &out.mid_empty, &out.high_empty};
    for (int r = 0; r < 3; ++r) {
        *empty[r] = n[r] == 0;
        *dst[r] = n[r] == 0 ? 0.0 : std::sqrt(acc[r] / static_cast<double>(n[r]));
    }
    return out;
}

RangeBoundaries estimate_boundaries(const ProbeCurve& curve, double eps) {
    require_eps(eps);
    if (curve.d_mask.size() != curve.size() || curve.d_noise.size() != curve.size()) {
        throw InvalidInput("probe curve needs mask and noise values on every interval");
    }
    RangeBoundaries b;
    const std::size_t n = curve.size();
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    std::size_t i1 = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (curve.d_mask[i] < -eps) {
            i1 = i;
            break;
        }
    }
    if (i1 == n) {
        b.r1 = b.r2 = 1.0;
        b.r1_saturated = b.r2_saturated = true;
        return b;
    }
    b.r1 = clamp01(curve.intervals[i1].l);
    // Prefer a ring where noise is caught while masking is not; otherwise the first
    // ring where noise detection resumes.
    std::size_t i2 = n;
    for (std::size_t i = i1; i < n; ++i) {
        if (curve.d_noise[i] < -eps && curve.d_mask[i] >= -eps) {
            i2 = i;
            break;
        }
    }
    if (i2 == n) {
        for (std::size_t i = i1; i < n; ++i) {
            if (curve.d_noise[i] < -eps) {
                i2 = i;
                break;
            }
        }
    }
    if (i2 == n) {
        b.r2 = 1.0;
        b.r2_saturated = true;
    } else {
        b.r2 = std::max(b.r1, clamp01(curve.intervals[i2].l));
    }
    return b;
}

RangeBoundaries estimate_boundaries(const SpectrumProfile& real, const SpectrumProfile& generated, double eps) {
    require_eps(eps);
    if (real.bins() != generated.bins()) throw InvalidInput("profiles have different bin counts");
    const std::size_t bins = real.bins();
    RangeBoundaries b;
    std::size_t k1 = bins;
    for (std::size_t k = 0; k < bins; ++k) {
        const double dev = std::abs(std::log1p(std::max(real.mean[k], 0.0)) -
                                    std::log1p(std::max(generated.mean[k], 0.0)));
        if (dev > eps) {
            k1 = k;
            break;
        }
    }
    if (k1 == bins) {
        b.r1 = b.r2 = 1.0;
        b.r1_saturated = b.r2_saturated = true;
        return b;
    }
    b.r1 = static_cast<double>(k1) / static_cast<double>(bins);
    const double peak = *std::max_element(real.mean.begin(), real.mean.end());
    std::size_t k2 = bins;
    for (std::size_t k = k1 + 1; k < bins; ++k) {
        if (real.mean[k] < eps * peak) {
            k2 = k;
            break;
        }
    }
    if (k2 == bins) {
        b.r2 = 1.0;
        b.r2_saturated = true;
    } else {
        b.r2 = static_cast<double>(k2) / static_cast<double>(bins);
    }
    return b;
}

void write_profile_csv(std::ostream& os, const SpectrumProfile& profile) {
    os << "bin_center,mean,std,count\n";
    for (std::size_t k = 0; k < profile.bins(); ++k) {
        os << fmt17(bin_center(k, profile.bins())) << ',' << fmt17(profile.mean[k]) << ',' << fmt17(profile.std[k])
           << ',' << profile.count[k] << '\n';
    }
}

SpectrumProfile read_profile_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("bin_center,mean,std,count", 0) != 0) {
        throw InvalidInput("profile CSV must start with header bin_center,mean,std,count");
    }
    SpectrumProfile p;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        std::string f[4];
        for (auto& s : f) {
            if (!std::getline(ss, s, ',')) throw InvalidInput("profile CSV row needs 4 fields: " + line);
        }
        try {
            p.mean.push_back(std::stod(f[1]));
            p.std.push_back(std::stod(f[2]));
            p.count.push_back(static_cast<std::size_t>(std::stoull(f[3])));
        } catch (const std::logic_error&) {
            throw InvalidInput("malformed profile CSV row: " + line);
        }
    }
    if (p.mean.size() < 2) throw InvalidInput("profile CSV needs at least 2 bins");
    p.n_images = *std::max_element(p.count.begin(), p.count.end());
    return p;
}

}  // namespace fdiag
