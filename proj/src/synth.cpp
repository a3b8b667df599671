#include "fdiag/synth.hpp"

#include <cmath>
#include <numbers>

#include "fdiag/fft.hpp"
#include "fdiag/rng.hpp"

namespace fdiag {

namespace {

constexpr double kTextureExponent = 1.0;
constexpr double kRealNoise = 0.01;
constexpr double kFakeBlur = 2.0;

// Signed integer frequency of centered index i on an n-point axis.
double centered_freq(std::size_t i, std::size_t n) {
    return static_cast<double>(i) - static_cast<double>(n / 2);
}

}  // namespace

ImageTensor power_law_texture(std::size_t size, double exponent, std::uint64_t seed, std::size_t channels) {
    ImageTensor white(size, size, channels);
    const CounterRng rng(seed);
    for (std::size_t i = 0; i < white.data.size(); ++i) white.data[i] = rng.normal(i);
    Spectrum s = fft2(white);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double fy = centered_freq(y, size), fx = centered_freq(x, size);
                const double rho = std::max(1.0, std::sqrt(fy * fy + fx * fx));
                s.at(c, y, x) *= std::pow(rho, -exponent);
            }
        }
    }
    ImageTensor tex = ifft2(s).image;
    const double m = mean(tex), sd = stddev(tex);
    for (double& v : tex.data) v = 0.5 + 0.15 * (v - m) / (sd > 0.0 ? sd : 1.0);
    return tex;
}

ImageTensor gaussian_blur(const ImageTensor& image, double sigma) {
    if (!(sigma >= 0.0)) throw InvalidInput("blur sigma must be >= 0");
    Spectrum s = fft2(image);
    const double k = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = 0; y < s.height; ++y) {
            const double fy = centered_freq(y, s.height) / static_cast<double>(s.height);
            for (std::size_t x = 0; x < s.width; ++x) {
                const double fx = centered_freq(x, s.width) / static_cast<double>(s.width);
                s.at(c, y, x) *= std::exp(-k * (fy * fy + fx * fx));
            }
        }
    }
    return ifft2(s).image;
}

RealFakeSet make_blur_task(std::size_t count, std::size_t size, std::uint64_t seed, std::size_t channels) {
    RealFakeSet set;
    set.real.reserve(count);
    set.fake.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t s = splitmix64(seed + 2 * i);
        ImageTensor real = power_law_texture(size, kTextureExponent, s, channels);
        const CounterRng noise(splitmix64(seed + 2 * i + 1));
        for (std::size_t j = 0; j < real.data.size(); ++j) real.data[j] += kRealNoise * noise.normal(j);
        set.fake.push_back(gaussian_blur(real, kFakeBlur));
        set.real.push_back(std::move(real));
    }
    return set;
}

}  // namespace fdiag
