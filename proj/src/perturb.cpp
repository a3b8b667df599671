#include "fdiag/perturb.hpp"

#include <algorithm>

#include "fdiag/rng.hpp"

namespace fdiag {

namespace {

void check_interval(double l, double r) {
    if (!(l >= 0.0)) throw InvalidInput("ring lower radius must be >= 0");
    if (!(l <= r)) throw InvalidInput("ring lower radius exceeds upper radius");
}

// Multiplies every channel plane by the mask (keep = true) or its complement.
void apply_mask(Spectrum& s, const RingMask& m, bool keep) {
    for (std::size_t c = 0; c < s.channels; ++c) {
        auto plane = s.plane(c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            if ((m.data[i] != 0) != keep) plane[i] = cplx{};
        }
    }
}

}  // namespace

RingMask RingMask::complement() const {
    RingMask out = *this;
    for (auto& v : out.data) v = v ? 0 : 1;
    return out;
}

RingMask ring_mask(std::size_t height, std::size_t width, double l, double r) {
    check_interval(l, r);
    RingMask m{height, width, l, r, std::vector<std::uint8_t>(height * width, 0)};
    // Non-square grids have corners past sqrt(2); an upper edge at kFullBand means "no upper edge".
    const bool open_top = r >= kFullBand;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double rad = norm_radius(height, width, y, x);
            m.data[y * width + x] = (rad >= l && (open_top || rad < r)) ? 1 : 0;
        }
    }
    return m;
}

ImageTensor mask_image(const ImageTensor& image, double l, double r) {
    check_interval(l, r);
    // An empty ring removes nothing; skipping the round trip keeps the result bit-exact.
    if (l == r) return image;
    Spectrum s = fft2(image);
    apply_mask(s, ring_mask(image.height, image.width, l, r), false);
    return ifft2(s).image;
}

ImageTensor band_noise(std::size_t height, std::size_t width, std::size_t channels, double l, double r, double sigma,
                       std::uint64_t seed) {
    check_interval(l, r);
    if (!(sigma >= 0.0)) throw InvalidInput("noise sigma must be >= 0");
    ImageTensor delta(height, width, channels);
    const CounterRng rng(seed);
    for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] = sigma * rng.normal(i);
    Spectrum s = fft2(delta);
    apply_mask(s, ring_mask(height, width, l, r), true);
    return ifft2(s).image;
}

ImageTensor noise_image(const ImageTensor& image, double l, double r, double sigma, std::uint64_t seed) {
    validate(image);
    ImageTensor noise = band_noise(image.height, image.width, image.channels, l, r, sigma, seed);
    for (std::size_t i = 0; i < noise.data.size(); ++i) noise.data[i] += image.data[i];
    return noise;
}

double default_noise_sigma(const ImageTensor& image) { return 0.3 * stddev(image); }

ImageTensor clipped(ImageTensor image) {
    for (double& v : image.data) v = std::clamp(v, 0.0, 1.0);
    return image;
}

}  // namespace fdiag
