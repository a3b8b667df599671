#pragma once

#include <cstdint>
#include <vector>

#include "fdiag/fft.hpp"
#include "fdiag/image.hpp"

namespace fdiag {

/// Radius just past the farthest corner; a ring [0, kFullBand) covers every bin.
inline constexpr double kFullBand = 1.4142135623730951 + 1e-6;

/// Binary mask on a DC-centered grid: 1 where norm_radius lies in [l, r).
/// An upper edge r >= kFullBand is unbounded, so [0, kFullBand) is all-pass on any shape.
struct RingMask {
    std::size_t height = 0;
    std::size_t width = 0;
    double l = 0.0;
    double r = 0.0;
    std::vector<std::uint8_t> data;

    bool at(std::size_t y, std::size_t x) const { return data[y * width + x] != 0; }
    RingMask complement() const;
};

RingMask ring_mask(std::size_t height, std::size_t width, double l, double r);

/// Removes every frequency in [l, r): F⁻¹(F(I) ⊙ (1 − M)). No clipping.
ImageTensor mask_image(const ImageTensor& image, double l, double r);

/// Spatial Gaussian noise N(0, sigma²) drawn from `seed`, restricted to the ring [l, r).
ImageTensor band_noise(std::size_t height, std::size_t width, std::size_t channels, double l, double r, double sigma,
                       std::uint64_t seed);

/// I + F⁻¹(F(δ) ⊙ M). Bit-identical for identical arguments.
ImageTensor noise_image(const ImageTensor& image, double l, double r, double sigma, std::uint64_t seed);

/// 0.3 × std(image), the noise level used by probe sweeps unless overridden.
double default_noise_sigma(const ImageTensor& image);

/// Seed for image `index` in a sweep: seed xor index.
constexpr std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

/// Copy with every sample clamped to [0, 1].
ImageTensor clipped(ImageTensor image);

}  // namespace fdiag
