#pragma once

#include <cstdint>
#include <vector>

#include "fdiag/image.hpp"

namespace fdiag {

/// Gaussian random field with radial amplitude falloff 1/rho^exponent (rho in
/// integer frequency units, clamped at 1), rescaled to mean 0.5 and std 0.15.
ImageTensor power_law_texture(std::size_t size, double exponent, std::uint64_t seed, std::size_t channels = 1);

/// Circular Gaussian blur applied as a spectral multiplier; sigma in pixels.
ImageTensor gaussian_blur(const ImageTensor& image, double sigma);

struct RealFakeSet {
    std::vector<ImageTensor> real;
    std::vector<ImageTensor> fake;
};

/// `count` textures with faint pixel noise as the real class and heavily blurred
/// copies of the same textures as the fake class.
RealFakeSet make_blur_task(std::size_t count, std::size_t size, std::uint64_t seed, std::size_t channels = 1);

}  // namespace fdiag
