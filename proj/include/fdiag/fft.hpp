#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fdiag/image.hpp"

namespace fdiag {

using cplx = std::complex<double>;

/// Normalized radius of bin (y, x) on a DC-centered H×W grid.
///
/// The distance from DC is divided by min(H,W)/2, so the Nyquist frequency of the
/// shorter axis sits at 1 and corner bins reach up to about sqrt(2).
double norm_radius(std::size_t height, std::size_t width, std::size_t y, std::size_t x);

/// DC-centered complex spectrum, one plane per channel.
///
/// Zero frequency lives at (H/2, W/2) (integer division). Planes are stored
/// channel-major: data[(c*H + y)*W + x].
struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<cplx> data;

    Spectrum() = default;
    Spectrum(std::size_t h, std::size_t w, std::size_t c)
        : height(h), width(w), channels(c), data(h * w * c) {}

    cplx& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    const cplx& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    std::span<cplx> plane(std::size_t c) { return {data.data() + c * height * width, height * width}; }
    std::span<const cplx> plane(std::size_t c) const {
        return {data.data() + c * height * width, height * width};
    }
    double norm_radius(std::size_t y, std::size_t x) const { return fdiag::norm_radius(height, width, y, x); }
    /// Sum of |F|² over every bin and channel.
    double power() const;
};

/// Per-patch spectra of an exactly tiled image, patches in row-major spatial order.
struct PatchSpectra {
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::size_t patch_size = 0;
    std::vector<Spectrum> spectra;

    const Spectrum& at(std::size_t row, std::size_t col) const { return spectra[row * grid_cols + col]; }
};

/// Output of the inverse transform: the real part plus the norm of the discarded
/// imaginary part relative to the norm of the real part.
struct InverseResult {
    ImageTensor image;
    double imag_residue = 0.0;
};

/// In-place 1D DFT (unnormalized, sign -1 for forward). Any length >= 1.
void dft_inplace(std::span<cplx> data, bool inverse);

/// Forward 2D transform, unnormalized, DC-centered. Requires height, width >= 2.
Spectrum fft2(const ImageTensor& image);

/// Inverse of fft2 with 1/(H·W) scaling; the real part becomes the image.
InverseResult ifft2(const Spectrum& spectrum);

/// Independent transform of each patch_size×patch_size tile. No padding.
PatchSpectra patch_fft(const ImageTensor& image, std::size_t patch_size);

/// Centered-grid index shuffles; `centered[(u + n/2) % n] = natural[u]`.
void fftshift2(std::span<cplx> plane, std::size_t height, std::size_t width);
void ifftshift2(std::span<cplx> plane, std::size_t height, std::size_t width);

}  // namespace fdiag
