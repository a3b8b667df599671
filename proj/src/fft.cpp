#include "fdiag/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>

namespace fdiag {

namespace {

// Radix-2 plan for power-of-two lengths; Bluestein on top of it otherwise.
class Plan {
public:
    explicit Plan(std::size_t n) : n_(n) {
        if (std::has_single_bit(n)) {
            init_radix2(n, twiddle_, bitrev_);
        } else {
            m_ = std::bit_ceil(2 * n - 1);
            init_radix2(m_, twiddle_, bitrev_);
            chirp_.resize(n);
            const std::size_t two_n = 2 * n;
            for (std::size_t k = 0; k < n; ++k) {
                // k² mod 2n keeps the chirp argument small and exact.
                const std::size_t k2 = (k * k) % two_n;
                chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
            }
            kernel_.assign(m_, cplx{});
            kernel_[0] = std::conj(chirp_[0]);
            for (std::size_t k = 1; k < n; ++k) {
                kernel_[k] = std::conj(chirp_[k]);
                kernel_[m_ - k] = std::conj(chirp_[k]);
            }
            radix2(kernel_, false);
        }
    }

    void run(std::span<cplx> data, bool inverse) const {
        if (n_ <= 1) return;
        if (chirp_.empty()) {
            radix2(data, inverse);
            return;
        }
        // Inverse via conjugation: conj(DFT(conj(x))).
        std::vector<cplx> a(m_, cplx{});
        for (std::size_t k = 0; k < n_; ++k) {
            const cplx x = inverse ? std::conj(data[k]) : data[k];
            a[k] = x * chirp_[k];
        }
        radix2(a, false);
        for (std::size_t k = 0; k < m_; ++k) a[k] *= kernel_[k];
        radix2(a, true);
        const double scale = 1.0 / static_cast<double>(m_);
        for (std::size_t k = 0; k < n_; ++k) {
            const cplx y = a[k] * scale * chirp_[k];
            data[k] = inverse ? std::conj(y) : y;
        }
    }

private:
    static void init_radix2(std::size_t m, std::vector<cplx>& tw, std::vector<std::size_t>& rev) {
        tw.resize(m / 2);
        for (std::size_t k = 0; k < m / 2; ++k) {
            tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m));
        }
        rev.resize(m);
        const int bits = std::countr_zero(m);
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t r = 0;
            for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
            rev[i] = r;
        }
    }

    // Unnormalized iterative Cooley-Tukey over a span whose length matches the twiddle table.
    void radix2(std::span<cplx> a, bool inverse) const {
        const std::size_t m = bitrev_.size();
        for (std::size_t i = 0; i < m; ++i) {
            if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
        }
        for (std::size_t len = 2; len <= m; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t step = m / len;
            for (std::size_t i = 0; i < m; i += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    cplx w = twiddle_[j * step];
                    if (inverse) w = std::conj(w);
                    const cplx u = a[i + j];
                    const cplx v = a[i + j + half] * w;
                    a[i + j] = u + v;
                    a[i + j + half] = u - v;
                }
            }
        }
    }

    std::size_t n_;
    std::size_t m_ = 0;
    std::vector<cplx> twiddle_;
    std::vector<std::size_t> bitrev_;
    std::vector<cplx> chirp_;
    std::vector<cplx> kernel_;
};

const Plan& plan_for(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<Plan>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<Plan>(n);
    return *slot;
}

// Unshifted 2D transform of one plane.
void transform_plane(std::span<cplx> plane, std::size_t h, std::size_t w, bool inverse) {
    const Plan& row_plan = plan_for(w);
    for (std::size_t y = 0; y < h; ++y) row_plan.run(plane.subspan(y * w, w), inverse);
    const Plan& col_plan = plan_for(h);
    std::vector<cplx> col(h);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) col[y] = plane[y * w + x];
        col_plan.run(col, inverse);
        for (std::size_t y = 0; y < h; ++y) plane[y * w + x] = col[y];
    }
}

void shift_plane(std::span<cplx> plane, std::size_t h, std::size_t w, bool to_centered) {
    std::vector<cplx> tmp(plane.begin(), plane.end());
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t yc = (y + h / 2) % h;
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xc = (x + w / 2) % w;
            if (to_centered) {
                plane[yc * w + xc] = tmp[y * w + x];
            } else {
                plane[y * w + x] = tmp[yc * w + xc];
            }
        }
    }
}

void check_dims(std::size_t h, std::size_t w) {
    if (h < 2 || w < 2) throw InvalidInput("transform dimensions must be at least 2");
}

}  // namespace

double norm_radius(std::size_t height, std::size_t width, std::size_t y, std::size_t x) {
    const double dy = static_cast<double>(y) - static_cast<double>(height / 2);
    const double dx = static_cast<double>(x) - static_cast<double>(width / 2);
    const double nyquist = static_cast<double>(std::min(height, width)) / 2.0;
    return std::sqrt(dy * dy + dx * dx) / nyquist;
}

double Spectrum::power() const {
    double s = 0.0;
    for (const cplx& v : data) s += std::norm(v);
    return s;
}

void dft_inplace(std::span<cplx> data, bool inverse) { plan_for(data.size()).run(data, inverse); }

void fftshift2(std::span<cplx> plane, std::size_t height, std::size_t width) {
    shift_plane(plane, height, width, true);
}

void ifftshift2(std::span<cplx> plane, std::size_t height, std::size_t width) {
    shift_plane(plane, height, width, false);
}

Spectrum fft2(const ImageTensor& image) {
    check_dims(image.height, image.width);
    validate(image);
    const std::size_t h = image.height, w = image.width, nc = image.channels;
    Spectrum out(h, w, nc);
    for (std::size_t c = 0; c < nc; ++c) {
        auto plane = out.plane(c);
        for (std::size_t i = 0; i < h * w; ++i) plane[i] = cplx(image.data[i * nc + c], 0.0);
        transform_plane(plane, h, w, false);
        fftshift2(plane, h, w);
    }
    return out;
}

InverseResult ifft2(const Spectrum& spectrum) {
    check_dims(spectrum.height, spectrum.width);
    const std::size_t h = spectrum.height, w = spectrum.width, nc = spectrum.channels;
    InverseResult result{ImageTensor(h, w, nc), 0.0};
    const double scale = 1.0 / static_cast<double>(h * w);
    double real_sq = 0.0, imag_sq = 0.0;
    std::vector<cplx> plane;
    for (std::size_t c = 0; c < nc; ++c) {
        auto src = spectrum.plane(c);
        plane.assign(src.begin(), src.end());
        ifftshift2(plane, h, w);
        transform_plane(plane, h, w, true);
        for (std::size_t i = 0; i < h * w; ++i) {
            const cplx v = plane[i] * scale;
            result.image.data[i * nc + c] = v.real();
            real_sq += v.real() * v.real();
            imag_sq += v.imag() * v.imag();
        }
    }
    result.imag_residue = real_sq > 0.0 ? std::sqrt(imag_sq / real_sq) : std::sqrt(imag_sq);
    return result;
}

PatchSpectra patch_fft(const ImageTensor& image, std::size_t patch_size) {
    if (patch_size < 2) throw InvalidInput("patch size must be at least 2");
    if (image.height % patch_size != 0 || image.width % patch_size != 0) {
        throw TilingError("patch size " + std::to_string(patch_size) + " does not tile a " +
                          std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
    }
    validate(image);
    PatchSpectra out;
    out.patch_size = patch_size;
    out.grid_rows = image.height / patch_size;
    out.grid_cols = image.width / patch_size;
    out.spectra.reserve(out.grid_rows * out.grid_cols);
    const std::size_t nc = image.channels;
    for (std::size_t gr = 0; gr < out.grid_rows; ++gr) {
        for (std::size_t gc = 0; gc < out.grid_cols; ++gc) {
            Spectrum s(patch_size, patch_size, nc);
            for (std::size_t c = 0; c < nc; ++c) {
                auto plane = s.plane(c);
                for (std::size_t y = 0; y < patch_size; ++y) {
                    for (std::size_t x = 0; x < patch_size; ++x) {
                        plane[y * patch_size + x] = image.at(gr * patch_size + y, gc * patch_size + x, c);
                    }
                }
                transform_plane(plane, patch_size, patch_size, false);
                fftshift2(plane, patch_size, patch_size);
            }
            out.spectra.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace fdiag
