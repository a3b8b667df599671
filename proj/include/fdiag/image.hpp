#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdiag {

/// Thrown when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an image cannot be tiled exactly by a patch size.
class TilingError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Real-valued raster, row-major with interleaved channels.
///
/// Samples nominally live in [0,1] but perturbed images may leave that range.
struct ImageTensor {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
        return data[(y * width + x) * channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return data[(y * width + x) * channels + c];
    }

    std::size_t pixels() const { return height * width; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const ImageTensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Throws InvalidInput unless data length matches the shape and every sample is finite.
void validate(const ImageTensor& image);

/// Single-channel plane of channel `c`.
ImageTensor channel_plane(const ImageTensor& image, std::size_t c);

/// Luma conversion with 0.299/0.587/0.114 weights; single-channel input is copied.
ImageTensor to_luma(const ImageTensor& image);

double mean(const ImageTensor& image);
double stddev(const ImageTensor& image);
double energy(const ImageTensor& image);

/// Window of `size`×`size` pixels centered in the image (top-left at (H-size)/2, (W-size)/2).
ImageTensor center_crop(const ImageTensor& image, std::size_t size);

}  // namespace fdiag
