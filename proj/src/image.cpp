#include "fdiag/image.hpp"

#include <cmath>

namespace fdiag {

void validate(const ImageTensor& image) {
    if (image.data.size() != image.height * image.width * image.channels) {
        throw InvalidInput("image data length does not match height*width*channels");
    }
    if (image.channels == 0) throw InvalidInput("image has zero channels");
    for (double v : image.data) {
        if (!std::isfinite(v)) throw InvalidInput("image contains a non-finite sample");
    }
}

ImageTensor channel_plane(const ImageTensor& image, std::size_t c) {
    if (c >= image.channels) throw InvalidInput("channel index out of range");
    ImageTensor out(image.height, image.width, 1);
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        out.data[i] = image.data[i * image.channels + c];
    }
    return out;
}

ImageTensor to_luma(const ImageTensor& image) {
    if (image.channels == 1) return image;
    if (image.channels != 3) throw InvalidInput("luma conversion needs 1 or 3 channels");
    ImageTensor out(image.height, image.width, 1);
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        const double* p = &image.data[i * 3];
        out.data[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return out;
}

double mean(const ImageTensor& image) {
    if (image.data.empty()) return 0.0;
    double s = 0.0;
    for (double v : image.data) s += v;
    return s / static_cast<double>(image.data.size());
}

double stddev(const ImageTensor& image) {
    if (image.data.empty()) return 0.0;
    const double m = mean(image);
    double s = 0.0;
    for (double v : image.data) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(image.data.size()));
}

double energy(const ImageTensor& image) {
    double s = 0.0;
    for (double v : image.data) s += v * v;
    return s;
}

ImageTensor center_crop(const ImageTensor& image, std::size_t size) {
    if (size == 0 || size > image.height || size > image.width) {
        throw InvalidInput("crop size exceeds image dimensions");
    }
    const std::size_t y0 = (image.height - size) / 2;
    const std::size_t x0 = (image.width - size) / 2;
    ImageTensor out(size, size, image.channels);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            for (std::size_t c = 0; c < image.channels; ++c) {
                out.at(y, x, c) = image.at(y0 + y, x0 + x, c);
            }
        }
    }
    return out;
}

}  // namespace fdiag
