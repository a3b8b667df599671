#include "fdiag/ingest.hpp"

#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>

#include "fdiag/parallel.hpp"

namespace fdiag {

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageTensor from_bytes(const unsigned char* px, std::size_t h, std::size_t w, std::size_t c) {
    ImageTensor out(h, w, c);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<double>(px[i]) / 255.0;
    return out;
}

// P5 header tokens separated by whitespace, '#' comments allowed.
ImageTensor decode_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
    std::size_t pos = 2;
    auto next_token = [&]() -> std::size_t {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw TruncatedFile("bad or truncated PGM header: " + name);
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    const std::size_t w = next_token(), h = next_token(), maxval = next_token();
    if (maxval > 255) throw UnsupportedFormat("16-bit PGM is not supported: " + name);
    if (maxval != 255) throw UnsupportedFormat("PGM maxval must be 255: " + name);
    if (w == 0 || h == 0) throw UnsupportedFormat("empty PGM: " + name);
    ++pos;  // single whitespace before raster
    if (bytes.size() < pos + w * h) throw TruncatedFile("truncated PGM raster: " + name);
    return from_bytes(bytes.data() + pos, h, w, 1);
}

ImageTensor decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw TruncatedFile("cannot decode PNG " + name + ": " + img.message);
    }
    if (img.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&img);
        throw UnsupportedFormat("16-bit PNG is not supported: " + name);
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t c = color ? 3 : 1;
    std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw TruncatedFile("truncated or corrupt PNG " + name + ": " + msg);
    }
    return from_bytes(px.data(), img.height, img.width, c);
}

ImageTensor expand_gray(const ImageTensor& g) {
    ImageTensor out(g.height, g.width, 3);
    for (std::size_t i = 0; i < g.pixels(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) out.data[i * 3 + c] = g.data[i];
    }
    return out;
}

double to_le(double v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        bits = __builtin_bswap64(bits);
        return std::bit_cast<double>(bits);
    }
    return v;
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path, ColorMode color) {
    const auto bytes = read_bytes(path);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    ImageTensor img;
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) {
        img = decode_png(bytes, path.string());
    } else if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
        img = decode_pgm(bytes, path.string());
    } else {
        throw UnsupportedFormat("not an 8-bit PNG or P5 PGM: " + path.string());
    }
    if (color == ColorMode::luma) return to_luma(img);
    return img.channels == 1 ? expand_gray(img) : img;
}

void save_png(const std::filesystem::path& path, const ImageTensor& image) {
    if (image.channels != 1 && image.channels != 3) throw InvalidInput("PNG output needs 1 or 3 channels");
    std::vector<unsigned char> px(image.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<unsigned char>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

void write_raw(const std::filesystem::path& path, const ImageTensor& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (double v : image.data) {
        const double le = to_le(v);
        out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
    if (!out) throw IoError("short write to " + path.string());
}

ImageTensor read_raw(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels) {
    const auto bytes = read_bytes(path);
    ImageTensor img(height, width, channels);
    if (bytes.size() != img.data.size() * sizeof(double)) {
        throw TruncatedFile("raw file " + path.string() + " has " + std::to_string(bytes.size()) +
                            " bytes, expected " + std::to_string(img.data.size() * sizeof(double)));
    }
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v;
        std::memcpy(&v, bytes.data() + i * sizeof(double), sizeof v);
        img.data[i] = to_le(v);
    }
    return img;
}

Dataset load_dataset(const DatasetSpec& spec, std::size_t workers) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(spec.root)) throw IoError("dataset root is not a directory: " + spec.root.string());
    if (spec.limit && *spec.limit < 1) throw InvalidInput("dataset limit must be >= 1");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(spec.root)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (fnmatch(spec.glob.c_str(), name.c_str(), 0) == 0) files.push_back(entry.path());
    }
    if (files.empty()) throw IoError("no files match " + spec.glob + " in " + spec.root.string());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    std::vector<ImageTensor> loaded(files.size());
    parallel_for(files.size(), workers, [&](std::size_t i) { loaded[i] = load_image(files[i], spec.color); });

    Dataset ds;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (spec.limit && ds.images.size() >= *spec.limit) break;
        ImageTensor img = std::move(loaded[i]);
        if (spec.crop) {
            if (*spec.crop > img.height || *spec.crop > img.width) {
                ds.warnings.push_back("skipped " + files[i].string() + ": crop " + std::to_string(*spec.crop) +
                                      " exceeds " + std::to_string(img.height) + "x" + std::to_string(img.width));
                ds.manifest.push_back({0, files[i].string(), img.height, img.width, img.channels, true});
                continue;
            }
            img = center_crop(img, *spec.crop);
        }
        ds.manifest.push_back({ds.images.size(), files[i].string(), img.height, img.width, img.channels});
        ds.images.push_back(std::move(img));
    }
    if (ds.images.empty()) throw IoError("every matching file was skipped in " + spec.root.string());
    return ds;
}

void write_manifest_csv(std::ostream& os, const std::vector<ManifestEntry>& manifest) {
    os << "index,path,height,width,channels\n";
    for (const auto& m : manifest) {
        if (m.skipped) {
            os << "skipped";
        } else {
            os << m.index;
        }
        os << ',' << m.path << ',' << m.height << ',' << m.width << ',' << m.channels << '\n';
    }
}

}  // namespace fdiag
