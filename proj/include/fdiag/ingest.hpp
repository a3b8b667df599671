#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdiag/image.hpp"

namespace fdiag {

/// Base for file and dataset I/O failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class UnsupportedFormat : public IoError {
public:
    using IoError::IoError;
};
class TruncatedFile : public IoError {
public:
    using IoError::IoError;
};

enum class ColorMode { luma, rgb };

/// Reads an 8-bit PNG (gray or RGB) or a binary PGM (P5, maxval 255) as samples/255.
/// Luma mode collapses RGB to one channel; rgb mode expands gray to three.
ImageTensor load_image(const std::filesystem::path& path, ColorMode color = ColorMode::luma);

/// 8-bit PNG; samples are clamped to [0,1] and rounded only here.
void save_png(const std::filesystem::path& path, const ImageTensor& image);

/// Headerless little-endian 64-bit floats, row-major, channel-interleaved.
void write_raw(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_raw(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels);

struct DatasetSpec {
    std::filesystem::path root;
    std::string glob = "*";
    std::optional<std::size_t> crop;
    std::optional<std::size_t> limit;
    ColorMode color = ColorMode::luma;
};

struct ManifestEntry {
    std::size_t index = 0;
    std::string path;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    /// Crop exceeded the image; height/width are the uncropped size and index is unused.
    bool skipped = false;
};

struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<ManifestEntry> manifest;
    /// Files skipped because the crop exceeded them.
    std::vector<std::string> warnings;
};

/// Lexicographically sorted files matching `glob` directly under root, loaded in
/// order, center-cropped, then truncated to `limit`.
Dataset load_dataset(const DatasetSpec& spec, std::size_t workers = 1);

/// CSV `index,path,height,width,channels`; skipped files carry `skipped` in the index column.
void write_manifest_csv(std::ostream& os, const std::vector<ManifestEntry>& manifest);

}  // namespace fdiag
