#pragma once

// Offsets of every tensor inside the flat parameter vector, shared by the layout
// builder, the evaluator and the profiler.

#include <cstddef>
#include <string>
#include <vector>

#include "fdiag/nets.hpp"

namespace fdiag::detail {

enum class BranchKind { spatial, spectral };

struct BlockOffsets {
    std::size_t norm1_w, norm1_b;
    std::size_t qkv_w, qkv_b;
    std::size_t rel_bias;
    std::size_t proj_w, proj_b;
    std::size_t norm2_w, norm2_b;
    std::size_t fc1_w, fc1_b;
    std::size_t fc2_w, fc2_b;
};

struct TransformerBranch {
    BranchKind kind = BranchKind::spatial;
    std::size_t patch = 0;
    std::size_t channels = 0;
    SpectralFeature feature = SpectralFeature::real_imag;
    std::size_t features = 0;  // per-token input length
    std::size_t dim = 0;
    std::size_t heads = 0;
    std::size_t hidden = 0;
    std::size_t grid_rows = 0;  // largest accepted token grid
    std::size_t grid_cols = 0;
    std::size_t embed_w = 0, embed_b = 0;
    std::vector<BlockOffsets> blocks;
    std::size_t norm_w = 0, norm_b = 0;
    std::size_t head_w = 0, head_b = 0;

    std::size_t rel_table() const { return (2 * grid_rows - 1) * (2 * grid_cols - 1); }
};

struct MlpBranch {
    std::size_t bins = 0;
    std::size_t dim = 0;
    std::vector<std::size_t> weights;  // layer i maps (i == 0 ? bins : dim) -> dim
    std::vector<std::size_t> biases;
    std::size_t head_w = 0, head_b = 0;
};

struct Architecture {
    std::vector<ParamBlock> layout;
    std::vector<TransformerBranch> transformers;  // dualformer: [spatial, spectral]
    MlpBranch mlp;
    bool is_mlp = false;
    std::size_t total = 0;
};

Architecture describe(const ModelConfig& config);

/// Floor under the per-pixel power fed to spectral-mlp before the log.
inline constexpr double kMlpPowerFloor = 1e-8;
inline constexpr double kLayerNormEps = 1e-6;

}  // namespace fdiag::detail
