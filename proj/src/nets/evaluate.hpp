#pragma once

#include <functional>
#include <span>
#include <vector>

#include "internal.hpp"

namespace fdiag::detail {

struct LnCache {
    std::vector<double> xhat;
    std::vector<double> rstd;
};

struct BlockCache {
    std::vector<double> x_in, a, qkv, probs, attn, x_mid, c, h, g;
    LnCache ln1, ln2;
};

struct TransformerCache {
    std::size_t tokens = 0, grid_rows = 0, grid_cols = 0;
    std::vector<double> feats;
    std::vector<BlockCache> blocks;
    std::vector<double> x_out, xf, pooled;
    LnCache lnf;
};

struct MlpCache {
    std::vector<std::vector<double>> inputs;  // input of each hidden layer
    std::vector<std::vector<double>> pre;     // pre-activation of each hidden layer
    std::vector<double> last;                 // final hidden activation
};

/// Token matrix (tokens × t.features) for an image, with the token grid shape.
std::vector<double> token_features(const TransformerBranch& t, const ImageTensor& image, std::size_t& grid_rows,
                                   std::size_t& grid_cols);

/// Input vector of spectral-mlp: 0.1·ln(floor + S̃/(H·W)) per bin, luma spectrum.
std::vector<double> mlp_features(const MlpBranch& m, const ImageTensor& image);

double transformer_forward(const TransformerBranch& t, std::span<const double> p, const ImageTensor& image,
                           TransformerCache* cache);
void transformer_backward(const TransformerBranch& t, std::span<const double> p, const TransformerCache& cache,
                          double dscore, std::span<double> grad);

double mlp_forward(const MlpBranch& m, std::span<const double> p, const ImageTensor& image, MlpCache* cache);
void mlp_backward(const MlpBranch& m, std::span<const double> p, const MlpCache& cache, double dscore,
                  std::span<double> grad);

struct Evaluator {
    Architecture arch;
    explicit Evaluator(const ModelConfig& config) : arch(describe(config)) {}

    /// Score only.
    double run(std::span<const double> params, const ImageTensor& image) const;
    /// Score, then accumulation of dscore(score)·∂score/∂θ into grad.
    double run(std::span<const double> params, const ImageTensor& image, std::span<double> grad,
               const std::function<double(double)>& dscore) const;
    BranchScores branches(std::span<const double> params, const ImageTensor& image) const;
};

}  // namespace fdiag::detail
