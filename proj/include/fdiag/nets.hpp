#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdiag/image.hpp"

namespace fdiag {

enum class Arch { spectral_mlp, spatformer, specformer, dualformer };
enum class SpectralFeature { real_imag, log_magnitude };

std::string to_string(Arch arch);
std::string to_string(SpectralFeature feature);
Arch parse_arch(const std::string& s);
SpectralFeature parse_spectral_feature(const std::string& s);

struct ModelConfig {
    Arch arch = Arch::specformer;
    /// Patch size of the spectral branch (and of spatformer).
    std::size_t patch_size = 32;
    /// Patch size of the dualformer spatial branch; 0 means patch_size.
    std::size_t spatial_patch_size = 0;
    std::size_t depth = 10;
    std::size_t dim = 96;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    SpectralFeature spectral_feature = SpectralFeature::real_imag;
    std::size_t input_channels = 3;
    /// Reduced-spectrum length fed to spectral-mlp.
    std::size_t bins = 32;
    /// Largest input the model accepts; sizes the relative-position bias table.
    std::size_t input_height = 256;
    std::size_t input_width = 256;

    std::size_t spatial_patch() const { return spatial_patch_size == 0 ? patch_size : spatial_patch_size; }
    /// Throws InvalidInput naming the first violated constraint.
    void validate() const;
};

/// Key/value text form used by checkpoints and run.meta.
std::string serialize(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

enum class InitKind { normal, zero, one };

/// One named tensor inside the flat parameter vector.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 1;
    InitKind init = InitKind::zero;

    std::size_t size() const { return rows * cols; }
};

/// Named layout of every parameter for a config.
std::vector<ParamBlock> parameter_layout(const ModelConfig& config);

/// Closed-form parameter count, computed without building a layout.
std::size_t parameter_count(const ModelConfig& config);

/// Thrown when a forward or backward pass produces a non-finite value.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Model {
public:
    Model(ModelConfig config, std::vector<double> parameters);

    const ModelConfig& config() const { return config_; }
    const std::vector<ParamBlock>& layout() const { return layout_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }
    /// Slice of one named block; throws InvalidInput on an unknown name.
    std::span<double> block(const std::string& name);
    std::span<const double> block(const std::string& name) const;

private:
    ModelConfig config_;
    std::vector<ParamBlock> layout_;
    std::vector<double> params_;
};

/// Weights ~ truncated normal(0, 0.02); biases, the relative-position tables and the
/// head are zero, so a fresh model scores exactly 0.
Model build(const ModelConfig& config, std::uint64_t seed);

/// Realness logit. Dualformer returns the mean of its two branch scores.
double forward(const Model& model, const ImageTensor& image);

struct BranchScores {
    double spatial = 0.0;
    double spectral = 0.0;
};
/// Both branch logits of a dualformer.
BranchScores forward_branches(const Model& model, const ImageTensor& image);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean binary cross-entropy with logits over the batch and its exact gradient.
/// The result does not depend on `workers`.
LossGradient gradient(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
                      std::size_t workers = 1);

/// Mean loss only.
double loss(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
            std::size_t workers = 1);

enum class Optimizer { adam, sgd };

struct TrainConfig {
    double lr = 1e-3;
    std::size_t steps = 500;
    std::size_t batch = 16;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::adam;
    std::size_t workers = 1;

    void validate() const;
};

struct TrainResult {
    Model model;
    std::vector<double> losses;
};

/// Raised when the loss exceeds 1e3 or becomes non-finite; carries the history so far.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history(std::move(history)) {}
    std::vector<double> history;
};

/// Adam (0.9, 0.999, 1e-8) or plain SGD on balanced real(1)/fake(0) batches.
TrainResult train(Model model, std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                  const TrainConfig& tc);

/// Fraction of images classified correctly with threshold 0 on the logit.
double accuracy(const Model& model, std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                std::size_t workers = 1);

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_block;
};

/// Compares the analytic gradient with central differences of step h on the given
/// coordinates (every coordinate when empty). Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport gradcheck(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
                          double h = 1e-5, std::span<const std::size_t> coords = {});

struct Profile {
    std::size_t params = 0;
    double flops = 0.0;
    double activations = 0.0;
    /// QKᵀ component of the attention FLOPs, summed over blocks and branches.
    double attention_score_flops = 0.0;
};

/// Closed-form cost of one forward pass at height×width.
Profile profile(const ModelConfig& config, std::size_t height, std::size_t width);

/// Versioned little-endian container with a trailing FNV-1a checksum. Damaged or
/// foreign files raise the IoError family from fdiag/ingest.hpp.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace fdiag
