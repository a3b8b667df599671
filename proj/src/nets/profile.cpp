#include <cmath>

#include "internal.hpp"

namespace fdiag {

namespace {

void add_transformer(Profile& out, const detail::TransformerBranch& t, std::size_t height, std::size_t width) {
    if (height % t.patch != 0 || width % t.patch != 0) {
        throw TilingError("patch size " + std::to_string(t.patch) + " does not tile a " + std::to_string(height) +
                          "x" + std::to_string(width) + " input");
    }
    const double n = static_cast<double>((height / t.patch) * (width / t.patch));
    const double f = static_cast<double>(t.features), d = static_cast<double>(t.dim);
    const double m = static_cast<double>(t.hidden), heads = static_cast<double>(t.heads);
    const double depth = static_cast<double>(t.blocks.size());
    if (t.kind == detail::BranchKind::spectral) {
        const double area = static_cast<double>(t.patch * t.patch);
        out.flops += 5.0 * area * std::log2(area) * n * static_cast<double>(t.channels);
    }
    out.flops += 2.0 * n * f * d;
    out.activations += n * d;
    const double scores = 2.0 * n * n * d;
    const double block_flops = 2.0 * n * d * 3.0 * d + scores + 2.0 * n * n * d + 2.0 * n * d * d + 4.0 * n * d * m;
    const double block_act = n * d + 3.0 * n * d + heads * n * n + n * d + n * d + n * d + n * m + n * d;
    out.flops += depth * block_flops;
    out.attention_score_flops += depth * scores;
    out.activations += depth * block_act;
    out.activations += n * d + 1.0;
    out.flops += 2.0 * d;
}

}  // namespace

Profile profile(const ModelConfig& config, std::size_t height, std::size_t width) {
    const detail::Architecture arch = detail::describe(config);
    Profile out;
    out.params = arch.total;
    if (arch.is_mlp) {
        if (height < 2 || width < 2) throw InvalidInput("input must be at least 2x2");
        const double px = static_cast<double>(height * width);
        const double d = static_cast<double>(arch.mlp.dim);
        out.flops += 5.0 * px * std::log2(px);
        double in = static_cast<double>(arch.mlp.bins);
        for (std::size_t i = 0; i < arch.mlp.weights.size(); ++i) {
            out.flops += 2.0 * in * d;
            out.activations += d;
            in = d;
        }
        out.flops += 2.0 * d;
        out.activations += 1.0;
        return out;
    }
    for (const auto& t : arch.transformers) add_transformer(out, t, height, width);
    return out;
}

}  // namespace fdiag
