#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "fdiag/ingest.hpp"
#include "fdiag/rng.hpp"
#include "internal.hpp"

namespace fdiag {

namespace {

constexpr char kMagic[8] = {'F', 'D', 'I', 'A', 'G', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (pos + sizeof(T) > in.size()) throw TruncatedFile("checkpoint is truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(in[pos + i]) << (8 * i);
    pos += sizeof(T);
    return std::bit_cast<T>(bits);
}

class LayoutBuilder {
public:
    std::size_t add(std::string name, std::size_t rows, std::size_t cols, InitKind init) {
        const std::size_t off = total_;
        blocks_.push_back({std::move(name), off, rows, cols, init});
        total_ += rows * cols;
        return off;
    }
    std::size_t total() const { return total_; }
    std::vector<ParamBlock> take() { return std::move(blocks_); }

private:
    std::vector<ParamBlock> blocks_;
    std::size_t total_ = 0;
};

detail::TransformerBranch add_transformer(LayoutBuilder& lb, const ModelConfig& c, detail::BranchKind kind) {
    detail::TransformerBranch t;
    t.kind = kind;
    t.patch = kind == detail::BranchKind::spatial ? c.spatial_patch() : c.patch_size;
    t.channels = c.input_channels;
    t.feature = c.spectral_feature;
    const std::size_t area = t.patch * t.patch * t.channels;
    t.features = (kind == detail::BranchKind::spectral && c.spectral_feature == SpectralFeature::real_imag) ? 2 * area
                                                                                                            : area;
    t.dim = c.dim;
    t.heads = c.heads;
    t.hidden = c.dim * c.mlp_ratio;
    t.grid_rows = c.input_height / t.patch;
    t.grid_cols = c.input_width / t.patch;
    const std::string p = kind == detail::BranchKind::spatial ? "spat." : "spec.";
    const std::size_t d = t.dim;
    t.embed_w = lb.add(p + "embed.weight", d, t.features, InitKind::normal);
    t.embed_b = lb.add(p + "embed.bias", d, 1, InitKind::zero);
    for (std::size_t i = 0; i < c.depth; ++i) {
        const std::string b = p + "blocks." + std::to_string(i) + ".";
        detail::BlockOffsets o{};
        o.norm1_w = lb.add(b + "norm1.weight", d, 1, InitKind::one);
        o.norm1_b = lb.add(b + "norm1.bias", d, 1, InitKind::zero);
        o.qkv_w = lb.add(b + "attn.qkv.weight", 3 * d, d, InitKind::normal);
        o.qkv_b = lb.add(b + "attn.qkv.bias", 3 * d, 1, InitKind::zero);
        o.rel_bias = lb.add(b + "attn.rel_bias", t.heads, t.rel_table(), InitKind::zero);
        o.proj_w = lb.add(b + "attn.proj.weight", d, d, InitKind::normal);
        o.proj_b = lb.add(b + "attn.proj.bias", d, 1, InitKind::zero);
        o.norm2_w = lb.add(b + "norm2.weight", d, 1, InitKind::one);
        o.norm2_b = lb.add(b + "norm2.bias", d, 1, InitKind::zero);
        o.fc1_w = lb.add(b + "mlp.fc1.weight", t.hidden, d, InitKind::normal);
        o.fc1_b = lb.add(b + "mlp.fc1.bias", t.hidden, 1, InitKind::zero);
        o.fc2_w = lb.add(b + "mlp.fc2.weight", d, t.hidden, InitKind::normal);
        o.fc2_b = lb.add(b + "mlp.fc2.bias", d, 1, InitKind::zero);
        t.blocks.push_back(o);
    }
    t.norm_w = lb.add(p + "norm.weight", d, 1, InitKind::one);
    t.norm_b = lb.add(p + "norm.bias", d, 1, InitKind::zero);
    t.head_w = lb.add(p + "head.weight", 1, d, InitKind::zero);
    t.head_b = lb.add(p + "head.bias", 1, 1, InitKind::zero);
    return t;
}

std::size_t transformer_count(const ModelConfig& c, std::size_t patch, bool spectral) {
    const std::size_t d = c.dim, m = c.dim * c.mlp_ratio;
    const std::size_t area = patch * patch * c.input_channels;
    const std::size_t f = (spectral && c.spectral_feature == SpectralFeature::real_imag) ? 2 * area : area;
    const std::size_t gr = c.input_height / patch, gc = c.input_width / patch;
    const std::size_t table = c.heads * (2 * gr - 1) * (2 * gc - 1);
    const std::size_t per_block = 2 * d + (3 * d * d + 3 * d) + table + (d * d + d) + 2 * d + (m * d + m) + (d * m + d);
    return (f * d + d) + c.depth * per_block + 2 * d + (d + 1);
}

}  // namespace

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::spectral_mlp: return "spectral-mlp";
        case Arch::spatformer: return "spatformer";
        case Arch::specformer: return "specformer";
        case Arch::dualformer: return "dualformer";
    }
    return "?";
}

std::string to_string(SpectralFeature feature) {
    return feature == SpectralFeature::real_imag ? "real-imag" : "log-magnitude";
}

Arch parse_arch(const std::string& s) {
    if (s == "spectral-mlp") return Arch::spectral_mlp;
    if (s == "spatformer") return Arch::spatformer;
    if (s == "specformer") return Arch::specformer;
    if (s == "dualformer") return Arch::dualformer;
    throw InvalidInput("unknown architecture '" + s + "'");
}

SpectralFeature parse_spectral_feature(const std::string& s) {
    if (s == "real-imag") return SpectralFeature::real_imag;
    if (s == "log-magnitude") return SpectralFeature::log_magnitude;
    throw InvalidInput("unknown spectral feature '" + s + "'");
}

void ModelConfig::validate() const {
    if (depth < 1) throw InvalidInput("model config: depth must be >= 1");
    if (dim < 1) throw InvalidInput("model config: dim must be >= 1");
    if (input_channels < 1) throw InvalidInput("model config: input_channels must be >= 1");
    if (arch == Arch::spectral_mlp) {
        if (bins < 2) throw InvalidInput("model config: bins must be >= 2");
        return;
    }
    if (heads < 1 || dim % heads != 0) throw InvalidInput("model config: dim must be divisible by heads");
    if (mlp_ratio < 1) throw InvalidInput("model config: mlp_ratio must be >= 1");
    auto check_patch = [&](std::size_t p, const char* what) {
        if (p < 2) throw InvalidInput(std::string("model config: ") + what + " must be >= 2");
        if (input_height % p != 0 || input_width % p != 0) {
            throw InvalidInput(std::string("model config: ") + what + " must tile input_height x input_width");
        }
    };
    check_patch(patch_size, "patch_size");
    if (arch == Arch::dualformer) check_patch(spatial_patch(), "spatial_patch_size");
}

std::string serialize(const ModelConfig& c) {
    std::ostringstream os;
    os << "arch = " << to_string(c.arch) << '\n'
       << "patch_size = " << c.patch_size << '\n'
       << "spatial_patch_size = " << c.spatial_patch_size << '\n'
       << "depth = " << c.depth << '\n'
       << "dim = " << c.dim << '\n'
       << "heads = " << c.heads << '\n'
       << "mlp_ratio = " << c.mlp_ratio << '\n'
       << "spectral_feature = " << to_string(c.spectral_feature) << '\n'
       << "input_channels = " << c.input_channels << '\n'
       << "bins = " << c.bins << '\n'
       << "input_height = " << c.input_height << '\n'
       << "input_width = " << c.input_width << '\n';
    return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto num = [&] {
            try {
                return static_cast<std::size_t>(std::stoull(value));
            } catch (const std::logic_error&) {
                throw InvalidInput("model config: bad integer for " + key);
            }
        };
        if (key == "arch") c.arch = parse_arch(value);
        else if (key == "patch_size") c.patch_size = num();
        else if (key == "spatial_patch_size") c.spatial_patch_size = num();
        else if (key == "depth") c.depth = num();
        else if (key == "dim") c.dim = num();
        else if (key == "heads") c.heads = num();
        else if (key == "mlp_ratio") c.mlp_ratio = num();
        else if (key == "spectral_feature") c.spectral_feature = parse_spectral_feature(value);
        else if (key == "input_channels") c.input_channels = num();
        else if (key == "bins") c.bins = num();
        else if (key == "input_height") c.input_height = num();
        else if (key == "input_width") c.input_width = num();
        else throw InvalidInput("model config: unknown key " + key);
    }
    return c;
}

namespace detail {

Architecture describe(const ModelConfig& config) {
    config.validate();
    Architecture a;
    LayoutBuilder lb;
    switch (config.arch) {
        case Arch::spectral_mlp: {
            a.is_mlp = true;
            a.mlp.bins = config.bins;
            a.mlp.dim = config.dim;
            for (std::size_t i = 0; i < config.depth; ++i) {
                const std::string n = "mlp.fc" + std::to_string(i);
                a.mlp.weights.push_back(lb.add(n + ".weight", config.dim, i == 0 ? config.bins : config.dim,
                                               InitKind::normal));
                a.mlp.biases.push_back(lb.add(n + ".bias", config.dim, 1, InitKind::zero));
            }
            a.mlp.head_w = lb.add("mlp.head.weight", 1, config.dim, InitKind::zero);
            a.mlp.head_b = lb.add("mlp.head.bias", 1, 1, InitKind::zero);
            break;
        }
        case Arch::spatformer:
            a.transformers.push_back(add_transformer(lb, config, BranchKind::spatial));
            break;
        case Arch::specformer:
            a.transformers.push_back(add_transformer(lb, config, BranchKind::spectral));
            break;
        case Arch::dualformer:
            a.transformers.push_back(add_transformer(lb, config, BranchKind::spatial));
            a.transformers.push_back(add_transformer(lb, config, BranchKind::spectral));
            break;
    }
    a.total = lb.total();
    a.layout = lb.take();
    return a;
}

}  // namespace detail

std::vector<ParamBlock> parameter_layout(const ModelConfig& config) { return detail::describe(config).layout; }

std::size_t parameter_count(const ModelConfig& c) {
    c.validate();
    switch (c.arch) {
        case Arch::spectral_mlp:
            return (c.bins * c.dim + c.dim) + (c.depth - 1) * (c.dim * c.dim + c.dim) + (c.dim + 1);
        case Arch::spatformer: return transformer_count(c, c.patch_size, false);
        case Arch::specformer: return transformer_count(c, c.patch_size, true);
        case Arch::dualformer:
            return transformer_count(c, c.spatial_patch(), false) + transformer_count(c, c.patch_size, true);
    }
    return 0;
}

Model::Model(ModelConfig config, std::vector<double> parameters)
    : config_(std::move(config)), layout_(parameter_layout(config_)), params_(std::move(parameters)) {
    const std::size_t expected = layout_.empty() ? 0 : layout_.back().offset + layout_.back().size();
    if (params_.size() != expected) {
        throw InvalidInput("parameter vector has " + std::to_string(params_.size()) + " entries, layout needs " +
                           std::to_string(expected));
    }
    for (double v : params_) {
        if (!std::isfinite(v)) throw InvalidInput("model parameters must be finite");
    }
}

std::span<double> Model::block(const std::string& name) {
    for (const auto& b : layout_) {
        if (b.name == name) return std::span<double>(params_).subspan(b.offset, b.size());
    }
    throw InvalidInput("no parameter block named " + name);
}

std::span<const double> Model::block(const std::string& name) const {
    return const_cast<Model*>(this)->block(name);
}

Model build(const ModelConfig& config, std::uint64_t seed) {
    const auto layout = parameter_layout(config);
    std::vector<double> params(layout.empty() ? 0 : layout.back().offset + layout.back().size(), 0.0);
    Rng rng(seed);
    for (const auto& b : layout) {
        for (std::size_t i = 0; i < b.size(); ++i) {
            double& p = params[b.offset + i];
            switch (b.init) {
                case InitKind::normal: p = rng.truncated_normal(0.02); break;
                case InitKind::zero: p = 0.0; break;
                case InitKind::one: p = 1.0; break;
            }
        }
    }
    return Model(config, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::vector<unsigned char> buf(kMagic, kMagic + 8);
    put_le(buf, kCheckpointVersion);
    const std::string cfg = serialize(model.config());
    put_le(buf, static_cast<std::uint64_t>(cfg.size()));
    buf.insert(buf.end(), cfg.begin(), cfg.end());
    put_le(buf, static_cast<std::uint64_t>(model.parameters().size()));
    for (double v : model.parameters()) put_le(buf, v);
    put_le(buf, fnv1a(buf.data(), buf.size()));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (buf.size() < 8 + 4 + 8 || std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw UnsupportedFormat("not a model checkpoint: " + path.string());
    }
    if (buf.size() < 16) throw TruncatedFile("checkpoint is truncated");
    std::size_t tail = buf.size() - 8;
    std::size_t pos = tail;
    const auto stored = get_le<std::uint64_t>(buf, pos);
    if (stored != fnv1a(buf.data(), tail)) throw IoError("checkpoint checksum mismatch: " + path.string());
    pos = 8;
    const auto version = get_le<std::uint32_t>(buf, pos);
    if (version != kCheckpointVersion) throw UnsupportedFormat("unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = get_le<std::uint64_t>(buf, pos);
    if (pos + cfg_len > tail) throw TruncatedFile("checkpoint is truncated");
    const std::string cfg(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                          buf.begin() + static_cast<std::ptrdiff_t>(pos + cfg_len));
    pos += cfg_len;
    const auto n = get_le<std::uint64_t>(buf, pos);
    if (pos + n * 8 != tail) throw TruncatedFile("checkpoint parameter section has the wrong length");
    std::vector<double> params(n);
    for (auto& v : params) v = get_le<double>(buf, pos);
    return Model(parse_model_config(cfg), std::move(params));
}

}  // namespace fdiag
