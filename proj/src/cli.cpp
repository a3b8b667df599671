#include "fdiag/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fdiag/ingest.hpp"
#include "fdiag/metrics.hpp"
#include "fdiag/nets.hpp"
#include "fdiag/perturb.hpp"
#include "fdiag/probe.hpp"
#include "fdiag/rng.hpp"
#include "fdiag/spectrum.hpp"
#include "fdiag/synth.hpp"

namespace fdiag::cli {

namespace fs = std::filesystem;

namespace {

// Offsets that split the single run seed into independent streams.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kSynthStream = 1000;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Short form for console summaries; files always get full precision.
std::string brief(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream ss(s);
    while (std::getline(ss, part, sep)) out.push_back(trim(part));
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw IoError("cannot write " + path.string());
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

// ---- datasets ----

// `synth:KIND:N:SIZE` or a directory (filtered by glob/crop/limit/color).
struct Loaded {
    std::vector<ImageTensor> images;
    std::vector<ManifestEntry> manifest;
    std::vector<std::string> warnings;
};

Loaded load_source(const RunConfig& cfg, const std::string& key, std::uint64_t stream) {
    const std::string& src = cfg.str(key);
    if (src.empty()) throw UsageError("missing dataset: set " + key + "=DIR or " + key + "=synth:KIND:N:SIZE");
    const std::size_t channels = cfg.str("color") == "rgb" ? 3 : 1;
    Loaded out;
    if (src.rfind("synth:", 0) == 0) {
        const auto parts = split(src, ':');
        if (parts.size() != 4) throw UsageError(key + ": synthetic sets are synth:KIND:N:SIZE");
        const std::string& kind = parts[1];
        const std::size_t n = parse_count(key, parts[2]), size = parse_count(key, parts[3]);
        if (n < 1 || size < 2) throw UsageError(key + ": synthetic sets need N >= 1 and SIZE >= 2");
        const std::uint64_t seed = cfg.u64("seed") + kSynthStream + stream;
        if (kind == "texture") {
            for (std::size_t i = 0; i < n; ++i) out.images.push_back(power_law_texture(size, 1.0, seed * 7919 + i, channels));
        } else if (kind == "blur-real" || kind == "blur-fake") {
            // Both halves come from the same seed so real/fake stay paired.
            RealFakeSet task = make_blur_task(n, size, cfg.u64("seed") + kSynthStream, channels);
            out.images = kind == "blur-real" ? std::move(task.real) : std::move(task.fake);
        } else if (kind == "noise") {
            for (std::size_t i = 0; i < n; ++i) {
                ImageTensor img(size, size, channels);
                const CounterRng rng(seed * 104729 + i);
                for (std::size_t j = 0; j < img.data.size(); ++j) img.data[j] = 0.5 + 0.1 * rng.normal(j);
                out.images.push_back(std::move(img));
            }
        } else {
            throw UsageError(key + ": unknown synthetic kind '" + kind + "' (texture, blur-real, blur-fake, noise)");
        }
        for (std::size_t i = 0; i < out.images.size(); ++i) {
            const auto& im = out.images[i];
            out.manifest.push_back({i, src + "#" + std::to_string(i), im.height, im.width, im.channels});
        }
        return out;
    }
    DatasetSpec spec;
    spec.root = src;
    spec.glob = cfg.str("glob");
    if (!cfg.empty("crop")) spec.crop = cfg.count("crop");
    if (!cfg.empty("limit")) spec.limit = cfg.count("limit");
    spec.color = cfg.str("color") == "rgb" ? ColorMode::rgb : ColorMode::luma;
    Dataset ds = load_dataset(spec, cfg.count("workers"));
    out.images = std::move(ds.images);
    out.manifest = std::move(ds.manifest);
    out.warnings = std::move(ds.warnings);
    return out;
}

void write_manifest(const fs::path& dir, const std::string& name, const Loaded& d, std::ostream& out) {
    std::ostringstream os;
    write_manifest_csv(os, d.manifest);
    write_text(dir / name, os.str());
    for (const auto& w : d.warnings) out << "warning: " << w << '\n';
}

// ---- model configuration ----

// input_size / channels default to "auto": taken from the first image when data is available.
ModelConfig model_config(RunConfig& cfg, const std::vector<ImageTensor>* sample) {
    ModelConfig m;
    m.arch = parse_arch(cfg.str("arch"));
    m.patch_size = cfg.count("patch");
    m.spatial_patch_size = cfg.count("spatial_patch");
    m.depth = cfg.count("depth");
    m.dim = cfg.count("dim");
    m.heads = cfg.count("heads");
    m.mlp_ratio = cfg.count("mlp_ratio");
    m.spectral_feature = parse_spectral_feature(cfg.str("feature"));
    m.bins = cfg.count("bins");
    if (cfg.str("input_size") == "auto") {
        std::size_t side = 256;
        if (sample && !sample->empty()) {
            side = 0;
            for (const auto& im : *sample) side = std::max({side, im.height, im.width});
        }
        cfg.set("input_size", std::to_string(side));
    }
    m.input_height = m.input_width = cfg.count("input_size");
    if (cfg.str("channels") == "auto") {
        // Without data (profile), assume RGB like the library default unless color says otherwise.
        std::size_t ch = cfg.is_set("color") && cfg.str("color") != "rgb" ? 1 : 3;
        if (sample && !sample->empty()) ch = sample->front().channels;
        cfg.set("channels", std::to_string(ch));
    }
    m.input_channels = cfg.count("channels");
    m.validate();
    return m;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.lr = cfg.real("lr");
    tc.steps = cfg.count("steps");
    tc.batch = cfg.count("batch");
    tc.seed = cfg.u64("seed") + kTrainStream;
    const std::string& opt = cfg.str("optimizer");
    if (opt == "adam") {
        tc.optimizer = Optimizer::adam;
    } else if (opt == "sgd") {
        tc.optimizer = Optimizer::sgd;
    } else {
        throw UsageError("optimizer must be adam or sgd");
    }
    tc.workers = cfg.count("workers");
    tc.validate();
    return tc;
}

ExternalOptions external_options(const RunConfig& cfg) {
    ExternalOptions o;
    o.timeout = std::chrono::milliseconds(cfg.count("timeout_ms"));
    o.deterministic = cfg.flag("deterministic");
    o.repeats = std::max<std::size_t>(1, cfg.count("repeats"));
    return o;
}

// A fresh built-in model when no scorer is named.
std::unique_ptr<Scorer> resolve_scorer(RunConfig& cfg, const std::vector<ImageTensor>& sample) {
    if (!cfg.empty("scorer")) return make_scorer(cfg.str("scorer"), external_options(cfg));
    return std::make_unique<ModelScorer>(build(model_config(cfg, &sample), cfg.u64("seed")), "fresh");
}

ProbeCurve probe_with(Scorer& scorer, const std::vector<ImageTensor>& images, const RunConfig& cfg) {
    SweepOptions o;
    o.k = cfg.count("k");
    o.sigma = cfg.str("sigma") == "auto" ? -1.0 : cfg.real("sigma");
    o.seed = cfg.u64("seed");
    o.workers = cfg.count("workers");
    return sweep(scorer, images, o);
}

std::string curve_csv(const ProbeCurve& c) {
    std::ostringstream os;
    write_probe_csv(os, c);
    return os.str();
}

std::string boundaries_csv(const RangeBoundaries& b) {
    return "r1,r2,r1_saturated,r2_saturated\n" + fmt(b.r1) + "," + fmt(b.r2) + "," + (b.r1_saturated ? "1" : "0") +
           "," + (b.r2_saturated ? "1" : "0") + "\n";
}

SpectrumProfile read_profile_file(const std::string& path) {
    std::istringstream is(read_text(path));
    return read_profile_csv(is);
}

// Two numeric columns (prediction, target) with a header row.
void read_score_pairs(const std::string& path, std::vector<double>& a, std::vector<double>& b) {
    std::istringstream is(read_text(path));
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto f = split(line, ',');
        if (f.size() < 2) throw InvalidInput("score CSV rows need two columns: " + line);
        try {
            a.push_back(std::stod(f[0]));
            b.push_back(std::stod(f[1]));
        } catch (const std::logic_error&) {
            throw InvalidInput("score CSV has a non-numeric row: " + line);
        }
    }
}

ChannelMode channel_mode(const RunConfig& cfg) {
    const std::string& m = cfg.str("channel_mode");
    if (m == "luma") return ChannelMode::luma;
    if (m == "per-channel") return ChannelMode::per_channel;
    throw UsageError("channel_mode must be luma or per-channel");
}

// ---- commands ----

void cmd_spectrum_stats(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const Loaded d = load_source(cfg, "data", 0);
    const SpectrumProfile p = mean_profile(d.images, cfg.count("bins"), channel_mode(cfg), cfg.count("workers"));
    std::ostringstream os;
    write_profile_csv(os, p);
    write_text(dir / "profile.csv", os.str());
    write_manifest(dir, "manifest.csv", d, out);
    out << "profile.csv: " << p.bins() << " bins over " << p.n_images << " images\n";
}

void cmd_perturb(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    if (cfg.empty("image")) throw UsageError("perturb needs image=PATH");
    const ImageTensor img = load_image(cfg.str("image"), cfg.str("color") == "rgb" ? ColorMode::rgb : ColorMode::luma);
    const double l = cfg.real("l");
    const double r = cfg.str("r") == "full" ? kFullBand : cfg.real("r");
    ImageTensor res;
    if (cfg.str("op") == "mask") {
        res = mask_image(img, l, r);
    } else if (cfg.str("op") == "noise") {
        const double sigma = cfg.str("sigma") == "auto" ? default_noise_sigma(img) : cfg.real("sigma");
        res = noise_image(img, l, r, sigma, content_seed(cfg.u64("seed"), img));
    } else {
        throw UsageError("op must be mask or noise");
    }
    if (cfg.flag("clip")) res = clipped(std::move(res));
    save_png(dir / "perturbed.png", res);
    write_raw(dir / "perturbed.f64", res);
    out << "perturbed.png: " << cfg.str("op") << " [" << brief(l) << ", " << cfg.str("r") << "), PSNR "
        << brief(psnr(img, res)) << " dB\n";
}

void cmd_probe(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const Loaded d = load_source(cfg, "data", 0);
    auto scorer = resolve_scorer(cfg, d.images);
    const ProbeCurve c = probe_with(*scorer, d.images, cfg);
    write_text(dir / "probe.csv", curve_csv(c));
    write_manifest(dir, "manifest.csv", d, out);
    if (c.nondeterministic_scorer) out << "note: scorer declared nondeterministic; scores averaged over repeats\n";
    out << "probe.csv: " << c.size() << " rings, " << c.n_images << " images, scorer " << scorer->name() << '\n';
}

void cmd_boundaries(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    RangeBoundaries b;
    if (!cfg.empty("curve")) {
        std::istringstream is(read_text(cfg.str("curve")));
        b = estimate_boundaries(read_probe_csv(is), cfg.real("eps"));
    } else if (!cfg.empty("a") && !cfg.empty("b")) {
        b = estimate_boundaries(read_profile_file(cfg.str("a")), read_profile_file(cfg.str("b")), cfg.real("eps"));
    } else {
        throw UsageError("boundaries needs curve=PROBE.csv, or a=REAL_PROFILE.csv and b=GENERATED_PROFILE.csv");
    }
    write_text(dir / "boundaries.csv", boundaries_csv(b));
    out << "r1 = " << brief(b.r1) << (b.r1_saturated ? " (saturated)" : "") << ", r2 = " << brief(b.r2)
        << (b.r2_saturated ? " (saturated)" : "") << '\n';
}

void cmd_rmse_ranges(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    if (cfg.empty("a") || cfg.empty("b")) throw UsageError("rmse-ranges needs a=PROFILE.csv and b=PROFILE.csv");
    if (cfg.empty("r1") || cfg.empty("r2")) throw UsageError("rmse-ranges needs r1 and r2");
    const RangeRmse r = range_rmse(read_profile_file(cfg.str("a")), read_profile_file(cfg.str("b")),
                                   RangeBoundaries{cfg.real("r1"), cfg.real("r2")});
    std::ostringstream os;
    os << "range,rmse,empty\n"
       << "low," << fmt(r.low) << ',' << r.low_empty << '\n'
       << "mid," << fmt(r.mid) << ',' << r.mid_empty << '\n'
       << "high," << fmt(r.high) << ',' << r.high_empty << '\n';
    write_text(dir / "rmse.csv", os.str());
    out << fmt(r.low) << ' ' << fmt(r.mid) << ' ' << fmt(r.high) << '\n';
}

struct Trained {
    Model model;
    double accuracy;
};

Trained train_on(RunConfig& cfg, const Loaded& real, const Loaded& fake, const fs::path& dir, const std::string& tag) {
    const ModelConfig mc = model_config(cfg, &real.images);
    const TrainResult tr = train(build(mc, cfg.u64("seed")), real.images, fake.images, train_config(cfg));
    const double acc = accuracy(tr.model, real.images, fake.images, cfg.count("workers"));
    save_checkpoint(dir / ("model" + tag + ".ckpt"), tr.model);
    std::ostringstream os;
    os << "step,loss\n";
    for (std::size_t i = 0; i < tr.losses.size(); ++i) os << i + 1 << ',' << fmt(tr.losses[i]) << '\n';
    write_text(dir / ("losses" + tag + ".csv"), os.str());
    return {tr.model, acc};
}

void cmd_train(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const Loaded real = load_source(cfg, "real", 0), fake = load_source(cfg, "fake", 1);
    const Trained t = train_on(cfg, real, fake, dir, "");
    write_text(dir / "accuracy.csv", "accuracy\n" + fmt(t.accuracy) + "\n");
    write_manifest(dir, "manifest_real.csv", real, out);
    write_manifest(dir, "manifest_fake.csv", fake, out);
    out << "model.ckpt: " << t.model.parameters().size() << " parameters, training accuracy " << brief(t.accuracy) << '\n';
}

void cmd_gradcheck(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    if (cfg.empty("data")) cfg.set("data", "synth:texture:4:16");
    const Loaded d = load_source(cfg, "data", 0);
    Model m = cfg.empty("checkpoint") ? build(model_config(cfg, &d.images), cfg.u64("seed"))
                                      : load_checkpoint(cfg.str("checkpoint"));
    if (cfg.empty("checkpoint")) {
        // Random values everywhere, so no path (zero head, zero bias table) is trivially exact.
        Rng rng(cfg.u64("seed") + kTrainStream);
        for (double& v : m.parameters()) v = 0.3 * rng.normal();
    }
    std::vector<int> labels(d.images.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2 == 0);
    std::vector<std::size_t> coords;
    const std::size_t want = cfg.count("coords"), np = m.parameters().size();
    if (want > 0 && want < np) {
        Rng rng(cfg.u64("seed") + kTrainStream + 1);
        for (std::size_t i = 0; i < want; ++i) coords.push_back(rng.below(np));
    }
    const GradCheckReport r = gradcheck(m, d.images, labels, cfg.real("h"), coords);
    write_text(dir / "gradcheck.csv", "checked,max_rel_error,worst_index,worst_block\n" + std::to_string(r.checked) +
                                          "," + fmt(r.max_rel_error) + "," + std::to_string(r.worst_index) + "," +
                                          r.worst_block + "\n");
    out << "checked " << r.checked << " coordinates, max relative error " << brief(r.max_rel_error) << " at "
        << r.worst_block << '\n';
}

void cmd_profile(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const ModelConfig mc = model_config(cfg, nullptr);
    const std::size_t side = cfg.str("size") == "auto" ? mc.input_height : cfg.count("size");
    const Profile p = profile(mc, side, side);
    write_text(dir / "profile.csv", "params,flops,activations,attention_score_flops\n" + std::to_string(p.params) +
                                        "," + fmt(p.flops) + "," + fmt(p.activations) + "," +
                                        fmt(p.attention_score_flops) + "\n");
    out << to_string(mc.arch) << '/' << mc.patch_size << " at " << side << 'x' << side << ": " << brief(p.params / 1e6)
        << "M params, " << brief(p.flops / 1e9) << " GFLOPs, " << brief(p.activations / 1e6) << "M activations\n";
}

void cmd_metrics(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    bool any = false;
    if (!cfg.empty("scores")) {
        std::vector<double> a, b;
        read_score_pairs(cfg.str("scores"), a, b);
        const Correlations c = correlations(a, b);
        auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
        write_text(dir / "correlations.csv", "plcc,srcc,krcc,n\n" + cell(c.plcc) + "," + cell(c.srcc) + "," +
                                                 cell(c.krcc) + "," + std::to_string(a.size()) + "\n");
        auto shown = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("undefined"); };
        out << "PLCC " << shown(c.plcc) << ", SRCC " << shown(c.srcc) << ", KRCC " << shown(c.krcc) << '\n';
        any = true;
    }
    if (!cfg.empty("image") && !cfg.empty("reference")) {
        const ColorMode cm = cfg.str("color") == "rgb" ? ColorMode::rgb : ColorMode::luma;
        const double v = psnr(load_image(cfg.str("image"), cm), load_image(cfg.str("reference"), cm), cfg.real("peak"));
        write_text(dir / "psnr.csv", "psnr\n" + fmt(v) + "\n");
        out << "PSNR " << brief(v) << " dB\n";
        any = true;
    }
    if (!any) throw UsageError("metrics needs scores=CSV, or image=PATH and reference=PATH");
}

void cmd_patch_sweep(RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const Loaded real = load_source(cfg, "real", 0), fake = load_source(cfg, "fake", 1);
    const Loaded probe_set = cfg.empty("data") ? real : load_source(cfg, "data", 2);
    if (!cfg.is_set("arch")) cfg.set("arch", "specformer");
    std::ostringstream summary;
    summary << "patch,accuracy,r1,r2,r1_saturated,r2_saturated\n";
    for (const std::string& ps : split(cfg.str("patches"), ',')) {
        cfg.set("patch", ps);
        const std::string tag = "_p" + ps;
        const Trained t = train_on(cfg, real, fake, dir, tag);
        ModelScorer scorer(t.model, "specformer/" + ps);
        const ProbeCurve c = probe_with(scorer, probe_set.images, cfg);
        write_text(dir / ("probe" + tag + ".csv"), curve_csv(c));
        const RangeBoundaries b = estimate_boundaries(c, cfg.real("eps"));
        write_text(dir / ("boundaries" + tag + ".csv"), boundaries_csv(b));
        summary << ps << ',' << fmt(t.accuracy) << ',' << fmt(b.r1) << ',' << fmt(b.r2) << ',' << b.r1_saturated << ','
                << b.r2_saturated << '\n';
        out << "patch " << ps << ": accuracy " << brief(t.accuracy) << ", r1 " << brief(b.r1) << ", r2 " << brief(b.r2) << '\n';
    }
    write_text(dir / "patch_sweep.csv", summary.str());
    write_manifest(dir, "manifest_real.csv", real, out);
    write_manifest(dir, "manifest_fake.csv", fake, out);
}

}  // namespace

// ---- RunConfig ----

const std::map<std::string, std::string>& RunConfig::defaults() {
    static const std::map<std::string, std::string> d = {
        // shared
        {"seed", "0"}, {"workers", "1"}, {"out", "."},
        // datasets
        {"data", ""}, {"real", ""}, {"fake", ""}, {"glob", "*"}, {"crop", ""}, {"limit", ""}, {"color", "luma"},
        // spectra and ranges
        {"bins", "32"}, {"channel_mode", "luma"}, {"eps", "0.1"}, {"a", ""}, {"b", ""}, {"r1", ""}, {"r2", ""},
        {"curve", ""},
        // perturbation and probing
        {"k", "20"}, {"sigma", "auto"}, {"l", "0"}, {"r", "0"}, {"op", "mask"}, {"clip", "false"}, {"image", ""},
        {"scorer", ""}, {"timeout_ms", "30000"}, {"repeats", "1"}, {"deterministic", "true"},
        // model
        {"arch", "specformer"}, {"patch", "32"}, {"spatial_patch", "0"}, {"depth", "10"}, {"dim", "96"},
        {"heads", "4"}, {"mlp_ratio", "4"}, {"feature", "real-imag"}, {"channels", "auto"}, {"input_size", "auto"},
        {"checkpoint", ""},
        // training and checks
        {"lr", "0.001"}, {"steps", "500"}, {"batch", "16"}, {"optimizer", "adam"}, {"coords", "200"}, {"h", "1e-05"},
        {"patches", "8,16,32,64"},
        // profile and metrics
        {"size", "auto"}, {"scores", ""}, {"reference", ""}, {"peak", "1"},
    };
    return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = trim(value);
    explicit_.insert(key);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

const std::string& RunConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    const std::string& v = str(key);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
        throw UsageError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

std::size_t RunConfig::count(const std::string& key) const { return parse_count(key, str(key)); }

std::uint64_t RunConfig::u64(const std::string& key) const {
    const std::string& v = str(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError(key + ": expected an unsigned integer, got '" + v + "'");
    return out;
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError(key + ": expected true or false, got '" + v + "'");
}

std::string RunConfig::meta(const std::string& command) const {
    std::string s = "command = " + command + "\n";
    for (const auto& [k, v] : values_) {
        if (k != "out") s += k + " = " + v + "\n";
    }
    return s;
}

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"spectrum-stats", "perturb", "probe",   "boundaries", "rmse-ranges",
                                               "train",          "gradcheck", "profile", "metrics",    "patch-sweep"};
    return c;
}

void run(const std::string& command, RunConfig& cfg, std::ostream& out) {
    const fs::path dir = cfg.str("out");
    if (cfg.count("workers") < 1) throw UsageError("workers must be >= 1");
    fs::create_directories(dir);
    if (command == "spectrum-stats") {
        cmd_spectrum_stats(cfg, dir, out);
    } else if (command == "perturb") {
        cmd_perturb(cfg, dir, out);
    } else if (command == "probe") {
        cmd_probe(cfg, dir, out);
    } else if (command == "boundaries") {
        cmd_boundaries(cfg, dir, out);
    } else if (command == "rmse-ranges") {
        cmd_rmse_ranges(cfg, dir, out);
    } else if (command == "train") {
        cmd_train(cfg, dir, out);
    } else if (command == "gradcheck") {
        cmd_gradcheck(cfg, dir, out);
    } else if (command == "profile") {
        cmd_profile(cfg, dir, out);
    } else if (command == "metrics") {
        cmd_metrics(cfg, dir, out);
    } else if (command == "patch-sweep") {
        cmd_patch_sweep(cfg, dir, out);
    } else {
        throw UsageError("unknown command '" + command + "'");
    }
    // Written last so it reflects values resolved during the run (input_size, channels).
    write_text(dir / "run.meta", cfg.meta(command));
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Frequency-domain diagnostics for image discriminators"};
    app.name("fdiag");
    std::string command, config_path;
    std::vector<std::string> settings;
    std::map<std::string, std::string> flags;
    bool clip = false;

    std::string cmd_help = "one of:";
    for (const auto& c : commands()) cmd_help += " " + c;
    app.add_option("command", command, cmd_help)->required();
    app.add_option("settings", settings, "extra key=value settings");
    app.add_option("--config", config_path, "key = value config file");
    for (const char* key : {"seed", "out", "bins", "k", "sigma", "l", "r", "scorer", "workers"}) {
        app.add_option(std::string("--") + key, flags[key], std::string("same as ") + key + "=...");
    }
    app.add_flag("--clip", clip, "clamp perturbed images to [0,1]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "fdiag: usage error: " << e.what() << '\n';
        return 1;
    }

    RunConfig cfg;
    try {
        if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
            throw UsageError("unknown command '" + command + "'");
        }
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& s : settings) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("expected key=value, got '" + s + "'");
            cfg.set(trim(s.substr(0, eq)), s.substr(eq + 1));
        }
        for (const auto& [k, v] : flags) {
            if (!v.empty()) cfg.set(k, v);
        }
        if (clip) cfg.set("clip", "true");
    } catch (const UsageError& e) {
        err << "fdiag: usage error: " << e.what() << '\n';
        return 1;
    }

    try {
        run(command, cfg, out);
    } catch (const UsageError& e) {
        err << "fdiag: usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "fdiag: error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace fdiag::cli
