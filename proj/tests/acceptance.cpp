// Acceptance run: one PASS/FAIL line per top-level requirement, with the measured
// quantities next to the verdict. Exit status is nonzero if any line fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fdiag/cli.hpp"
#include "fdiag/fft.hpp"
#include "fdiag/ingest.hpp"
#include "fdiag/metrics.hpp"
#include "fdiag/nets.hpp"
#include "fdiag/perturb.hpp"
#include "fdiag/probe.hpp"
#include "fdiag/spectrum.hpp"
#include "fdiag/synth.hpp"
#include "oracles.hpp"

using namespace fdiag;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

int failures = 0;

void criterion(const std::string& name, const std::function<void(Verdict&)>& body, double budget_s = 0.0) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(v);
    } catch (const std::exception& e) {
        v.pass = false;
        v.note(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0.0) v.require(secs < budget_s, "over time budget of " + num(budget_s) + " s");
    std::printf("%s  %-22s %6.1fs  %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), secs, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
}

double max_abs(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs(const ImageTensor& a, const ImageTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double sum_squares(const ImageTensor& img) {
    double e = 0.0;
    for (double v : img.data) e += v * v;
    return e;
}

ImageTensor roll(const ImageTensor& img, std::size_t dy, std::size_t dx) {
    ImageTensor out(img.height, img.width, img.channels);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
                out.at((y + dy) % img.height, (x + dx) % img.width, c) = img.at(y, x, c);
    return out;
}

ModelConfig toy(Arch arch, std::size_t size, std::size_t patch, std::size_t channels = 1) {
    ModelConfig c;
    c.arch = arch;
    c.patch_size = patch;
    c.depth = arch == Arch::spectral_mlp ? 2 : 1;
    c.dim = 8;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.input_channels = channels;
    c.bins = 8;
    c.input_height = size;
    c.input_width = size;
    return c;
}

Model randomized(const ModelConfig& c, std::uint64_t seed) {
    Model m = build(c, seed);
    Rng rng(seed + 1);
    for (double& v : m.parameters()) v = 0.3 * rng.normal();
    return m;
}

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("fdiag-acceptance-" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int cli_run(std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "fdiag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, errs;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, errs);
    if (err) *err = errs.str();
    return code;
}

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

void fft_correctness(Verdict& v) {
    double dft_err = 0.0, trip_err = 0.0, parseval_err = 0.0;
    std::uint64_t seed = 1;
    for (std::size_t h = 2; h <= 16; ++h) {
        for (std::size_t w = 2; w <= 16; ++w) {
            const ImageTensor img = oracle::random_image(h, w, 1, seed++);
            dft_err = std::max(dft_err, max_abs(fft2(img).data, oracle::dft2(img)));
        }
    }
    for (std::size_t h = 2; h <= 64; h += (h < 16 ? 1 : 3)) {
        for (std::size_t w = 2; w <= 64; w += (w < 16 ? 1 : 3)) {
            const ImageTensor img = oracle::random_image(h, w, 1, seed++);
            const Spectrum s = fft2(img);
            trip_err = std::max(trip_err, max_abs(ifft2(s).image, img));
            double spec = 0.0;
            for (const cplx& z : s.data) spec += std::norm(z);
            const double space = sum_squares(img);
            parseval_err = std::max(parseval_err, std::abs(spec / static_cast<double>(h * w) - space) / space);
        }
    }
    for (std::size_t n : {64, 63, 60, 61}) {
        const ImageTensor img = oracle::random_image(n, n, 1, seed++);
        trip_err = std::max(trip_err, max_abs(ifft2(fft2(img)).image, img));
    }
    v.require(dft_err < 1e-9, "DFT mismatch " + num(dft_err));
    v.require(trip_err < 1e-9, "round trip " + num(trip_err));
    v.require(parseval_err < 1e-9, "Parseval " + num(parseval_err));
    v.note("all shapes 2..16 (9x7 included): dft " + num(dft_err) + ", round trip " + num(trip_err) + ", parseval " + num(parseval_err));
}

void eq2_identities(Verdict& v) {
    double empty_err = 0.0, full_err = 0.0, sigma0_err = 0.0, leak = 0.0;
    std::uint64_t seed = 500;
    const std::pair<std::size_t, std::size_t> shapes[] = {{32, 32}, {24, 40}, {17, 31}, {64, 48}};
    const std::pair<double, double> rings[] = {{0.0, 0.1}, {0.2, 0.35}, {0.5, 0.75}, {0.9, 1.0}, {0.3, kFullBand}};
    for (auto [h, w] : shapes) {
        const ImageTensor img = oracle::random_image(h, w, 3, seed++);
        for (double l : {0.0, 0.25, 0.6, 1.0}) {
            empty_err = std::max(empty_err, max_abs(mask_image(img, l, l), img));
            sigma0_err = std::max(sigma0_err, max_abs(noise_image(img, l, l + 0.2, 0.0, seed), img));
        }
        double peak = 0.0;
        for (double x : mask_image(img, 0.0, kFullBand).data) peak = std::max(peak, std::abs(x));
        full_err = std::max(full_err, peak);

        for (auto [l, r] : rings) {
            ImageTensor delta = noise_image(img, l, r, 0.5, seed++);
            for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] -= img.data[i];
            const Spectrum s = fft2(delta);
            const RingMask m = ring_mask(h, w, l, r);
            double inside = 0.0, outside = 0.0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                for (std::size_t i = 0; i < h * w; ++i) {
                    const double p = std::norm(s.data[c * h * w + i]);
                    (m.data[i] != 0 ? inside : outside) += p;
                }
            }
            if (inside > 0.0) leak = std::max(leak, outside / (inside + outside));
        }
    }
    v.require(empty_err < 1e-9, "empty ring " + num(empty_err));
    v.require(full_err < 1e-9, "full ring " + num(full_err));
    v.require(sigma0_err < 1e-9, "sigma 0 " + num(sigma0_err));
    v.require(leak < 1e-9, "leakage " + num(leak));
    v.note("empty " + num(empty_err) + ", full " + num(full_err) + ", sigma0 " + num(sigma0_err) + ", leakage " +
           num(leak));
}

void reduced_spectrum_properties(Verdict& v) {
    double shift_err = 0.0, scale_err = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const ImageTensor img = oracle::random_image(32, 48, 1, 900 + s);
        const ReducedSpectrum base = reduced_spectrum(img, 16);
        const ReducedSpectrum moved = reduced_spectrum(roll(img, 5 + s, 11 + 2 * s), 16);
        ImageTensor scaled = img;
        const double a = 0.5 + 0.3 * static_cast<double>(s);
        for (double& x : scaled.data) x *= a;
        const ReducedSpectrum sc = reduced_spectrum(scaled, 16);
        for (std::size_t k = 0; k < 16; ++k) {
            const double ref = std::max(base.values[k], 1e-300);
            shift_err = std::max(shift_err, std::abs(moved.values[k] - base.values[k]) / ref);
            scale_err = std::max(scale_err, std::abs(sc.values[k] - a * a * base.values[k]) / (a * a * ref));
        }
    }
    constexpr std::size_t kImages = 400, kSize = 64, kBins = 32;
    constexpr double kTolerance = 0.25;
    const double q999 = oracle::white_noise_deviation_quantile(kSize, kSize, kBins, kImages, 400, 0.999);
    std::vector<ImageTensor> noise;
    for (std::size_t i = 0; i < kImages; ++i) noise.push_back(oracle::gaussian_noise(kSize, kSize, 1000 + i));
    const double dev = oracle::max_rel_deviation_from_mean(mean_profile(noise, kBins).mean);
    v.require(shift_err < 1e-9, "translation " + num(shift_err));
    v.require(scale_err < 1e-9, "scaling " + num(scale_err));
    v.require(q999 < kTolerance, "tolerance below sampling spread");
    v.require(dev < kTolerance, "white noise deviation " + num(dev));
    v.note("translation " + num(shift_err) + ", scaling " + num(scale_err) + ", white-noise dev " + num(dev) +
           " (tol " + num(kTolerance) + ", MC q99.9 " + num(q999) + ")");
}

void gradient_checks(Verdict& v) {
    ModelConfig logmag = toy(Arch::specformer, 8, 4);
    logmag.spectral_feature = SpectralFeature::log_magnitude;
    ModelConfig dual = toy(Arch::dualformer, 8, 4, 3);
    dual.spatial_patch_size = 2;
    ModelConfig deep = toy(Arch::spatformer, 8, 4);
    deep.depth = 2;
    const std::pair<const char*, ModelConfig> cases[] = {
        {"spectral-mlp", toy(Arch::spectral_mlp, 16, 4)}, {"spatformer", deep},
        {"specformer", toy(Arch::specformer, 8, 4)},      {"specformer/log-mag", logmag},
        {"dualformer", dual},
    };
    for (const auto& [name, cfg] : cases) {
        const Model m = randomized(cfg, 7);
        std::vector<ImageTensor> imgs;
        for (std::uint64_t i = 0; i < 3; ++i)
            imgs.push_back(oracle::random_image(cfg.input_height, cfg.input_width, cfg.input_channels, 90 + i));
        const std::vector<int> labels{1, 0, 1};
        const GradCheckReport r = gradcheck(m, imgs, labels, 1e-5);
        v.require(r.checked == m.parameters().size(), std::string(name) + " skipped parameters");
        v.require(r.max_rel_error < 1e-4, std::string(name) + " error " + num(r.max_rel_error) + " in " + r.worst_block);
        v.note(std::string(name) + " " + num(r.max_rel_error) + " over " + std::to_string(r.checked));
    }
}

void dualformer_averaging(Verdict& v) {
    Rng rng(77);
    std::size_t exact = 0, standalone = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        ModelConfig dual = toy(Arch::dualformer, 16, std::size_t{2} << rng.below(3), 1 + 2 * rng.below(2));
        dual.spatial_patch_size = std::size_t{2} << rng.below(3);
        dual.depth = 1 + rng.below(2);
        const Model m = randomized(dual, 3000 + trial);
        const ImageTensor img = oracle::random_image(16, 16, dual.input_channels, 4000 + trial);
        const BranchScores br = forward_branches(m, img);
        if (forward(m, img) == (br.spatial + br.spectral) / 2.0) ++exact;

        // The branch scores themselves must be those of standalone models carrying the same weights.
        ModelConfig spat = dual, spec = dual;
        spat.arch = Arch::spatformer;
        spat.patch_size = dual.spatial_patch_size;
        spat.spatial_patch_size = 0;
        spec.arch = Arch::specformer;
        spec.spatial_patch_size = 0;
        Model ms = build(spat, 0), mf = build(spec, 0);
        for (Model* part : {&ms, &mf}) {
            for (const auto& b : part->layout()) {
                const auto src = m.block(b.name);
                std::copy(src.begin(), src.end(), part->block(b.name).begin());
            }
        }
        if (br.spatial == forward(ms, img) && br.spectral == forward(mf, img)) ++standalone;
    }
    v.require(exact == 100, std::to_string(100 - exact) + " inexact means");
    v.require(standalone == 100, std::to_string(100 - standalone) + " branch mismatches");
    v.note(std::to_string(exact) + "/100 exact, " + std::to_string(standalone) + "/100 branches match standalone");
}

void profiling_anchor(Verdict& v) {
    ModelConfig c;  // specformer, depth 10, dim 96, patch 32, 3 channels, 256x256
    const Profile p = profile(c, 256, 256);
    const double rel = (static_cast<double>(p.params) - 2.2e6) / 2.2e6;
    v.require(std::abs(rel) <= 0.25, "params " + std::to_string(p.params));
    v.require(p.params == parameter_count(c) && p.params == build(c, 0).parameters().size(),
              "profile disagrees with the built model");
    bool monotone = true;
    Profile prev{};
    for (std::size_t d = 1; d <= 12; ++d) {
        c.depth = d;
        const Profile q = profile(c, 256, 256);
        monotone = monotone && std::isfinite(q.flops) && std::isfinite(q.activations) && q.flops > prev.flops &&
                   q.activations > prev.activations;
        prev = q;
    }
    v.require(monotone, "flops/activations not finite and increasing in depth");
    ModelConfig t = toy(Arch::specformer, 16, 4);
    const Profile a = profile(t, 8, 16), b = profile(t, 16, 16);
    const double ratio = b.attention_score_flops / a.attention_score_flops;
    v.require(ratio == 4.0, "attention ratio " + num(ratio));
    v.note("params " + std::to_string(p.params) + " (" + num(100.0 * rel) + "% vs 2.2M), flops " + num(p.flops) +
           ", attention x" + num(ratio) + " on token doubling");
}

void fig3_properties(Verdict& v) {
    const RealFakeSet task = make_blur_task(100, 64, 7, 1);
    for (const Arch arch : {Arch::spectral_mlp, Arch::specformer}) {
        ModelConfig c;
        c.arch = arch;
        c.input_channels = 1;
        c.input_height = c.input_width = 64;
        c.depth = 2;
        c.dim = 32;
        c.heads = 4;
        c.patch_size = 32;
        c.bins = 32;
        TrainConfig tc;
        tc.steps = 500;
        tc.batch = 16;
        tc.seed = 3;
        tc.lr = arch == Arch::specformer ? 1e-2 : 1e-3;
        const TrainResult tr = train(build(c, 1), task.real, task.fake, tc);
        const double acc = accuracy(tr.model, task.real, task.fake);
        ModelScorer scorer(tr.model);
        SweepOptions o;
        o.k = 20;
        o.seed = 5;
        const ProbeCurve pc = sweep(scorer, task.real, o);

        const std::string name = to_string(arch);
        const std::size_t quarter = pc.size() / 4;
        double top = 0.0;
        for (std::size_t i = pc.size() - quarter; i < pc.size(); ++i) top += pc.d_noise[i];
        top /= static_cast<double>(quarter);
        std::string low_failures;
        for (std::size_t i = 0; i < quarter; ++i) {
            if (pc.d_mask[i] < -pc.std_mask[i]) {
                low_failures += " ring " + std::to_string(i) + " d_mask " + num(pc.d_mask[i]) + " < -" + num(pc.std_mask[i]);
            }
        }
        v.require(acc > 0.9, name + " accuracy " + num(acc));
        if (arch == Arch::specformer) v.require(top < 0.0, name + " top-quartile d_noise " + num(top));
        v.require(low_failures.empty(), name + " low-ring masking detected:" + low_failures);
        v.note(name + " acc " + num(acc) + ", top-quartile d_noise " + num(top));
    }
}

void patch_sweep_shape(Verdict& v) {
    Sandbox s;
    std::string err;
    const int code = cli_run({"patch-sweep", "real=synth:blur-real:16:64", "fake=synth:blur-fake:16:64", "depth=1",
                              "dim=16", "heads=2", "steps=40", "lr=0.01", "--k", "10", "--out", s / "sweep"},
                             &err);
    v.require(code == 0, "exit " + std::to_string(code) + " " + err);
    if (code != 0) return;
    for (const char* p : {"8", "16", "32", "64"}) {
        std::ifstream is(s / (std::string("sweep/probe_p") + p + ".csv"));
        const ProbeCurve c = read_probe_csv(is);
        bool finite = c.size() == 10;
        for (std::size_t i = 0; i < c.size(); ++i)
            finite = finite && std::isfinite(c.d_mask[i]) && std::isfinite(c.d_noise[i]);
        v.require(finite, std::string("patch ") + p + " probe curve invalid");
    }
    std::istringstream summary(slurp(s / "sweep/patch_sweep.csv"));
    std::string line;
    std::getline(summary, line);
    std::size_t rows = 0;
    while (std::getline(summary, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        const double r1 = std::stod(f.at(2)), r2 = std::stod(f.at(3));
        v.require(0.0 <= r1 && r1 <= r2 && r2 <= 1.0, "patch " + f[0] + " bounds " + num(r1) + ", " + num(r2));
        v.note("p" + f[0] + " r1 " + num(r1) + " r2 " + num(r2));
        ++rows;
    }
    v.require(rows == 4, std::to_string(rows) + " summary rows");
}

void correlation_oracles(Verdict& v) {
    Rng rng(2025);
    double krcc_err = 0.0, srcc_err = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(50), b(50);
        for (std::size_t i = 0; i < 50; ++i) {
            a[i] = static_cast<double>(rng.below(12));  // coarse values force ties
            b[i] = t % 2 ? static_cast<double>(rng.below(20)) : a[i] + rng.normal();
        }
        const Correlations c = correlations(a, b);
        krcc_err = std::max(krcc_err, std::abs(*c.krcc - oracle::kendall_pairs(a, b)));
        srcc_err = std::max(srcc_err,
                            std::abs(*c.srcc - oracle::naive_pearson(oracle::naive_ranks(a), oracle::naive_ranks(b))));
    }
    v.require(krcc_err < 1e-12, "krcc " + num(krcc_err));
    v.require(srcc_err < 1e-12, "srcc " + num(srcc_err));
    v.note("krcc " + num(krcc_err) + ", srcc " + num(srcc_err));
}

void cli_determinism(Verdict& v) {
    Sandbox s;
    save_png(s / "in.png", oracle::random_image(32, 32, 1, 3));
    const std::vector<std::vector<std::string>> runs = {
        {"spectrum-stats", "data=synth:texture:6:32", "--bins", "16"},
        {"perturb", "image=" + (s / "in.png"), "op=noise", "--l", "0.2", "--r", "0.6"},
        {"train", "real=synth:blur-real:8:32", "fake=synth:blur-fake:8:32", "patch=16", "depth=1", "dim=8", "steps=15"},
        {"probe", "data=synth:texture:4:32", "patch=16", "depth=1", "dim=8", "--k", "5", "--seed", "9"},
        {"gradcheck", "arch=specformer", "patch=4", "depth=1", "dim=4", "heads=2", "coords=30"},
    };
    std::size_t files = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::string first = s / ("a" + std::to_string(i)), second = s / ("b" + std::to_string(i));
        auto args = runs[i];
        args.insert(args.end(), {"--out", first});
        v.require(cli_run(args) == 0, runs[i][0] + " failed");
        args.back() = second;
        v.require(cli_run(args) == 0, runs[i][0] + " failed on repeat");
        for (const auto& entry : fs::directory_iterator(first)) {
            const fs::path twin = fs::path(second) / entry.path().filename();
            v.require(slurp(entry.path()) == slurp(twin), runs[i][0] + " " + entry.path().filename().string() + " differs");
            ++files;
        }
    }
    v.note(std::to_string(files) + " artifacts across " + std::to_string(runs.size()) + " commands identical");
}

}  // namespace

int main() {
    criterion("fft-correctness", fft_correctness, 10.0);
    criterion("eq2-identities", eq2_identities, 5.0);
    criterion("reduced-spectrum", reduced_spectrum_properties);
    criterion("gradient-checks", gradient_checks, 60.0);
    criterion("dualformer-averaging", dualformer_averaging);
    criterion("profiling-anchor", profiling_anchor);
    criterion("fig3-properties", fig3_properties, 600.0);
    criterion("patch-sweep", patch_sweep_shape);
    criterion("correlation-oracles", correlation_oracles);
    criterion("cli-determinism", cli_determinism);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
