#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fdiag/perturb.hpp"
#include "fdiag/probe.hpp"
#include "fdiag/synth.hpp"
#include "oracles.hpp"

using namespace fdiag;
using namespace std::chrono_literals;

namespace {

const std::string kMock = FDIAG_MOCK_SCORER;

// a·inner + c, counting calls.
class Affine : public Scorer {
public:
    Affine(Scorer& inner, double a, double c) : inner_(inner), a_(a), c_(c) {}
    double score(const ImageTensor& img) override {
        ++calls;
        return a_ * inner_.score(img) + c_;
    }
    std::string name() const override { return "affine"; }
    std::atomic<std::size_t> calls{0};

private:
    Scorer& inner_;
    double a_, c_;
};

class FailsOn : public Scorer {
public:
    explicit FailsOn(double bad_value) : bad_(bad_value) {}
    double score(const ImageTensor& img) override {
        if (img.data[0] == bad_) throw std::runtime_error("boom");
        return 0.0;
    }
    std::string name() const override { return "fails"; }

private:
    double bad_;
};

std::vector<ImageTensor> textures(std::size_t n, std::size_t size, std::uint64_t seed) {
    std::vector<ImageTensor> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(power_law_texture(size, 1.0, seed + i));
    return out;
}

bool same_curve(const ProbeCurve& a, const ProbeCurve& b) {
    return a.d_mask == b.d_mask && a.d_noise == b.d_noise && a.std_mask == b.std_mask && a.std_noise == b.std_noise;
}

// Runs the mock as a TCP server and reports the port it bound.
struct TcpMock {
    FILE* pipe = nullptr;
    int port = 0;
    explicit TcpMock(const std::string& mode) {
        pipe = ::popen((kMock + " --mode " + mode + " --tcp 0").c_str(), "r");
        REQUIRE(pipe != nullptr);
        REQUIRE(std::fscanf(pipe, "%d", &port) == 1);
    }
    ~TcpMock() { ::pclose(pipe); }
};

}  // namespace

TEST_CASE("sweep intervals partition [0,1]") {
    const auto iv = sweep_intervals(4);
    REQUIRE(iv.size() == 4);
    CHECK(iv.front().l == 0.0);
    CHECK(iv.back().r == 1.0);
    for (std::size_t i = 1; i < 4; ++i) CHECK(iv[i].l == iv[i - 1].r);
    CHECK_THROWS_AS(sweep_intervals(1), InvalidInput);
}

TEST_CASE("constant scorer gives zero curves") {
    AnalyticScorer c("constant=2.5");
    const auto imgs = textures(3, 16, 1);
    const ProbeCurve curve = sweep(c, imgs, {.k = 5, .seed = 3});
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(curve.d_mask[i] == 0.0);
        CHECK(curve.d_noise[i] == 0.0);
    }
    CHECK(curve.n_images == 3);
    CHECK_FALSE(curve.nondeterministic_scorer);
}

TEST_CASE("high-frequency energy scorer responds only above radius 0.5") {
    AnalyticScorer hf("hf-energy");
    const auto imgs = textures(4, 32, 10);
    const ProbeCurve curve = sweep(hf, imgs, {.k = 10, .seed = 1});
    double scale = 0.0;
    for (const auto& img : imgs) scale = std::max(scale, std::abs(hf.score(img)));
    for (std::size_t i = 0; i < 10; ++i) {
        CAPTURE(i);
        if (curve.intervals[i].l >= 0.5 - 1e-12) {
            CHECK(curve.d_mask[i] > 0.0);
            CHECK(curve.d_noise[i] < 0.0);
        } else {
            CHECK(std::abs(curve.d_mask[i]) < 1e-9 * scale);
        }
    }
}

TEST_CASE("the scorer is called (2k+1)n times and workers do not change the result") {
    AnalyticScorer hf("hf-energy");
    Affine counted(hf, 1.0, 0.0);
    const auto imgs = textures(5, 16, 20);
    const ProbeCurve one = sweep(counted, imgs, {.k = 6, .seed = 9, .workers = 1});
    CHECK(counted.calls == (2 * 6 + 1) * 5);
    const ProbeCurve many = sweep(counted, imgs, {.k = 6, .seed = 9, .workers = 4});
    CHECK(same_curve(one, many));
}

TEST_CASE("curves do not depend on dataset order") {
    AnalyticScorer hf("hf-energy");
    auto imgs = textures(6, 16, 30);
    const ProbeCurve a = sweep(hf, imgs, {.k = 4, .seed = 2});
    std::reverse(imgs.begin(), imgs.end());
    std::swap(imgs[1], imgs[4]);
    CHECK(same_curve(a, sweep(hf, imgs, {.k = 4, .seed = 2})));
}

TEST_CASE("offset and scale of the scorer") {
    AnalyticScorer hf("hf-energy");
    const auto imgs = textures(3, 16, 40);
    const SweepOptions opt{.k = 5, .seed = 4};
    const ProbeCurve base = sweep(hf, imgs, opt);

    Affine shifted(hf, 1.0, 17.0);
    const ProbeCurve s = sweep(shifted, imgs, opt);
    Affine scaled(hf, 4.0, 0.0);
    const ProbeCurve x4 = sweep(scaled, imgs, opt);
    Affine odd(hf, 3.7, 0.0);
    const ProbeCurve x37 = sweep(odd, imgs, opt);
    double scale = 0.0;
    for (const auto& img : imgs) scale = std::max(scale, std::abs(hf.score(img)));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(s.d_mask[i] - base.d_mask[i]) < 1e-12);
        CHECK(std::abs(s.d_noise[i] - base.d_noise[i]) < 1e-12);
        CHECK(x4.d_mask[i] == 4.0 * base.d_mask[i]);
        CHECK(x4.d_noise[i] == 4.0 * base.d_noise[i]);
        CHECK(std::abs(x37.d_noise[i] - 3.7 * base.d_noise[i]) <= 1e-12 * scale);
        if (std::abs(base.d_noise[i]) > 1e-9 * scale) CHECK((x37.d_noise[i] < 0) == (base.d_noise[i] < 0));
    }
}

TEST_CASE("an empty ring changes no score") {
    AnalyticScorer hf("hf-energy");
    for (const auto& img : textures(3, 16, 50)) {
        for (double l : {0.0, 0.3, 0.99}) CHECK(hf.score(mask_image(img, l, l)) - hf.score(img) == 0.0);
    }
}

TEST_CASE("scorer failures name the image") {
    std::vector<ImageTensor> imgs{ImageTensor(8, 8, 1, 0.1), ImageTensor(8, 8, 1, 0.2), ImageTensor(8, 8, 1, 0.7)};
    FailsOn bad(0.7);
    try {
        score_dataset(bad, imgs);
        FAIL("expected ProbeError");
    } catch (const ProbeError& e) {
        CHECK(e.image_index == 2);
    }
    CHECK_THROWS_AS(sweep(bad, std::span<const ImageTensor>{}, {}), InvalidInput);
}

TEST_CASE("score_dataset") {
    AnalyticScorer mean("mean");
    const std::vector<ImageTensor> three{ImageTensor(4, 4, 1, 0.2), ImageTensor(4, 4, 1, 0.4), ImageTensor(4, 4, 1, 0.6)};
    const MeanStd ms = score_dataset(mean, three);
    CHECK(ms.mean == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(ms.std == doctest::Approx(std::sqrt(0.08 / 3.0)).epsilon(1e-12));

    const ImageTensor single(4, 4, 1, 0.3);
    const MeanStd one = score_dataset(mean, std::vector<ImageTensor>{single});
    CHECK(one.mean == mean.score(single));
    CHECK(one.std == 0.0);
    AnalyticScorer c("constant=-1.5");
    const MeanStd cs = score_dataset(c, three);
    CHECK(cs.mean == -1.5);
    CHECK(cs.std == 0.0);
    CHECK_THROWS_AS(AnalyticScorer("median"), InvalidInput);
}

TEST_CASE("probe CSV round trip") {
    AnalyticScorer hf("hf-energy");
    const ProbeCurve c = sweep(hf, textures(2, 16, 60), {.k = 4, .seed = 1});
    std::stringstream ss;
    write_probe_csv(ss, c);
    CHECK(ss.str().rfind("l,r,d_mask_mean,d_mask_std,d_noise_mean,d_noise_std,n\n", 0) == 0);
    const ProbeCurve back = read_probe_csv(ss);
    CHECK(same_curve(c, back));
    CHECK(back.n_images == 2);
}

TEST_CASE("external scorer over stdio") {
    auto echo = make_scorer("exec:" + kMock + " --mode echo");
    CHECK(echo->name() == "mock-echo");
    CHECK(echo->score(oracle::random_image(8, 8, 1, 1)) == 0.0);

    auto mean = make_scorer("exec:" + kMock + " --mode mean");
    CHECK(std::abs(mean->score(ImageTensor(16, 16, 1, 0.25)) - 0.25) < 1e-9);
    const ImageTensor rgb = oracle::random_image(6, 10, 3, 2);
    CHECK(mean->score(rgb) == fdiag::mean(rgb));
}

TEST_CASE("external scorer over tcp") {
    TcpMock server("mean");
    auto s = make_scorer("tcp:127.0.0.1:" + std::to_string(server.port));
    CHECK(std::abs(s->score(ImageTensor(8, 8, 1, 0.25)) - 0.25) < 1e-9);
    CHECK(s->score(ImageTensor(8, 8, 1, 0.5)) == 0.5);
}

TEST_CASE("external failures are typed") {
    const ImageTensor img(8, 8, 1, 0.5);
    CHECK_THROWS_AS(make_scorer("exec:" + kMock + " --mode error")->score(img), ScorerProtocolError);
    CHECK_THROWS_AS(make_scorer("exec:" + kMock + " --mode garbage")->score(img), ScorerProtocolError);
    CHECK_THROWS_AS(make_scorer("exec:" + kMock + " --mode nan")->score(img), ScorerProtocolError);
    CHECK_THROWS_AS(make_scorer("exec:" + kMock + " --mode badhello"), ScorerProtocolError);
    CHECK_THROWS_AS(make_scorer("exec:/nonexistent/scorer-binary"), ScorerTransportError);

    ExternalOptions quick;
    quick.timeout = 300ms;
    auto hang = make_scorer("exec:" + kMock + " --mode hang", quick);
    CHECK_THROWS_AS(hang->score(img), ScorerTransportError);

    // Port 1 on loopback is essentially never listening.
    CHECK_THROWS_AS(make_scorer("tcp:127.0.0.1:1"), ScorerTransportError);
    CHECK_THROWS_AS(make_scorer("tcp:127.0.0.1:notaport"), InvalidInput);
    CHECK_THROWS_AS(make_scorer("bogus:thing"), InvalidInput);
}

TEST_CASE("nondeterministic endpoints are flagged in the curve") {
    ExternalOptions opts;
    opts.deterministic = false;
    opts.repeats = 3;
    auto s = make_scorer("exec:" + kMock + " --mode mean", opts);
    const ProbeCurve c = sweep(*s, std::vector<ImageTensor>{ImageTensor(8, 8, 1, 0.5)}, {.k = 2, .seed = 1});
    CHECK(c.nondeterministic_scorer);
    CHECK(std::abs(c.d_mask[0] + 0.5) < 1e-9);  // removing DC drops the mean to 0
}

TEST_CASE("a model served externally probes like the in-process model") {
    namespace fs = std::filesystem;
    const fs::path ckpt = fs::temp_directory_path() / ("fdiag-probe-model-" + std::to_string(::getpid()) + ".ckpt");
    ModelConfig cfg;
    cfg.arch = Arch::specformer;
    cfg.patch_size = 8;
    cfg.depth = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.input_channels = 1;
    cfg.input_height = cfg.input_width = 16;
    Model m = build(cfg, 5);
    Rng rng(6);
    for (double& v : m.parameters()) v = 0.2 * rng.normal();
    save_checkpoint(ckpt, m);

    const auto imgs = textures(3, 16, 70);
    const SweepOptions opt{.k = 4, .seed = 8};
    auto local = make_scorer("model:" + ckpt.string());
    auto remote = make_scorer("exec:" + kMock + " --mode model=" + ckpt.string());
    const ProbeCurve a = sweep(*local, imgs, opt), b = sweep(*remote, imgs, opt);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(a.d_mask[i] - b.d_mask[i]) < 1e-6);
        CHECK(std::abs(a.d_noise[i] - b.d_noise[i]) < 1e-6);
    }
    fs::remove(ckpt);
}
