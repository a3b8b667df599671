#include "fdiag/probe.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdiag/fft.hpp"
#include "fdiag/parallel.hpp"
#include "fdiag/perturb.hpp"
#include "fdiag/rng.hpp"

namespace fdiag {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double checked_score(Scorer& scorer, const ImageTensor& image, std::size_t index) {
    double s;
    try {
        s = scorer.score(image);
    } catch (const std::exception& e) {
        throw ProbeError("scorer " + scorer.name() + " failed on image " + std::to_string(index) + ": " + e.what(),
                         index);
    }
    if (!std::isfinite(s)) {
        throw ProbeError("scorer " + scorer.name() + " returned a non-finite score on image " + std::to_string(index),
                         index);
    }
    return s;
}

std::size_t effective_workers(const Scorer& scorer, std::size_t workers) {
    return scorer.concurrent() ? workers : 1;
}

}  // namespace

AnalyticScorer::AnalyticScorer(const std::string& spec) : spec_(spec) {
    if (spec == "mean") {
        kind_ = Kind::mean;
    } else if (spec == "hf-energy") {
        kind_ = Kind::hf_energy;
    } else if (spec == "constant" || spec.rfind("constant=", 0) == 0) {
        kind_ = Kind::constant;
        if (spec.size() > 9) {
            try {
                constant_ = std::stod(spec.substr(9));
            } catch (const std::logic_error&) {
                throw InvalidInput("bad constant in analytic scorer '" + spec + "'");
            }
        }
    } else {
        throw InvalidInput("unknown analytic scorer '" + spec + "' (constant[=c], mean, hf-energy)");
    }
}

double AnalyticScorer::score(const ImageTensor& image) {
    switch (kind_) {
        case Kind::constant: return constant_;
        case Kind::mean: return mean(image);
        case Kind::hf_energy: {
            const Spectrum s = fft2(image);
            double p = 0.0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                for (std::size_t y = 0; y < s.height; ++y) {
                    for (std::size_t x = 0; x < s.width; ++x) {
                        if (s.norm_radius(y, x) >= 0.5) p += std::norm(s.at(c, y, x));
                    }
                }
            }
            return -p / static_cast<double>(image.pixels());
        }
    }
    return 0.0;
}

ModelScorer::ModelScorer(Model model, std::string name) : model_(std::move(model)), name_(std::move(name)) {}

std::unique_ptr<Scorer> make_scorer(const std::string& spec, const ExternalOptions& options) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw InvalidInput("scorer spec needs a kind prefix: " + spec);
    const std::string kind = spec.substr(0, colon), rest = spec.substr(colon + 1);
    if (kind == "analytic") return std::make_unique<AnalyticScorer>(rest);
    if (kind == "model") return std::make_unique<ModelScorer>(load_checkpoint(rest), "model:" + rest);
    if (kind == "exec") return ExternalScorer::spawn(rest, options);
    if (kind == "tcp") {
        const auto c2 = rest.rfind(':');
        if (c2 == std::string::npos) throw InvalidInput("tcp scorer needs HOST:PORT");
        int port = 0;
        try {
            port = std::stoi(rest.substr(c2 + 1));
        } catch (const std::logic_error&) {
            throw InvalidInput("bad tcp port in " + spec);
        }
        if (port <= 0 || port > 65535) throw InvalidInput("bad tcp port in " + spec);
        return ExternalScorer::connect(rest.substr(0, c2), static_cast<std::uint16_t>(port), options);
    }
    throw InvalidInput("unknown scorer kind '" + kind + "' (model, analytic, exec, tcp)");
}

std::vector<Interval> sweep_intervals(std::size_t k) {
    if (k < 2) throw InvalidInput("sweep needs at least 2 intervals");
    std::vector<Interval> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = {static_cast<double>(i) / static_cast<double>(k), static_cast<double>(i + 1) / static_cast<double>(k)};
    }
    return out;
}

std::uint64_t content_seed(std::uint64_t seed, const ImageTensor& image) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](std::uint64_t v) { h = splitmix64(h ^ v); };
    mix(image.height);
    mix(image.width);
    mix(image.channels);
    for (double v : image.data) mix(std::bit_cast<std::uint64_t>(v));
    return image_seed(seed, h);
}

ProbeCurve sweep(Scorer& scorer, std::span<const ImageTensor> images, const SweepOptions& options) {
    if (images.empty()) throw InvalidInput("sweep needs a nonempty dataset");
    const auto intervals = sweep_intervals(options.k);
    const std::size_t k = options.k, n = images.size();
    // dm[i*k + ring], dn[i*k + ring]
    std::vector<double> dm(n * k), dn(n * k);
    parallel_for(n, effective_workers(scorer, options.workers), [&](std::size_t i) {
        const ImageTensor& img = images[i];
        validate(img);
        const double clean = checked_score(scorer, img, i);
        const double sigma = options.sigma < 0.0 ? default_noise_sigma(img) : options.sigma;
        const std::uint64_t seed = content_seed(options.seed, img);
        for (std::size_t ring = 0; ring < k; ++ring) {
            const double l = intervals[ring].l;
            const double r = ring + 1 == k ? kFullBand : intervals[ring].r;
            dm[i * k + ring] = checked_score(scorer, mask_image(img, l, r), i) - clean;
            dn[i * k + ring] = checked_score(scorer, noise_image(img, l, r, sigma, seed), i) - clean;
        }
    });
    ProbeCurve curve;
    curve.intervals = intervals;
    curve.n_images = n;
    curve.sigma = options.sigma;
    curve.seed = options.seed;
    curve.nondeterministic_scorer = !scorer.deterministic();
    std::vector<double> col(n);
    for (std::size_t ring = 0; ring < k; ++ring) {
        for (std::size_t i = 0; i < n; ++i) col[i] = dm[i * k + ring];
        const MeanStd m = order_free_mean_std(col);
        for (std::size_t i = 0; i < n; ++i) col[i] = dn[i * k + ring];
        const MeanStd z = order_free_mean_std(col);
        curve.d_mask.push_back(m.mean);
        curve.std_mask.push_back(m.std);
        curve.d_noise.push_back(z.mean);
        curve.std_noise.push_back(z.std);
    }
    return curve;
}

MeanStd score_dataset(Scorer& scorer, std::span<const ImageTensor> images, std::size_t workers) {
    if (images.empty()) throw InvalidInput("scoring needs a nonempty dataset");
    std::vector<double> scores(images.size());
    parallel_for(images.size(), effective_workers(scorer, workers),
                 [&](std::size_t i) { scores[i] = checked_score(scorer, images[i], i); });
    return order_free_mean_std(std::move(scores));
}

void write_probe_csv(std::ostream& os, const ProbeCurve& c) {
    os << "l,r,d_mask_mean,d_mask_std,d_noise_mean,d_noise_std,n\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        os << fmt17(c.intervals[i].l) << ',' << fmt17(c.intervals[i].r) << ',' << fmt17(c.d_mask[i]) << ','
           << fmt17(c.std_mask[i]) << ',' << fmt17(c.d_noise[i]) << ',' << fmt17(c.std_noise[i]) << ',' << c.n_images
           << '\n';
    }
}

ProbeCurve read_probe_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("l,r,d_mask_mean,d_mask_std,d_noise_mean,d_noise_std,n", 0) != 0) {
        throw InvalidInput("probe CSV must start with header l,r,d_mask_mean,d_mask_std,d_noise_mean,d_noise_std,n");
    }
    ProbeCurve c;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        std::string f[7];
        for (auto& s : f) {
            if (!std::getline(ss, s, ',')) throw InvalidInput("probe CSV row needs 7 fields: " + line);
        }
        try {
            c.intervals.push_back({std::stod(f[0]), std::stod(f[1])});
            c.d_mask.push_back(std::stod(f[2]));
            c.std_mask.push_back(std::stod(f[3]));
            c.d_noise.push_back(std::stod(f[4]));
            c.std_noise.push_back(std::stod(f[5]));
            c.n_images = static_cast<std::size_t>(std::stoull(f[6]));
        } catch (const std::logic_error&) {
            throw InvalidInput("malformed probe CSV row: " + line);
        }
    }
    if (c.intervals.empty()) throw InvalidInput("probe CSV has no rows");
    return c;
}

}  // namespace fdiag
