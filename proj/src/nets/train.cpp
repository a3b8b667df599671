#include <algorithm>
#include <cmath>

#include "evaluate.hpp"
#include "fdiag/parallel.hpp"
#include "fdiag/rng.hpp"

namespace fdiag {

namespace {

double bce_with_logits(double z, int label) {
    return std::max(z, 0.0) - z * static_cast<double>(label) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_batch(std::span<const ImageTensor> images, std::span<const int> labels) {
    if (images.empty()) throw InvalidInput("batch is empty");
    if (images.size() != labels.size()) throw InvalidInput("batch images and labels differ in length");
    for (int y : labels) {
        if (y != 0 && y != 1) throw InvalidInput("labels must be 0 or 1");
    }
}

// Per-example gradients land in private buffers and are summed in index order, so
// the result is independent of the worker count.
LossGradient batch_gradient(const detail::Evaluator& ev, std::span<const double> params,
                            std::span<const ImageTensor> images, std::span<const int> labels, std::size_t workers) {
    check_batch(images, labels);
    const std::size_t n = images.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    LossGradient out{0.0, std::vector<double>(params.size(), 0.0)};
    const std::size_t wave = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<std::vector<double>> bufs(wave, std::vector<double>(params.size()));
    std::vector<double> losses(n);
    for (std::size_t start = 0; start < n; start += wave) {
        const std::size_t count = std::min(wave, n - start);
        parallel_for(count, wave, [&](std::size_t k) {
            const std::size_t i = start + k;
            auto& g = bufs[k];
            std::fill(g.begin(), g.end(), 0.0);
            ev.run(params, images[i], g, [&](double z) {
                losses[i] = bce_with_logits(z, labels[i]);
                return (sigmoid(z) - static_cast<double>(labels[i])) * inv_n;
            });
        });
        for (std::size_t k = 0; k < count; ++k) {
            for (std::size_t j = 0; j < params.size(); ++j) out.gradient[j] += bufs[k][j];
        }
    }
    for (double l : losses) out.loss += l;
    out.loss *= inv_n;
    for (double g : out.gradient) {
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient");
    }
    return out;
}

double batch_loss(const detail::Evaluator& ev, std::span<const double> params, std::span<const ImageTensor> images,
                  std::span<const int> labels, std::size_t workers) {
    check_batch(images, labels);
    std::vector<double> losses(images.size());
    parallel_for(images.size(), workers,
                 [&](std::size_t i) { losses[i] = bce_with_logits(ev.run(params, images[i]), labels[i]); });
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(images.size());
}

}  // namespace

double forward(const Model& model, const ImageTensor& image) {
    return detail::Evaluator(model.config()).run(model.parameters(), image);
}

BranchScores forward_branches(const Model& model, const ImageTensor& image) {
    return detail::Evaluator(model.config()).branches(model.parameters(), image);
}

LossGradient gradient(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
                      std::size_t workers) {
    return batch_gradient(detail::Evaluator(model.config()), model.parameters(), images, labels, workers);
}

double loss(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
            std::size_t workers) {
    return batch_loss(detail::Evaluator(model.config()), model.parameters(), images, labels, workers);
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw InvalidInput("train config: lr must be > 0");
    if (steps < 1) throw InvalidInput("train config: steps must be >= 1");
    if (batch < 2) throw InvalidInput("train config: batch must be >= 2");
}

TrainResult train(Model model, std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                  const TrainConfig& tc) {
    tc.validate();
    if (real.empty() || fake.empty()) throw InvalidInput("training needs nonempty real and fake datasets");
    const detail::Evaluator ev(model.config());
    auto params = model.parameters();
    const std::size_t np = params.size();
    std::vector<double> m1(np, 0.0), m2(np, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    Rng rng(tc.seed);
    std::vector<double> history;
    history.reserve(tc.steps);
    const std::size_t half = tc.batch / 2;
    std::vector<ImageTensor> batch;
    std::vector<int> labels;
    for (std::size_t step = 1; step <= tc.steps; ++step) {
        batch.clear();
        labels.clear();
        for (std::size_t i = 0; i < half; ++i) {
            batch.push_back(real[rng.below(real.size())]);
            labels.push_back(1);
        }
        for (std::size_t i = half; i < tc.batch; ++i) {
            batch.push_back(fake[rng.below(fake.size())]);
            labels.push_back(0);
        }
        LossGradient lg;
        try {
            lg = batch_gradient(ev, params, batch, labels, tc.workers);
        } catch (const NumericalError& e) {
            throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) + ": " + e.what(),
                                   history);
        }
        history.push_back(lg.loss);
        if (!std::isfinite(lg.loss) || lg.loss > 1e3) {
            throw TrainingDiverged("training diverged at step " + std::to_string(step), history);
        }
        if (tc.optimizer == Optimizer::sgd) {
            for (std::size_t j = 0; j < np; ++j) params[j] -= tc.lr * lg.gradient[j];
            continue;
        }
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t j = 0; j < np; ++j) {
            const double g = lg.gradient[j];
            m1[j] = beta1 * m1[j] + (1.0 - beta1) * g;
            m2[j] = beta2 * m2[j] + (1.0 - beta2) * g * g;
            params[j] -= tc.lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + adam_eps);
        }
    }
    return {std::move(model), std::move(history)};
}

double accuracy(const Model& model, std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                std::size_t workers) {
    const detail::Evaluator ev(model.config());
    const std::size_t n = real.size() + fake.size();
    if (n == 0) throw InvalidInput("accuracy needs at least one image");
    std::vector<int> correct(n, 0);
    parallel_for(n, workers, [&](std::size_t i) {
        const bool is_real = i < real.size();
        const double s = ev.run(model.parameters(), is_real ? real[i] : fake[i - real.size()]);
        correct[i] = (s > 0.0) == is_real ? 1 : 0;
    });
    std::size_t hits = 0;
    for (int c : correct) hits += static_cast<std::size_t>(c);
    return static_cast<double>(hits) / static_cast<double>(n);
}

GradCheckReport gradcheck(const Model& model, std::span<const ImageTensor> images, std::span<const int> labels,
                          double h, std::span<const std::size_t> coords) {
    if (!(h > 0.0)) throw InvalidInput("finite-difference step must be positive");
    const detail::Evaluator ev(model.config());
    std::vector<double> params(model.parameters().begin(), model.parameters().end());
    const LossGradient analytic = batch_gradient(ev, params, images, labels, 1);
    std::vector<std::size_t> all;
    if (coords.empty()) {
        all.resize(params.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        coords = all;
    }
    GradCheckReport report;
    for (std::size_t idx : coords) {
        if (idx >= params.size()) throw InvalidInput("gradient check coordinate out of range");
        const double saved = params[idx];
        params[idx] = saved + h;
        const double up = batch_loss(ev, params, images, labels, 1);
        params[idx] = saved - h;
        const double down = batch_loss(ev, params, images, labels, 1);
        params[idx] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.gradient[idx];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        if (report.checked == 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = idx;
        }
        ++report.checked;
    }
    for (const auto& b : model.layout()) {
        if (report.worst_index >= b.offset && report.worst_index < b.offset + b.size()) report.worst_block = b.name;
    }
    return report;
}

}  // namespace fdiag
