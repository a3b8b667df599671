#include "evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fdiag/fft.hpp"
#include "fdiag/spectrum.hpp"

namespace fdiag::detail {

namespace {

// Y[n×out] = X[n×in]·Wᵀ + b, W stored out×in.
void linear(const double* x, std::size_t n, std::size_t in, const double* w, const double* b, std::size_t out,
            double* y) {
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x + r * in;
        double* yr = y + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w + o * in;
            double s = b[o];
            for (std::size_t i = 0; i < in; ++i) s += xr[i] * wo[i];
            yr[o] = s;
        }
    }
}

// Accumulates into dx (optional), dw, db.
void linear_backward(const double* x, std::size_t n, std::size_t in, const double* w, std::size_t out,
                     const double* dy, double* dx, double* dw, double* db) {
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x + r * in;
        const double* dyr = dy + r * out;
        double* dxr = dx ? dx + r * in : nullptr;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dyr[o];
            if (g == 0.0) continue;
            db[o] += g;
            double* dwo = dw + o * in;
            const double* wo = w + o * in;
            for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
            if (dxr) {
                for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
            }
        }
    }
}

void layer_norm(const double* x, std::size_t n, std::size_t d, const double* g, const double* b, double* y,
                LnCache& cache) {
    cache.xhat.resize(n * d);
    cache.rstd.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.rstd[r] = rstd;
        for (std::size_t i = 0; i < d; ++i) {
            const double xh = (xr[i] - mu) * rstd;
            cache.xhat[r * d + i] = xh;
            y[r * d + i] = g[i] * xh + b[i];
        }
    }
}

void layer_norm_backward(const LnCache& cache, std::size_t n, std::size_t d, const double* g, const double* dy,
                         double* dx, double* dg, double* db) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xh = cache.xhat.data() + r * d;
        const double* dyr = dy + r * d;
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double dxh = dyr[i] * g[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[i];
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
        }
        mean_dxh *= inv_d;
        mean_dxh_xh *= inv_d;
        for (std::size_t i = 0; i < d; ++i) {
            const double dxh = dyr[i] * g[i];
            dx[r * d + i] += cache.rstd[r] * (dxh - mean_dxh - xh[i] * mean_dxh_xh);
        }
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

void require_finite(const std::vector<double>& v, const char* layer) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value in layer ") + layer);
    }
}

std::size_t rel_index(const TransformerBranch& t, std::size_t gc, std::size_t i, std::size_t j) {
    const std::size_t ri = i / gc, ci = i % gc, rj = j / gc, cj = j % gc;
    const std::size_t dr = ri + t.grid_rows - 1 - rj;
    const std::size_t dc = ci + t.grid_cols - 1 - cj;
    return dr * (2 * t.grid_cols - 1) + dc;
}

}  // namespace

std::vector<double> token_features(const TransformerBranch& t, const ImageTensor& image, std::size_t& grid_rows,
                                   std::size_t& grid_cols) {
    if (image.channels != t.channels) {
        throw InvalidInput("model expects " + std::to_string(t.channels) + " channels, image has " +
                           std::to_string(image.channels));
    }
    const std::size_t p = t.patch;
    if (image.height % p != 0 || image.width % p != 0) {
        throw TilingError("patch size " + std::to_string(p) + " does not tile a " + std::to_string(image.height) +
                          "x" + std::to_string(image.width) + " image");
    }
    grid_rows = image.height / p;
    grid_cols = image.width / p;
    if (grid_rows > t.grid_rows || grid_cols > t.grid_cols) {
        throw InvalidInput("image is larger than the model's configured input size");
    }
    const std::size_t n = grid_rows * grid_cols;
    std::vector<double> f(n * t.features);
    if (t.kind == BranchKind::spatial) {
        for (std::size_t gr = 0; gr < grid_rows; ++gr) {
            for (std::size_t gc = 0; gc < grid_cols; ++gc) {
                double* row = f.data() + (gr * grid_cols + gc) * t.features;
                std::size_t k = 0;
                for (std::size_t y = 0; y < p; ++y) {
                    for (std::size_t x = 0; x < p; ++x) {
                        for (std::size_t c = 0; c < t.channels; ++c) row[k++] = image.at(gr * p + y, gc * p + x, c);
                    }
                }
            }
        }
        return f;
    }
    const PatchSpectra ps = patch_fft(image, p);
    const double scale = 1.0 / static_cast<double>(p * p);
    for (std::size_t tok = 0; tok < n; ++tok) {
        const Spectrum& s = ps.spectra[tok];
        double* row = f.data() + tok * t.features;
        for (std::size_t i = 0; i < s.data.size(); ++i) {
            if (t.feature == SpectralFeature::real_imag) {
                row[2 * i] = s.data[i].real() * scale;
                row[2 * i + 1] = s.data[i].imag() * scale;
            } else {
                row[i] = std::log1p(std::abs(s.data[i]));
            }
        }
    }
    return f;
}

std::vector<double> mlp_features(const MlpBranch& m, const ImageTensor& image) {
    const ReducedSpectrum rs = reduced_spectrum(image, m.bins, ChannelMode::luma);
    const double inv_px = 1.0 / static_cast<double>(image.pixels());
    std::vector<double> f(m.bins);
    for (std::size_t k = 0; k < m.bins; ++k) f[k] = 0.1 * std::log(kMlpPowerFloor + rs.values[k] * inv_px);
    return f;
}

double transformer_forward(const TransformerBranch& t, std::span<const double> p, const ImageTensor& image,
                           TransformerCache* cache) {
    TransformerCache local;
    TransformerCache& c = cache ? *cache : local;
    c.feats = token_features(t, image, c.grid_rows, c.grid_cols);
    const std::size_t n = c.grid_rows * c.grid_cols;
    c.tokens = n;
    const std::size_t d = t.dim, hd = d / t.heads, m = t.hidden;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const double* P = p.data();

    std::vector<double> x(n * d);
    linear(c.feats.data(), n, t.features, P + t.embed_w, P + t.embed_b, d, x.data());
    require_finite(x, "embed");

    c.blocks.resize(t.blocks.size());
    for (std::size_t bi = 0; bi < t.blocks.size(); ++bi) {
        const BlockOffsets& o = t.blocks[bi];
        BlockCache& bc = c.blocks[bi];
        bc.x_in = x;
        bc.a.resize(n * d);
        layer_norm(x.data(), n, d, P + o.norm1_w, P + o.norm1_b, bc.a.data(), bc.ln1);
        bc.qkv.resize(n * 3 * d);
        linear(bc.a.data(), n, d, P + o.qkv_w, P + o.qkv_b, 3 * d, bc.qkv.data());
        bc.probs.assign(t.heads * n * n, 0.0);
        bc.attn.assign(n * d, 0.0);
        const double* table = P + o.rel_bias;
        for (std::size_t h = 0; h < t.heads; ++h) {
            double* probs = bc.probs.data() + h * n * n;
            for (std::size_t i = 0; i < n; ++i) {
                const double* q = bc.qkv.data() + i * 3 * d + h * hd;
                double mx = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* k = bc.qkv.data() + j * 3 * d + d + h * hd;
                    double s = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
                    s = s * scale + table[h * t.rel_table() + rel_index(t, c.grid_cols, i, j)];
                    probs[i * n + j] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    probs[i * n + j] = std::exp(probs[i * n + j] - mx);
                    z += probs[i * n + j];
                }
                double* out = bc.attn.data() + i * d + h * hd;
                for (std::size_t j = 0; j < n; ++j) {
                    probs[i * n + j] /= z;
                    const double* v = bc.qkv.data() + j * 3 * d + 2 * d + h * hd;
                    for (std::size_t e = 0; e < hd; ++e) out[e] += probs[i * n + j] * v[e];
                }
            }
        }
        std::vector<double> y(n * d);
        linear(bc.attn.data(), n, d, P + o.proj_w, P + o.proj_b, d, y.data());
        for (std::size_t i = 0; i < n * d; ++i) x[i] += y[i];
        require_finite(x, "attention");
        bc.x_mid = x;
        bc.c.resize(n * d);
        layer_norm(x.data(), n, d, P + o.norm2_w, P + o.norm2_b, bc.c.data(), bc.ln2);
        bc.h.resize(n * m);
        linear(bc.c.data(), n, d, P + o.fc1_w, P + o.fc1_b, m, bc.h.data());
        bc.g.resize(n * m);
        for (std::size_t i = 0; i < n * m; ++i) bc.g[i] = gelu(bc.h[i]);
        linear(bc.g.data(), n, m, P + o.fc2_w, P + o.fc2_b, d, y.data());
        for (std::size_t i = 0; i < n * d; ++i) x[i] += y[i];
        require_finite(x, "mlp");
    }
    c.x_out = x;
    c.xf.resize(n * d);
    layer_norm(x.data(), n, d, P + t.norm_w, P + t.norm_b, c.xf.data(), c.lnf);
    c.pooled.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t e = 0; e < d; ++e) c.pooled[e] += c.xf[i * d + e];
    }
    for (double& v : c.pooled) v /= static_cast<double>(n);
    double score = P[t.head_b];
    for (std::size_t e = 0; e < d; ++e) score += P[t.head_w + e] * c.pooled[e];
    if (!std::isfinite(score)) throw NumericalError("non-finite value in layer head");
    return score;
}

void transformer_backward(const TransformerBranch& t, std::span<const double> p, const TransformerCache& c,
                          double dscore, std::span<double> grad) {
    const std::size_t n = c.tokens, d = t.dim, hd = d / t.heads, m = t.hidden;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const double* P = p.data();
    double* G = grad.data();

    G[t.head_b] += dscore;
    std::vector<double> dxf(n * d);
    for (std::size_t e = 0; e < d; ++e) {
        G[t.head_w + e] += dscore * c.pooled[e];
        const double dp = dscore * P[t.head_w + e] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) dxf[i * d + e] = dp;
    }
    std::vector<double> dx(n * d, 0.0);
    layer_norm_backward(c.lnf, n, d, P + t.norm_w, dxf.data(), dx.data(), G + t.norm_w, G + t.norm_b);

    std::vector<double> dy(n * d), dc(n * d), dh(n * m), dattn(n * d), dqkv(n * 3 * d), da(n * d), dprobs(n);
    for (std::size_t bi = t.blocks.size(); bi-- > 0;) {
        const BlockOffsets& o = t.blocks[bi];
        const BlockCache& bc = c.blocks[bi];
        // MLP sub-block: x_out = x_mid + fc2(gelu(fc1(ln2(x_mid)))).
        std::fill(dh.begin(), dh.end(), 0.0);
        std::vector<double> dg(n * m, 0.0);
        linear_backward(bc.g.data(), n, m, P + o.fc2_w, d, dx.data(), dg.data(), G + o.fc2_w, G + o.fc2_b);
        for (std::size_t i = 0; i < n * m; ++i) dh[i] = dg[i] * gelu_grad(bc.h[i]);
        std::fill(dc.begin(), dc.end(), 0.0);
        linear_backward(bc.c.data(), n, d, P + o.fc1_w, m, dh.data(), dc.data(), G + o.fc1_w, G + o.fc1_b);
        layer_norm_backward(bc.ln2, n, d, P + o.norm2_w, dc.data(), dx.data(), G + o.norm2_w, G + o.norm2_b);

        // Attention sub-block: x_mid = x_in + proj(attn(ln1(x_in))).
        std::fill(dattn.begin(), dattn.end(), 0.0);
        linear_backward(bc.attn.data(), n, d, P + o.proj_w, d, dx.data(), dattn.data(), G + o.proj_w, G + o.proj_b);
        std::fill(dqkv.begin(), dqkv.end(), 0.0);
        for (std::size_t h = 0; h < t.heads; ++h) {
            const double* probs = bc.probs.data() + h * n * n;
            for (std::size_t i = 0; i < n; ++i) {
                const double* dout = dattn.data() + i * d + h * hd;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* v = bc.qkv.data() + j * 3 * d + 2 * d + h * hd;
                    double* dv = dqkv.data() + j * 3 * d + 2 * d + h * hd;
                    double s = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) {
                        s += dout[e] * v[e];
                        dv[e] += probs[i * n + j] * dout[e];
                    }
                    dprobs[j] = s;
                    dot += probs[i * n + j] * s;
                }
                const double* q = bc.qkv.data() + i * 3 * d + h * hd;
                double* dq = dqkv.data() + i * 3 * d + h * hd;
                for (std::size_t j = 0; j < n; ++j) {
                    const double ds = probs[i * n + j] * (dprobs[j] - dot);
                    if (ds == 0.0) continue;
                    G[o.rel_bias + h * t.rel_table() + rel_index(t, c.grid_cols, i, j)] += ds;
                    const double* k = bc.qkv.data() + j * 3 * d + d + h * hd;
                    double* dk = dqkv.data() + j * 3 * d + d + h * hd;
                    for (std::size_t e = 0; e < hd; ++e) {
                        dq[e] += ds * scale * k[e];
                        dk[e] += ds * scale * q[e];
                    }
                }
            }
        }
        std::fill(da.begin(), da.end(), 0.0);
        linear_backward(bc.a.data(), n, d, P + o.qkv_w, 3 * d, dqkv.data(), da.data(), G + o.qkv_w, G + o.qkv_b);
        layer_norm_backward(bc.ln1, n, d, P + o.norm1_w, da.data(), dx.data(), G + o.norm1_w, G + o.norm1_b);
    }
    linear_backward(c.feats.data(), n, t.features, P + t.embed_w, d, dx.data(), nullptr, G + t.embed_w,
                    G + t.embed_b);
}

double mlp_forward(const MlpBranch& m, std::span<const double> p, const ImageTensor& image, MlpCache* cache) {
    MlpCache local;
    MlpCache& c = cache ? *cache : local;
    const double* P = p.data();
    std::vector<double> h = mlp_features(m, image);
    c.inputs.clear();
    c.pre.clear();
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        const std::size_t in = h.size();
        std::vector<double> z(m.dim);
        linear(h.data(), 1, in, P + m.weights[i], P + m.biases[i], m.dim, z.data());
        require_finite(z, "mlp hidden");
        c.inputs.push_back(std::move(h));
        h.resize(m.dim);
        for (std::size_t e = 0; e < m.dim; ++e) h[e] = gelu(z[e]);
        c.pre.push_back(std::move(z));
    }
    double score = P[m.head_b];
    for (std::size_t e = 0; e < m.dim; ++e) score += P[m.head_w + e] * h[e];
    c.last = std::move(h);
    if (!std::isfinite(score)) throw NumericalError("non-finite value in layer head");
    return score;
}

void mlp_backward(const MlpBranch& m, std::span<const double> p, const MlpCache& c, double dscore,
                  std::span<double> grad) {
    const double* P = p.data();
    double* G = grad.data();
    G[m.head_b] += dscore;
    std::vector<double> dh(m.dim);
    for (std::size_t e = 0; e < m.dim; ++e) {
        G[m.head_w + e] += dscore * c.last[e];
        dh[e] = dscore * P[m.head_w + e];
    }
    for (std::size_t i = m.weights.size(); i-- > 0;) {
        std::vector<double> dz(m.dim);
        for (std::size_t e = 0; e < m.dim; ++e) dz[e] = dh[e] * gelu_grad(c.pre[i][e]);
        const std::size_t in = c.inputs[i].size();
        std::vector<double> dx(in, 0.0);
        linear_backward(c.inputs[i].data(), 1, in, P + m.weights[i], m.dim, dz.data(), i > 0 ? dx.data() : nullptr,
                        G + m.weights[i], G + m.biases[i]);
        dh = std::move(dx);
    }
}

double Evaluator::run(std::span<const double> params, const ImageTensor& image) const {
    if (arch.is_mlp) return mlp_forward(arch.mlp, params, image, nullptr);
    if (arch.transformers.size() == 1) return transformer_forward(arch.transformers[0], params, image, nullptr);
    const BranchScores b = branches(params, image);
    return (b.spatial + b.spectral) / 2.0;
}

double Evaluator::run(std::span<const double> params, const ImageTensor& image, std::span<double> grad,
                      const std::function<double(double)>& dscore) const {
    if (arch.is_mlp) {
        MlpCache cache;
        const double s = mlp_forward(arch.mlp, params, image, &cache);
        mlp_backward(arch.mlp, params, cache, dscore(s), grad);
        return s;
    }
    std::vector<TransformerCache> caches(arch.transformers.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < arch.transformers.size(); ++i) {
        sum += transformer_forward(arch.transformers[i], params, image, &caches[i]);
    }
    const double s = arch.transformers.size() == 1 ? sum : sum / 2.0;
    const double ds = dscore(s) / static_cast<double>(arch.transformers.size());
    for (std::size_t i = 0; i < arch.transformers.size(); ++i) {
        transformer_backward(arch.transformers[i], params, caches[i], ds, grad);
    }
    return s;
}

BranchScores Evaluator::branches(std::span<const double> params, const ImageTensor& image) const {
    if (arch.transformers.size() != 2) throw InvalidInput("branch scores are only defined for dualformer");
    return {transformer_forward(arch.transformers[0], params, image, nullptr),
            transformer_forward(arch.transformers[1], params, image, nullptr)};
}

}  // namespace fdiag::detail
