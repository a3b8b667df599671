#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>

#include "fdiag/image.hpp"
#include "fdiag/nets.hpp"
#include "fdiag/probe_curve.hpp"
#include "fdiag/spectrum.hpp"

namespace fdiag {

/// A realness scorer D(I).
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const ImageTensor& image) = 0;
    virtual std::string name() const = 0;
    virtual bool deterministic() const { return true; }
    /// Whether score() may run on several threads at once.
    virtual bool concurrent() const { return true; }
};

/// Closed-form scorers used for testing and sanity sweeps.
///
///   constant[=c]  always c (default 0)
///   mean          mean sample value
///   hf-energy     -(spectral power at normalized radius >= 0.5)/(H·W)
class AnalyticScorer : public Scorer {
public:
    explicit AnalyticScorer(const std::string& spec);
    double score(const ImageTensor& image) override;
    std::string name() const override { return "analytic:" + spec_; }

private:
    enum class Kind { constant, mean, hf_energy } kind_;
    double constant_ = 0.0;
    std::string spec_;
};

/// In-process discriminator; read-only and shareable across threads.
class ModelScorer : public Scorer {
public:
    explicit ModelScorer(Model model, std::string name = "model");
    double score(const ImageTensor& image) override { return forward(model_, image); }
    std::string name() const override { return name_; }
    const Model& model() const { return model_; }

private:
    Model model_;
    std::string name_;
};

/// Transport failures: unreachable endpoint, broken pipe, EOF, timeout.
class ScorerTransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Semantic failures: bad handshake, `ERR` replies, unparsable or non-finite scores.
class ScorerProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExternalOptions {
    std::chrono::milliseconds timeout{30000};
    bool deterministic = true;
    /// Scores of a nondeterministic endpoint are averaged over this many requests.
    std::size_t repeats = 1;
};

/// Line-protocol session with a scoring process (exec) or server (tcp).
///
///   -> HELLO 1           <- OK <name>
///   -> SCORE h w c path  <- <decimal score>
///   -> BYE
///
/// The image travels as a headerless little-endian float64 file in a private
/// temporary directory. Requests on one session are serialized.
class ExternalScorer : public Scorer {
public:
    /// Runs `command` through /bin/sh with its stdin/stdout as the channel.
    static std::unique_ptr<ExternalScorer> spawn(const std::string& command, ExternalOptions options = {});
    static std::unique_ptr<ExternalScorer> connect(const std::string& host, std::uint16_t port,
                                                   ExternalOptions options = {});
    ~ExternalScorer() override;
    ExternalScorer(const ExternalScorer&) = delete;
    ExternalScorer& operator=(const ExternalScorer&) = delete;

    double score(const ImageTensor& image) override;
    std::string name() const override { return remote_name_; }
    bool deterministic() const override { return options_.deterministic; }
    bool concurrent() const override { return false; }

    /// Sends one raw line and returns the reply line (handshake must be done).
    std::string request(const std::string& line);

private:
    ExternalScorer(int read_fd, int write_fd, int child_pid, ExternalOptions options);
    void handshake();
    void send_line(const std::string& line);
    std::string read_line();
    double score_once(const ImageTensor& image);

    int read_fd_ = -1;
    int write_fd_ = -1;
    int child_pid_ = -1;
    ExternalOptions options_;
    std::string remote_name_;
    std::string pending_;
    std::string temp_dir_;
    std::uint64_t request_counter_ = 0;
    std::mutex mu_;
};

/// Parses `model:PATH`, `analytic:NAME`, `exec:CMD` or `tcp:HOST:PORT`.
std::unique_ptr<Scorer> make_scorer(const std::string& spec, const ExternalOptions& options = {});

/// Raised when a scorer fails on a particular image.
class ProbeError : public std::runtime_error {
public:
    ProbeError(const std::string& what, std::size_t image_index)
        : std::runtime_error(what), image_index(image_index) {}
    std::size_t image_index;
};

/// k equal rings over [0,1]; the last ring reaches past the corners (r >= 1).
std::vector<Interval> sweep_intervals(std::size_t k);

/// Noise seed for an image: the sweep seed mixed with a hash of the image content.
std::uint64_t content_seed(std::uint64_t seed, const ImageTensor& image);

struct SweepOptions {
    std::size_t k = 20;
    /// Negative selects 0.3 × std(image) per image.
    double sigma = -1.0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Mean/std over images of D(I_mask) − D(I) and D(I_noise) − D(I) per ring. The
/// scorer is called exactly (2k+1)·n times.
ProbeCurve sweep(Scorer& scorer, std::span<const ImageTensor> images, const SweepOptions& options);

MeanStd score_dataset(Scorer& scorer, std::span<const ImageTensor> images, std::size_t workers = 1);

}  // namespace fdiag
