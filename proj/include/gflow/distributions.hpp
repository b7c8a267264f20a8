#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gflow/model.hpp"
#include "gflow/rotations.hpp"
#include "gflow/stats.hpp"

namespace gflow {

enum class ToyCase {
    all_previous = 1,    // every dimension depends on all previous ones
    core_remainder = 2,  // dims > d depend on the fixed core {x_1..x_d}
    core_noise = 3,      // dims > d are independent noise
};

struct ToyParams {
    double m1 = 0.5;
    double m0 = 0.0;
    double sigma1_sq = 0.8;
    double sigma2_sq = 0.2;
};

/// Autoregressive toy family: x_1 ~ N(m1, sigma1^2) and
/// x_i ~ N(m_i(A_i), sigma2^2) with
/// m_i(A_i) = m0 + 5 tanh( (1/10) sum_{j in A_i} s_ij x_j^2 ).
/// The +-1 sign matrix is drawn once per (dim, seed) and shared by all
/// three dependency cases.
class ToyDistribution {
  public:
    static ToyDistribution make(ToyCase c, int dim, int core, std::uint64_t seed,
                                ToyParams params = {}) {
        if (dim < 1) throw std::invalid_argument("ToyDistribution: dim must be >= 1");
        if (core < 1 || core > dim) throw std::invalid_argument("ToyDistribution: core must be in [1, dim]");
        if (!(params.sigma1_sq > 0.0 && params.sigma2_sq > 0.0))
            throw std::invalid_argument("ToyDistribution: variances must be positive");
        ToyDistribution dist;
        dist.case_ = c;
        dist.dim_ = dim;
        dist.core_ = core;
        dist.params_ = params;
        dist.seed_ = seed;
        // Strictly lower-triangular sign matrix; the draw order is fixed so
        // (dim, seed) fully determines it, independent of the case.
        dist.signs_ = Eigen::MatrixXd::Zero(dim, dim);
        Rng rng = make_rng(derive_stream(seed, static_cast<std::uint64_t>(dim)));
        for (int i = 1; i < dim; ++i)
            for (int j = 0; j < i; ++j)
                dist.signs_(i, j) = (rng() & 1u) ? 1.0 : -1.0;
        return dist;
    }

    ToyCase toy_case() const { return case_; }
    int dim() const { return dim_; }
    int core() const { return core_; }
    const ToyParams& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    double sign(int i, int j) const { return signs_(i, j); }

    /// Index of the first dependency of dimension i (dependencies are the
    /// contiguous range [0, dependency_end(i)) of earlier dimensions).
    int dependency_end(int i) const {
        switch (case_) {
            case ToyCase::all_previous: return i;
            case ToyCase::core_remainder: return std::min(i, core_);
            case ToyCase::core_noise: return i < core_ ? i : 0;
        }
        return 0;
    }

    /// Ancestral sampling of n rows.
    Dataset sample(long n, Rng& rng) const {
        if (n < 1) throw std::invalid_argument("ToyDistribution::sample: n must be >= 1");
        Dataset out;
        out.rows.resize(n, dim_);
        out.provenance = std::string("toy-") + std::to_string(static_cast<int>(case_));
        out.seed = seed_;
        sample_chunk(out.rows, rng, nullptr);
        return out;
    }

    /// Exact log density, summing the autoregressive 1-D Gaussian factors.
    double log_density(const Eigen::VectorXd& x) const {
        if (x.size() != dim_) throw std::invalid_argument("ToyDistribution::log_density: dimension mismatch");
        double logp = normal_log_pdf(x(0), params_.m1, params_.sigma1_sq);
        for (int i = 1; i < dim_; ++i) {
            double acc = 0.0;
            int end = dependency_end(i);
            for (int j = 0; j < end; ++j) acc += signs_(i, j) * x(j) * x(j);
            double mean = params_.m0 + 5.0 * std::tanh(acc / 10.0);
            logp += normal_log_pdf(x(i), mean, params_.sigma2_sq);
        }
        return logp;
    }

    struct EntropyEstimate {
        double value;
        double std_error;
    };

    /// Monte-Carlo entropy H[p] = E[-log p] over fresh samples, chunked so
    /// large n_mc does not materialize the sample matrix.
    EntropyEstimate entropy(long n_mc, Rng& rng) const {
        if (n_mc < 2) throw std::invalid_argument("ToyDistribution::entropy: n_mc must be >= 2");
        const long chunk = 32768;
        double mean = 0.0, m2 = 0.0;
        long seen = 0;
        Eigen::MatrixXd rows;
        Eigen::VectorXd logp;
        for (long done = 0; done < n_mc; done += chunk) {
            long m = std::min(chunk, n_mc - done);
            rows.resize(m, dim_);
            logp.resize(m);
            sample_chunk(rows, rng, &logp);
            for (long i = 0; i < m; ++i) {
                ++seen;
                double v = -logp(i);
                double delta = v - mean;
                mean += delta / static_cast<double>(seen);
                m2 += delta * (v - mean);
            }
        }
        double variance = m2 / static_cast<double>(seen - 1);
        return EntropyEstimate{mean, std::sqrt(variance / static_cast<double>(seen))};
    }

  private:
    ToyDistribution() = default;

    // Fills a preallocated chunk with samples column by column, maintaining
    // per-row accumulators of sum_j s_ij x_j^2 for all later dimensions.
    void sample_chunk(Eigen::MatrixXd& rows, Rng& rng, Eigen::VectorXd* logp) const {
        long n = rows.rows();
        std::normal_distribution<double> normal;
        double s1 = std::sqrt(params_.sigma1_sq);
        double s2 = std::sqrt(params_.sigma2_sq);
        if (logp) logp->setZero();
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, dim_);
        for (int i = 0; i < dim_; ++i) {
            if (i == 0) {
                for (long r = 0; r < n; ++r) {
                    rows(r, 0) = params_.m1 + s1 * normal(rng);
                    if (logp) (*logp)(r) += normal_log_pdf(rows(r, 0), params_.m1, params_.sigma1_sq);
                }
            } else {
                for (long r = 0; r < n; ++r) {
                    double mean = params_.m0 + 5.0 * std::tanh(acc(r, i) / 10.0);
                    double x = mean + s2 * normal(rng);
                    rows(r, i) = x;
                    if (logp) (*logp)(r) += normal_log_pdf(x, mean, params_.sigma2_sq);
                }
            }
            // Propagate x_i^2 into the accumulators of dimensions that
            // depend on it.
            for (int later = i + 1; later < dim_; ++later) {
                if (dependency_end(later) > i)
                    acc.col(later).array() += signs_(later, i) * rows.col(i).array().square();
            }
        }
    }

    ToyCase case_ = ToyCase::all_previous;
    int dim_ = 1;
    int core_ = 1;
    ToyParams params_;
    Eigen::MatrixXd signs_;
    std::uint64_t seed_ = 0;
};

/// Bimodal attack target of the spurious-projection experiment:
/// (N(-spread/2, sigma^2) + N(spread/2, sigma^2)) / 2.
struct BimodalTarget {
    double spread = 2.0;
    double mode_sigma = 0.4;
};

/// Equal-weight mixture samples, returned sorted (the W2 objective consumes
/// sorted targets).
inline std::vector<double> bimodal_sample(const BimodalTarget& target, long n, Rng& rng) {
    if (!(target.mode_sigma > 0.0)) throw std::invalid_argument("bimodal_sample: sigma must be > 0");
    if (n < 1) throw std::invalid_argument("bimodal_sample: n must be >= 1");
    std::normal_distribution<double> normal;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) {
        double mode = (rng() & 1u) ? target.spread / 2.0 : -target.spread / 2.0;
        v = mode + target.mode_sigma * normal(rng);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline double bimodal_log_density(const BimodalTarget& target, double x) {
    double a = normal_log_pdf(x, -target.spread / 2.0, target.mode_sigma * target.mode_sigma);
    double b = normal_log_pdf(x, target.spread / 2.0, target.mode_sigma * target.mode_sigma);
    double hi = std::max(a, b);
    return hi + std::log(0.5 * (std::exp(a - hi) + std::exp(b - hi)));
}

struct GaussianData {
    Dataset data;
    double entropy;              // exact: sum of log(2 pi e lambda_i) / 2
    Eigen::MatrixXd covariance;  // Q^T Diag(lambda) Q
};

inline double gaussian_entropy(const Spectrum& spectrum) {
    return 0.5 * (spectrum.eigenvalues.array() * (2.0 * kPi * std::exp(1.0))).log().sum();
}

/// Samples N(0, Q^T Diag(lambda) Q) with its exact entropy.
inline GaussianData gaussian_dataset(const Spectrum& spectrum, const OrthogonalMatrix& q,
                                     long n, Rng& rng) {
    if (spectrum.dim() != q.dim()) throw std::invalid_argument("gaussian_dataset: dimension mismatch");
    if (n < 1) throw std::invalid_argument("gaussian_dataset: n must be >= 1");
    int d = spectrum.dim();
    std::normal_distribution<double> normal;
    GaussianData out;
    out.data.rows.resize(n, d);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.data.rows(i, j) = normal(rng);
    Eigen::VectorXd scale = spectrum.eigenvalues.array().sqrt();
    out.data.rows = (out.data.rows * scale.asDiagonal()) * q.matrix();
    out.data.provenance = std::string("gaussian-") + spectrum_case_name(spectrum.case_label);
    out.entropy = gaussian_entropy(spectrum);
    out.covariance = q.matrix().transpose() * spectrum.eigenvalues.asDiagonal() * q.matrix();
    out.covariance = ((out.covariance + out.covariance.transpose()) / 2.0).eval();
    return out;
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<long> counts;

    double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

/// Equal-width histogram spanning the value range.
inline Histogram histogram_values(std::span<const double> values, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram_values: bins must be >= 1");
    if (values.empty()) throw std::invalid_argument("histogram_values: empty input");
    Histogram h;
    h.lo = *std::min_element(values.begin(), values.end());
    h.hi = *std::max_element(values.begin(), values.end());
    if (h.hi <= h.lo) h.hi = h.lo + 1.0;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        double t = (v - h.lo) / (h.hi - h.lo) * static_cast<double>(bins);
        long b = std::clamp<long>(static_cast<long>(t), 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

/// Histogram of the projection w^T x over equal-width bins spanning the
/// projected range. w must be a unit vector.
inline Histogram projection_histogram(const Dataset& data, const Eigen::VectorXd& w, int bins) {
    if (w.size() != data.dim()) throw std::invalid_argument("projection_histogram: dimension mismatch");
    if (std::abs(w.norm() - 1.0) > 1e-10)
        throw std::invalid_argument("projection_histogram: w must be a unit vector");
    Eigen::VectorXd proj = data.rows * w;
    return histogram_values(std::span<const double>(proj.data(), static_cast<std::size_t>(proj.size())), bins);
}

// ---------------------------------------------------------------------------
// Dataset export: binary (u64 n, u64 dim, row-major doubles) and CSV.

inline void save_dataset_binary(const Dataset& data, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset_binary: cannot open " + path);
    std::uint64_t n = static_cast<std::uint64_t>(data.size());
    std::uint64_t d = static_cast<std::uint64_t>(data.dim());
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(&d), 8);
    for (long i = 0; i < data.size(); ++i)
        for (int j = 0; j < data.dim(); ++j) {
            double v = data.rows(i, j);
            os.write(reinterpret_cast<const char*>(&v), 8);
        }
    if (!os) throw std::runtime_error("save_dataset_binary: write failed for " + path);
}

inline Dataset load_dataset_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset_binary: cannot open " + path);
    std::uint64_t n = 0, d = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    is.read(reinterpret_cast<char*>(&d), 8);
    Dataset out;
    out.rows.resize(static_cast<long>(n), static_cast<long>(d));
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t j = 0; j < d; ++j) {
            double v;
            is.read(reinterpret_cast<char*>(&v), 8);
            out.rows(static_cast<long>(i), static_cast<long>(j)) = v;
        }
    if (!is) throw std::runtime_error("load_dataset_binary: truncated file " + path);
    return out;
}

}  // namespace gflow
