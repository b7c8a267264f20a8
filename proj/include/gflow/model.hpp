#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gflow/rotations.hpp"
#include "gflow/rq_spline.hpp"
#include "gflow/stats.hpp"

namespace gflow {

/// n x D sample matrix with provenance for reproducibility.
struct Dataset {
    Eigen::MatrixXd rows;
    std::string provenance;
    std::uint64_t seed = 0;

    long size() const { return static_cast<long>(rows.rows()); }
    int dim() const { return static_cast<int>(rows.cols()); }
};

/// One Gaussianization block: a rotation followed by independent
/// per-dimension monotone transforms.
struct Block {
    OrthogonalMatrix rotation;
    std::vector<MonotoneTransform1D> transforms;

    int dim() const { return rotation.dim(); }
};

namespace detail {

/// Applies one block to a batch in place and accumulates each sample's
/// spline log-derivative sum (the rotation contributes zero log-det).
inline void apply_block(const Block& block, Eigen::MatrixXd& rows, Eigen::VectorXd& log_det) {
    rows = (rows * block.rotation.matrix().transpose()).eval();
    for (int j = 0; j < rows.cols(); ++j) {
        const auto& t = block.transforms[static_cast<std::size_t>(j)];
        for (long i = 0; i < rows.rows(); ++i) {
            auto e = t.forward(rows(i, j));
            rows(i, j) = e.y;
            log_det(i) += e.log_deriv;
        }
    }
}

}  // namespace detail

/// Ordered list of Gaussianization blocks with forward/inverse maps and
/// log-determinant tracking.
class GaussianizationModel {
  public:
    explicit GaussianizationModel(int dim) : dim_(dim) {
        if (dim < 1) throw std::invalid_argument("GaussianizationModel: dim must be >= 1");
    }

    void append(Block block) {
        if (block.dim() != dim_ || block.transforms.size() != static_cast<std::size_t>(dim_))
            throw std::invalid_argument("GaussianizationModel: block dimension mismatch");
        blocks_.push_back(std::move(block));
    }

    int dim() const { return dim_; }
    std::size_t block_count() const { return blocks_.size(); }
    const std::vector<Block>& blocks() const { return blocks_; }

    struct TransformResult {
        Eigen::VectorXd z;
        double log_det;
    };

    TransformResult transform(const Eigen::VectorXd& x) const {
        if (x.size() != dim_) throw std::invalid_argument("transform: dimension mismatch");
        Eigen::VectorXd z = x;
        double log_det = 0.0;
        for (const auto& block : blocks_) {
            z = (block.rotation.matrix() * z).eval();
            for (int j = 0; j < dim_; ++j) {
                auto e = block.transforms[static_cast<std::size_t>(j)].forward(z(j));
                z(j) = e.y;
                log_det += e.log_deriv;
            }
        }
        return TransformResult{std::move(z), log_det};
    }

    Eigen::VectorXd inverse_transform(const Eigen::VectorXd& z) const {
        if (z.size() != dim_) throw std::invalid_argument("inverse_transform: dimension mismatch");
        Eigen::VectorXd x = z;
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            for (int j = 0; j < dim_; ++j) x(j) = it->transforms[static_cast<std::size_t>(j)].inverse(x(j));
            x = (it->rotation.matrix().transpose() * x).eval();
        }
        return x;
    }

    /// Batch forward pass; log_det must be sized n (accumulated in place).
    void transform_batch(Eigen::MatrixXd& rows, Eigen::VectorXd& log_det) const {
        for (const auto& block : blocks_) detail::apply_block(block, rows, log_det);
    }

  private:
    int dim_;
    std::vector<Block> blocks_;
};

struct TrainedBlock {
    Block block;
    Dataset transformed;
    Eigen::VectorXd log_det;  // per-sample spline log-derivative sums
};

/// Trains one block: samples a fresh Haar rotation and quantile-fits each
/// rotated dimension.
inline TrainedBlock train_block(const Dataset& data, int bins, double alpha_inner,
                                double alpha_tail, Rng& rng) {
    if (data.size() < static_cast<long>(bins) + 2)
        throw std::invalid_argument("train_block: need at least bins + 2 samples");
    OrthogonalMatrix q = sample_haar(data.dim(), rng);
    Dataset out;
    out.rows = data.rows * q.matrix().transpose();
    out.provenance = data.provenance;
    out.seed = data.seed;
    std::vector<MonotoneTransform1D> transforms;
    transforms.reserve(static_cast<std::size_t>(data.dim()));
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(data.size());
    for (int j = 0; j < data.dim(); ++j) {
        Eigen::VectorXd col = out.rows.col(j);
        auto t = MonotoneTransform1D::fit_from_samples(
            std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), bins,
            alpha_inner, alpha_tail);
        for (long i = 0; i < out.rows.rows(); ++i) {
            auto e = t.forward(out.rows(i, j));
            out.rows(i, j) = e.y;
            log_det(i) += e.log_deriv;
        }
        transforms.push_back(std::move(t));
    }
    return TrainedBlock{Block{std::move(q), std::move(transforms)}, std::move(out), std::move(log_det)};
}

struct TrainConfig {
    int layers = 1;
    int bins = 128;
    double alpha_inner = 0.9;
    double alpha_tail = 0.99;
    double holdout_fraction = 0.0;  // diagnostic: evaluate the loss on held-out rows
};

struct TrainResult {
    GaussianizationModel model;
    std::vector<double> loss_curve;  // layers + 1 entries
};

namespace detail {

inline double sample_loss(const Eigen::MatrixXd& rows, const Eigen::VectorXd& log_det,
                          long begin, long end, double constant) {
    double acc = 0.0;
    for (long i = begin; i < end; ++i) acc += 0.5 * rows.row(i).squaredNorm() - log_det(i);
    return acc / static_cast<double>(end - begin) + constant;
}

}  // namespace detail

/// Iterative training: adds blocks one by one, each fitted on the output of
/// its predecessors. The loss curve holds the KL estimate before training
/// and after each block; entropy_of_p supplies the data-dependent constant.
inline TrainResult train_iterative(const Dataset& data, const TrainConfig& config,
                                   double entropy_of_p, Rng& rng) {
    if (config.layers < 0) throw std::invalid_argument("train_iterative: layers must be >= 0");
    if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0))
        throw std::invalid_argument("train_iterative: holdout_fraction must be in [0,1)");
    long n = data.size();
    long fit_n = n - static_cast<long>(static_cast<double>(n) * config.holdout_fraction);
    if (fit_n < 1) throw std::invalid_argument("train_iterative: no rows left to fit");
    long eval_begin = config.holdout_fraction > 0.0 ? fit_n : 0;

    double constant = 0.5 * static_cast<double>(data.dim()) * kLogTwoPi - entropy_of_p;
    GaussianizationModel model(data.dim());
    Eigen::MatrixXd rows = data.rows;
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(n);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(config.layers) + 1);
    curve.push_back(detail::sample_loss(rows, log_det, eval_begin, n, constant));
    for (int layer = 0; layer < config.layers; ++layer) {
        OrthogonalMatrix q = sample_haar(data.dim(), rng);
        rows = (rows * q.matrix().transpose()).eval();
        std::vector<MonotoneTransform1D> transforms;
        transforms.reserve(static_cast<std::size_t>(data.dim()));
        for (int j = 0; j < data.dim(); ++j) {
            Eigen::VectorXd col = rows.col(j).head(fit_n);
            auto t = MonotoneTransform1D::fit_from_samples(
                std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                config.bins, config.alpha_inner, config.alpha_tail);
            for (long i = 0; i < n; ++i) {
                auto e = t.forward(rows(i, j));
                rows(i, j) = e.y;
                log_det(i) += e.log_deriv;
            }
            transforms.push_back(std::move(t));
        }
        model.append(Block{std::move(q), std::move(transforms)});
        curve.push_back(detail::sample_loss(rows, log_det, eval_begin, n, constant));
    }
    return TrainResult{std::move(model), std::move(curve)};
}

/// KL(q(z) || N(0,I)) estimated on a dataset: mean of |z|^2/2 - log_det
/// plus the constant (D/2) log(2 pi) - H[p].
inline double kl_loss(const GaussianizationModel& model, const Dataset& data, double entropy_of_p) {
    if (model.dim() != data.dim()) throw std::invalid_argument("kl_loss: dimension mismatch");
    Eigen::MatrixXd rows = data.rows;
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(data.size());
    model.transform_batch(rows, log_det);
    double constant = 0.5 * static_cast<double>(data.dim()) * kLogTwoPi - entropy_of_p;
    return detail::sample_loss(rows, log_det, 0, data.size(), constant);
}

struct MarginalEstimate {
    Eigen::VectorXd marginals;         // per-dimension KL(q(z_i) || N(0,1))
    std::vector<bool> degenerate;      // constant dimensions flagged, marginal = +inf
};

/// Estimates each dimension's marginal KL to N(0,1) with a quantile-binned
/// histogram: bin edges at empirical quantiles (equal data mass) compared
/// against the standard-normal mass of each bin.
inline MarginalEstimate marginal_dependence_estimate(const Dataset& data, int bins = 128) {
    if (bins < 2) throw std::invalid_argument("marginal_dependence_estimate: bins must be >= 2");
    int d = data.dim();
    long n = data.size();
    MarginalEstimate out;
    out.marginals.resize(d);
    out.degenerate.assign(static_cast<std::size_t>(d), false);
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int j = 0; j < d; ++j) {
        for (long i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = data.rows(i, j);
        std::sort(col.begin(), col.end());
        if (col.front() == col.back()) {
            out.degenerate[static_cast<std::size_t>(j)] = true;
            out.marginals(j) = std::numeric_limits<double>::infinity();
            continue;
        }
        double kl = 0.0;
        std::size_t lo = 0;
        double prev_cdf = 0.0;
        for (int k = 1; k <= bins; ++k) {
            std::size_t hi;
            double edge_cdf;
            if (k == bins) {
                hi = col.size();
                edge_cdf = 1.0;
            } else {
                double edge = empirical_quantile(col, static_cast<double>(k) / bins);
                hi = static_cast<std::size_t>(std::upper_bound(col.begin(), col.end(), edge) - col.begin());
                edge_cdf = normal_cdf(edge);
            }
            double p = static_cast<double>(hi - lo) / static_cast<double>(n);
            double q = edge_cdf - prev_cdf + 1e-12;
            if (p > 0.0) kl += p * std::log(p / q);
            prev_cdf = edge_cdf;
            lo = hi;
        }
        out.marginals(j) = kl;
    }
    return out;
}

struct Standardized {
    Dataset data;
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
    double log_std_sum;  // entropy shift: H[p_std] = H[p] - log_std_sum
};

/// Zero-mean, unit-standard-deviation normalization per dimension.
inline Standardized standardize(const Dataset& data) {
    Standardized out;
    out.mean = data.rows.colwise().mean();
    Eigen::MatrixXd centered = data.rows.rowwise() - out.mean.transpose();
    out.stddev = (centered.array().square().colwise().mean()).sqrt();
    if ((out.stddev.array() <= 0.0).any())
        throw std::domain_error("standardize: a dimension has zero standard deviation");
    out.data.rows = centered * out.stddev.cwiseInverse().asDiagonal();
    out.data.provenance = data.provenance + "|standardized";
    out.data.seed = data.seed;
    out.log_std_sum = out.stddev.array().log().sum();
    return out;
}

// ---------------------------------------------------------------------------
// Model container format: magic, version, dim, block count, then per block
// the row-major rotation and per-dimension spline knot arrays.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace detail

inline constexpr char kModelMagic[8] = {'G', 'F', 'M', 'O', 'D', 'E', 'L', '1'};

inline void save_model(const GaussianizationModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_model: cannot open " + path);
    os.write(kModelMagic, 8);
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(model.dim()));
    detail::write_u32(os, static_cast<std::uint32_t>(model.block_count()));
    for (const auto& block : model.blocks()) {
        const auto& q = block.rotation.matrix();
        for (int i = 0; i < q.rows(); ++i)
            for (int j = 0; j < q.cols(); ++j) detail::write_f64(os, q(i, j));
        for (const auto& t : block.transforms) {
            detail::write_u32(os, static_cast<std::uint32_t>(t.knot_count()));
            for (double v : t.knots_x()) detail::write_f64(os, v);
            for (double v : t.knots_y()) detail::write_f64(os, v);
            for (double v : t.derivatives()) detail::write_f64(os, v);
            detail::write_f64(os, t.alpha_inner());
            detail::write_f64(os, t.alpha_tail());
        }
    }
    if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

inline GaussianizationModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || !std::equal(magic, magic + 8, kModelMagic))
        throw std::runtime_error("load_model: bad magic in " + path);
    std::uint32_t version = detail::read_u32(is);
    if (version != 1u) throw std::runtime_error("load_model: unsupported version");
    int dim = static_cast<int>(detail::read_u32(is));
    std::uint32_t n_blocks = detail::read_u32(is);
    GaussianizationModel model(dim);
    for (std::uint32_t b = 0; b < n_blocks; ++b) {
        Eigen::MatrixXd q(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) q(i, j) = detail::read_f64(is);
        std::vector<MonotoneTransform1D> transforms;
        transforms.reserve(static_cast<std::size_t>(dim));
        for (int j = 0; j < dim; ++j) {
            std::uint32_t m = detail::read_u32(is);
            std::vector<double> kx(m), ky(m), kd(m);
            for (auto& v : kx) v = detail::read_f64(is);
            for (auto& v : ky) v = detail::read_f64(is);
            for (auto& v : kd) v = detail::read_f64(is);
            double a1 = detail::read_f64(is);
            double a2 = detail::read_f64(is);
            transforms.emplace_back(std::move(kx), std::move(ky), std::move(kd), a1, a2);
        }
        if (!is) throw std::runtime_error("load_model: truncated file " + path);
        model.append(Block{OrthogonalMatrix(std::move(q)), std::move(transforms)});
    }
    return model;
}

}  // namespace gflow
