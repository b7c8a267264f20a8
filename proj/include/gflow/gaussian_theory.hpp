#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gflow/rotations.hpp"

namespace gflow {

/// Symmetric positive-definite covariance tracked through exact block
/// updates. Symmetry is validated at construction; positive definiteness
/// is checked where it is actually consumed (Cholesky).
class CovarianceState {
  public:
    explicit CovarianceState(Eigen::MatrixXd sigma) : sigma_(std::move(sigma)) {
        if (sigma_.rows() < 1 || sigma_.rows() != sigma_.cols())
            throw std::invalid_argument("CovarianceState: matrix must be square and non-empty");
        if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() >= 1e-12)
            throw std::invalid_argument("CovarianceState: matrix is not symmetric");
    }

    static CovarianceState identity(int dim) {
        return CovarianceState(Eigen::MatrixXd::Identity(dim, dim));
    }

    /// Diagonal covariance from an eigenvalue spectrum.
    static CovarianceState from_spectrum(const Spectrum& s) {
        return CovarianceState(Eigen::MatrixXd(s.eigenvalues.asDiagonal()));
    }

    /// Q^T Diag(lambda) Q -- a rotated variant of the spectrum.
    static CovarianceState from_spectrum(const Spectrum& s, const OrthogonalMatrix& q) {
        Eigen::MatrixXd m = q.matrix().transpose() * s.eigenvalues.asDiagonal() * q.matrix();
        m = ((m + m.transpose()) / 2.0).eval();
        return CovarianceState(std::move(m));
    }

    int dim() const { return static_cast<int>(sigma_.rows()); }
    const Eigen::MatrixXd& matrix() const { return sigma_; }
    double trace() const { return sigma_.trace(); }
    bool is_normalized(double tol = 1e-9) const {
        return std::abs(trace() - static_cast<double>(dim())) < tol;
    }

  private:
    Eigen::MatrixXd sigma_;
};

/// Q Sigma Q^T. Similarity transform: eigenvalues (and hence the loss)
/// are preserved.
inline CovarianceState rotate_covariance(const CovarianceState& sigma, const OrthogonalMatrix& q) {
    if (sigma.dim() != q.dim()) throw std::invalid_argument("rotate_covariance: dimension mismatch");
    Eigen::MatrixXd m = q.matrix() * sigma.matrix() * q.matrix().transpose();
    m = ((m + m.transpose()) / 2.0).eval();
    return CovarianceState(std::move(m));
}

namespace detail {

/// log det of an SPD matrix via Cholesky; throws on non-SPD input.
inline double log_det_spd(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::domain_error("log_det_spd: matrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

/// KL(N(0, Sigma) || N(0, I)) = (tr Sigma - D - log det Sigma) / 2.
/// Under trace normalization this reduces to -log det Sigma / 2.
inline double gaussian_kl(const CovarianceState& sigma) {
    double d = static_cast<double>(sigma.dim());
    return 0.5 * (sigma.trace() - d - detail::log_det_spd(sigma.matrix()));
}

struct ExactBlockResult {
    CovarianceState covariance;
    /// Loss removed by the block: L' = L - loss_drop with
    /// loss_drop = -log det S / 2 >= 0, S = Diag(Q Sigma Q^T).
    double loss_drop;
};

/// Exact effect of one Gaussianization block on Gaussian input: rotate,
/// then rescale every axis to unit variance. The output covariance is
/// S^{-1/2} Q Sigma Q^T S^{-1/2} with S the diagonal of the rotated
/// covariance; its diagonal is one by construction.
inline ExactBlockResult apply_block_exact(const CovarianceState& sigma, const OrthogonalMatrix& q) {
    if (sigma.dim() != q.dim()) throw std::invalid_argument("apply_block_exact: dimension mismatch");
    int d = sigma.dim();
    Eigen::MatrixXd m = q.matrix() * sigma.matrix() * q.matrix().transpose();
    m = ((m + m.transpose()) / 2.0).eval();
    Eigen::VectorXd s = m.diagonal();
    if ((s.array() <= 0.0).any())
        throw std::domain_error("apply_block_exact: rotated covariance has a non-positive diagonal");
    Eigen::VectorXd inv_sqrt = s.array().rsqrt();
    Eigen::MatrixXd next = inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();
    for (int i = 0; i < d; ++i) next(i, i) = 1.0;
    next = ((next + next.transpose()) / 2.0).eval();
    double drop = -0.5 * s.array().log().sum();
    return ExactBlockResult{CovarianceState(std::move(next)), drop};
}

/// Expected per-layer loss ratio for iterative Gaussianization with random
/// rotations in the low-loss regime: 1 - 2/(D+2).
inline double iterative_rate_factor(int dim) {
    if (dim < 1) throw std::invalid_argument("iterative_rate_factor: dim must be >= 1");
    return 1.0 - 2.0 / (static_cast<double>(dim) + 2.0);
}

struct RequiredLayers {
    double exact;       // log(ratio) / log(1 - 2/(D+2))
    double linearized;  // log(1/ratio) * (D+1)/2
};

/// Layers needed to shrink the loss by `loss_ratio` at the theoretical
/// rate; reports both the exact form and its linearization.
inline RequiredLayers gaussianization_required_layers(int dim, double loss_ratio) {
    if (dim < 1) throw std::invalid_argument("gaussianization_required_layers: dim must be >= 1");
    if (!(loss_ratio > 0.0 && loss_ratio < 1.0))
        throw std::domain_error("gaussianization_required_layers: loss_ratio must be in (0,1)");
    double exact = std::log(loss_ratio) / std::log(iterative_rate_factor(dim));
    double linearized = -std::log(loss_ratio) * (static_cast<double>(dim) + 1.0) / 2.0;
    return RequiredLayers{exact, linearized};
}

/// Parameter-counting lower bound on layers to represent an arbitrary
/// covariance with random rotations: (D+1)/2.
inline double param_count_lower_bound(int dim) {
    if (dim < 1) throw std::invalid_argument("param_count_lower_bound: dim must be >= 1");
    return (static_cast<double>(dim) + 1.0) / 2.0;
}

/// Same bound with learned rotations carrying k*D parameters each:
/// D / (2(k+1)).
inline double learned_rotation_lower_bound(int dim, double k) {
    if (dim < 1) throw std::invalid_argument("learned_rotation_lower_bound: dim must be >= 1");
    if (k < 0.0) throw std::invalid_argument("learned_rotation_lower_bound: k must be >= 0");
    return static_cast<double>(dim) / (2.0 * (k + 1.0));
}

inline double loss_from_geometric_mean(double g, int dim) {
    if (!(g > 0.0)) throw std::domain_error("loss_from_geometric_mean: g must be > 0");
    return -0.5 * static_cast<double>(dim) * std::log(g);
}

inline double geometric_mean_from_loss(double loss, int dim) {
    return std::exp(-2.0 * loss / static_cast<double>(dim));
}

/// Largest possible condition number of a spectrum with trace D and
/// geometric mean g: (1 + sqrt(1-g^D)) / (1 - sqrt(1-g^D)).
inline double kappa_upper_bound(double g, int dim) {
    if (!(g > 0.0 && g <= 1.0)) throw std::domain_error("kappa_upper_bound: g must be in (0,1]");
    if (g == 1.0) return 1.0;
    double root = std::sqrt(-std::expm1(static_cast<double>(dim) * std::log(g)));
    return (1.0 + root) / (1.0 - root);
}

/// Per-layer convergence rate of coupling blocks at non-Standardness
/// `loss`. Uses expm1/log1p so the small-loss regime stays accurate.
inline double coupling_rate(double loss, int dim) {
    if (dim < 2) throw std::invalid_argument("coupling_rate: dim must be >= 2");
    if (!(loss > 0.0))
        throw std::domain_error("coupling_rate: loss must be > 0; use coupling_rate_low_loss_limit");
    double d = static_cast<double>(dim);
    double one_minus_g = -std::expm1(-2.0 * loss / d);   // 1 - g
    double root = std::sqrt(-std::expm1(-2.0 * loss));   // sqrt(1 - g^D)
    double factor = d * d / ((d - 1.0) * (d + 2.0));
    double inner = factor * (1.0 - root) / (1.0 + root) * one_minus_g;
    return 1.0 + (d / (4.0 * loss)) * std::log1p(-inner);
}

/// Limit of coupling_rate as the loss vanishes:
/// (D(D+2) - 4) / (2 (D-1) (D+2)), which lies in [1/2, 5/9].
inline double coupling_rate_low_loss_limit(int dim) {
    if (dim < 2) throw std::invalid_argument("coupling_rate_low_loss_limit: dim must be >= 2");
    double d = static_cast<double>(dim);
    return (d * (d + 2.0) - 4.0) / (2.0 * (d - 1.0) * (d + 2.0));
}

/// Joint limit loss -> 0, D -> infinity of the coupling rate.
inline constexpr double coupling_rate_limit_high_dim() { return 0.5; }

/// Coupling blocks needed to shrink the loss by `loss_ratio`:
/// log(1/ratio) / log 2.
inline double coupling_required_layers(double loss_ratio) {
    if (!(loss_ratio > 0.0 && loss_ratio < 1.0))
        throw std::domain_error("coupling_required_layers: loss_ratio must be in (0,1)");
    return -std::log(loss_ratio) / std::log(2.0);
}

inline constexpr double coupling_lower_bound_blocks() { return 2.0; }
inline constexpr double coupling_upper_bound_blocks() { return 48.0; }

struct AmGmBracket {
    double lower;  // Var[lambda] / (2 lambda_max)
    double value;  // mean(lambda) - geometric mean
    double upper;  // Var[lambda] / (2 lambda_min)
};

/// Arithmetic-geometric mean bracket on a covariance spectrum.
inline AmGmBracket amgm_bracket(const Spectrum& s) {
    double var = s.variance();
    double lo = var / (2.0 * s.eigenvalues.maxCoeff());
    double hi = var / (2.0 * s.eigenvalues.minCoeff());
    double value = s.eigenvalues.mean() - s.geometric_mean();
    return AmGmBracket{lo, value, hi};
}

struct GaussianDecomposition {
    double dependence;         // total loss minus sum of marginal losses
    Eigen::VectorXd marginals; // J_i = (Sigma_ii - 1 - log Sigma_ii) / 2
};

/// Splits the Gaussian loss into marginal losses and the dependence term.
/// The dependence is the part no dimension-wise transform can reduce.
inline GaussianDecomposition pythagorean_decomposition_gaussian(const CovarianceState& sigma) {
    int d = sigma.dim();
    Eigen::VectorXd marginals(d);
    for (int i = 0; i < d; ++i) {
        double v = sigma.matrix()(i, i);
        if (!(v > 0.0)) throw std::domain_error("pythagorean_decomposition_gaussian: non-positive variance");
        marginals(i) = 0.5 * (v - 1.0 - std::log(v));
    }
    double dependence = gaussian_kl(sigma) - marginals.sum();
    return GaussianDecomposition{dependence, std::move(marginals)};
}

enum class BoundKind {
    gaussianization_lower,   // parameter-counting layer bound
    learned_rotation_lower,  // same with k*D-parameter rotations
    iterative_rate,          // per-layer rate factor
    coupling_lower,          // coupling blocks, lower
    coupling_upper_48,       // coupling blocks, upper
    coupling_rate,           // coupling per-layer rate at given loss
};

struct TheoryBound {
    BoundKind kind;
    int dim;
    double value;
    double k = 0.0;
    double loss = std::numeric_limits<double>::quiet_NaN();
    double loss_ratio = std::numeric_limits<double>::quiet_NaN();
};

/// All bound evaluations for one (D, k, loss, ratio) query; the CLI's
/// `theory` subcommand renders this list.
inline std::vector<TheoryBound> evaluate_bounds(int dim, double k, double loss, double loss_ratio) {
    std::vector<TheoryBound> out;
    out.push_back({BoundKind::gaussianization_lower, dim, param_count_lower_bound(dim)});
    out.push_back({BoundKind::learned_rotation_lower, dim, learned_rotation_lower_bound(dim, k), k});
    out.push_back({BoundKind::iterative_rate, dim, iterative_rate_factor(dim)});
    out.push_back({BoundKind::coupling_lower, dim, coupling_lower_bound_blocks()});
    out.push_back({BoundKind::coupling_upper_48, dim, coupling_upper_bound_blocks()});
    double rate = (loss > 0.0 && dim >= 2) ? coupling_rate(loss, dim)
                                           : (dim >= 2 ? coupling_rate_low_loss_limit(dim)
                                                       : std::numeric_limits<double>::quiet_NaN());
    out.push_back({BoundKind::coupling_rate, dim, rate, 0.0, loss, loss_ratio});
    return out;
}

}  // namespace gflow
