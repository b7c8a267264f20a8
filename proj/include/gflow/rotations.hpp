#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "gflow/common.hpp"

namespace gflow {

/// A spectrum that would be excluded from the covariance dataset because
/// Gaussianization has already converged on it (all eigenvalues one).
class degenerate_spectrum_error : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when the shifted spectrum construction produces a non-positive
/// eigenvalue; such spectra are rejected rather than clamped.
class spectrum_rejection_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Element of O(D). The constructor enforces orthonormality so downstream
/// code can rely on Q Q^T = I without re-checking.
class OrthogonalMatrix {
  public:
    explicit OrthogonalMatrix(Eigen::MatrixXd q) : q_(std::move(q)) {
        if (q_.rows() < 1 || q_.rows() != q_.cols())
            throw std::invalid_argument("OrthogonalMatrix: matrix must be square and non-empty");
        Eigen::MatrixXd residual = q_ * q_.transpose() - Eigen::MatrixXd::Identity(q_.rows(), q_.cols());
        if (residual.cwiseAbs().maxCoeff() >= 1e-10)
            throw std::invalid_argument("OrthogonalMatrix: matrix is not orthogonal");
    }

    int dim() const { return static_cast<int>(q_.rows()); }
    const Eigen::MatrixXd& matrix() const { return q_; }

    static OrthogonalMatrix identity(int dim) {
        return OrthogonalMatrix(Eigen::MatrixXd::Identity(dim, dim));
    }

  private:
    Eigen::MatrixXd q_;
};

/// Samples Q uniformly from O(D) under the Haar measure: QR-factorize a
/// matrix of i.i.d. standard normals and flip column signs so the diagonal
/// of R is positive (unique factorization; without the sign correction the
/// distribution is not Haar).
inline OrthogonalMatrix sample_haar(int dim, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("sample_haar: dim must be >= 1");
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) a(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    for (int j = 0; j < dim; ++j)
        if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
    return OrthogonalMatrix(std::move(q));
}

enum class SpectrumCase {
    single_varying = 1,      // lambda_1 = alpha, rest 1
    all_but_one = 2,         // lambda_1 = 1, rest alpha
    all_but_one_shifted = 3, // case 2 recentered to unit mean, positivity enforced
    half_half = 4,           // half alpha, half 1/alpha
    uniform_random = 5,      // lambda_i ~ U[0, 2]
    log_uniform_random = 6,  // lambda_i ~ log-U[lambda_min, 1/lambda_min]
};

inline const char* spectrum_case_name(SpectrumCase c) {
    switch (c) {
        case SpectrumCase::single_varying: return "case1";
        case SpectrumCase::all_but_one: return "case2";
        case SpectrumCase::all_but_one_shifted: return "case3";
        case SpectrumCase::half_half: return "case4";
        case SpectrumCase::uniform_random: return "case5";
        case SpectrumCase::log_uniform_random: return "case6";
    }
    return "unknown";
}

/// Eigenvalue spectrum of a covariance matrix, trace-normalized to D.
struct Spectrum {
    Eigen::VectorXd eigenvalues;
    SpectrumCase case_label = SpectrumCase::single_varying;
    double alpha = 0.0;

    int dim() const { return static_cast<int>(eigenvalues.size()); }

    double variance() const {
        double mean = eigenvalues.mean();
        return (eigenvalues.array() - mean).square().mean();
    }

    double geometric_mean() const { return std::exp(eigenvalues.array().log().mean()); }
};

namespace detail {

inline void check_alpha_range(double alpha, double lambda_min, bool below_one_only) {
    if (alpha == 1.0) throw degenerate_spectrum_error("make_spectrum: alpha = 1 yields the excluded identity spectrum");
    double hi = below_one_only ? 1.0 : 1.0 / lambda_min;
    if (!(alpha > lambda_min && alpha < hi))
        throw std::invalid_argument("make_spectrum: alpha out of admissible range");
}

}  // namespace detail

/// Builds one of the six eigenvalue-spectrum constructions and normalizes
/// the trace to D. The all-ones spectrum is excluded. Case 3 recenters the
/// case-2 spectrum to unit mean additively (the printed "subtract the
/// mean" map would zero the trace) and rejects results with any
/// eigenvalue <= 0.
inline Spectrum make_spectrum(SpectrumCase c, int dim, double alpha, double lambda_min, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("make_spectrum: dim must be >= 1");
    if (!(lambda_min > 0.0 && lambda_min < 1.0))
        throw std::invalid_argument("make_spectrum: lambda_min must be in (0,1)");
    Eigen::VectorXd lambda(dim);
    switch (c) {
        case SpectrumCase::single_varying:
            detail::check_alpha_range(alpha, lambda_min, false);
            lambda.setOnes();
            lambda(0) = alpha;
            break;
        case SpectrumCase::all_but_one:
            detail::check_alpha_range(alpha, lambda_min, false);
            lambda.setConstant(alpha);
            lambda(0) = 1.0;
            break;
        case SpectrumCase::all_but_one_shifted: {
            detail::check_alpha_range(alpha, lambda_min, false);
            lambda.setConstant(alpha);
            lambda(0) = 1.0;
            double shift = lambda.mean() - 1.0;
            lambda.array() -= shift;
            if ((lambda.array() <= 0.0).any())
                throw spectrum_rejection_error("make_spectrum: shifted spectrum has a non-positive eigenvalue");
            break;
        }
        case SpectrumCase::half_half:
            detail::check_alpha_range(alpha, lambda_min, true);
            for (int i = 0; i < dim; ++i) lambda(i) = (i < dim / 2) ? alpha : 1.0 / alpha;
            break;
        case SpectrumCase::uniform_random: {
            std::uniform_real_distribution<double> u(0.0, 2.0);
            do {
                for (int i = 0; i < dim; ++i) lambda(i) = u(rng);
            } while ((lambda.array() <= 0.0).any());
            break;
        }
        case SpectrumCase::log_uniform_random: {
            std::uniform_real_distribution<double> u(std::log(lambda_min), -std::log(lambda_min));
            for (int i = 0; i < dim; ++i) lambda(i) = std::exp(u(rng));
            break;
        }
    }
    lambda *= static_cast<double>(dim) / lambda.sum();
    if ((lambda.array() - 1.0).abs().maxCoeff() < 1e-12)
        throw degenerate_spectrum_error("make_spectrum: spectrum normalizes to the excluded all-ones spectrum");
    return Spectrum{std::move(lambda), c, alpha};
}

}  // namespace gflow
