#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gflow/stats.hpp"

namespace gflow {

/// Monotone map R -> R built from a rational-quadratic spline between
/// knots, alpha-blended with the identity, and continued by linear tails
/// beyond the outermost knots.
///
/// Regions: for x inside [x_1, x_{b+1}] the map is
/// psi(x) = (1 - alpha_inner) RQ(x) + alpha_inner x. Outside, the tail
/// continues from the blended boundary value with slope
/// (1 - alpha_tail) delta_boundary + alpha_tail, which keeps psi
/// continuous and strictly increasing for any alpha pair (the raw
/// case-split form jumps at the outer knots whenever the alphas differ).
class MonotoneTransform1D {
  public:
    MonotoneTransform1D(std::vector<double> knots_x, std::vector<double> knots_y,
                        std::vector<double> derivatives, double alpha_inner, double alpha_tail)
        : x_(std::move(knots_x)), y_(std::move(knots_y)), d_(std::move(derivatives)),
          alpha_inner_(alpha_inner), alpha_tail_(alpha_tail) {
        if (x_.size() < 2 || x_.size() != y_.size() || x_.size() != d_.size())
            throw std::invalid_argument("MonotoneTransform1D: need >= 2 knots with matching arrays");
        for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
            if (!(x_[i] < x_[i + 1])) throw std::invalid_argument("MonotoneTransform1D: x knots must strictly increase");
            if (!(y_[i] < y_[i + 1])) throw std::invalid_argument("MonotoneTransform1D: y knots must strictly increase");
        }
        for (double d : d_)
            if (!(d > 0.0)) throw std::invalid_argument("MonotoneTransform1D: derivatives must be positive");
        if (!(alpha_inner_ >= 0.0 && alpha_inner_ <= 1.0) || !(alpha_tail_ >= 0.0 && alpha_tail_ <= 1.0))
            throw std::invalid_argument("MonotoneTransform1D: alphas must be in [0,1]");
        lo_value_ = (1.0 - alpha_inner_) * y_.front() + alpha_inner_ * x_.front();
        hi_value_ = (1.0 - alpha_inner_) * y_.back() + alpha_inner_ * x_.back();
        lo_slope_ = (1.0 - alpha_tail_) * d_.front() + alpha_tail_;
        hi_slope_ = (1.0 - alpha_tail_) * d_.back() + alpha_tail_;
    }

    /// Fits the transform to samples: x-knots at the empirical quantiles of
    /// the data at levels k/(b+2), y-knots at the standard-normal quantiles
    /// of the same levels, inner derivatives by finite differences, boundary
    /// derivatives one (identity tails).
    static MonotoneTransform1D fit_from_samples(std::span<const double> samples, int bins,
                                                double alpha_inner, double alpha_tail) {
        if (bins < 2) throw std::invalid_argument("fit_from_samples: bins must be >= 2");
        if (samples.size() < static_cast<std::size_t>(bins + 1))
            throw std::invalid_argument("fit_from_samples: too few samples");
        std::vector<double> sorted(samples.begin(), samples.end());
        std::sort(sorted.begin(), sorted.end());

        int n_knots = bins + 1;
        std::vector<double> kx, ky;
        kx.reserve(n_knots);
        ky.reserve(n_knots);
        for (int k = 1; k <= n_knots; ++k) {
            double level = static_cast<double>(k) / static_cast<double>(bins + 2);
            kx.push_back(empirical_quantile(sorted, level));
            ky.push_back(normal_quantile(level));
        }
        // Merge knots that collide (discrete data); the merged knot keeps
        // the mean normal quantile of its group.
        std::vector<double> mx, my;
        std::size_t i = 0;
        while (i < kx.size()) {
            std::size_t j = i;
            double ysum = 0.0;
            while (j < kx.size() && kx[j] - kx[i] <= 1e-12) ysum += ky[j++];
            mx.push_back(kx[i]);
            my.push_back(ysum / static_cast<double>(j - i));
            i = j;
        }
        if (mx.size() < 3) throw std::invalid_argument("fit_from_samples: fewer than 3 distinct knots");

        std::size_t m = mx.size();
        std::vector<double> deriv(m, 1.0);
        for (std::size_t k = 0; k + 2 < m; ++k) {
            double h0 = mx[k + 1] - mx[k];
            double h1 = mx[k + 2] - mx[k + 1];
            double s0 = (my[k + 1] - my[k]) / h0;
            double s1 = (my[k + 2] - my[k + 1]) / h1;
            deriv[k + 1] = (s0 * h1 + s1 * h0) / (h1 + h0);
        }
        return MonotoneTransform1D(std::move(mx), std::move(my), std::move(deriv), alpha_inner, alpha_tail);
    }

    struct Eval {
        double y;
        double log_deriv;
    };

    Eval forward(double x) const {
        if (x < x_.front()) return Eval{lo_value_ + lo_slope_ * (x - x_.front()), std::log(lo_slope_)};
        if (x > x_.back()) return Eval{hi_value_ + hi_slope_ * (x - x_.back()), std::log(hi_slope_)};
        auto [rq, rq_deriv] = rational_quadratic(x);
        double value = (1.0 - alpha_inner_) * rq + alpha_inner_ * x;
        double deriv = (1.0 - alpha_inner_) * rq_deriv + alpha_inner_;
        return Eval{value, std::log(deriv)};
    }

    /// Monotone inverse. Tail regions invert in closed form; the knot range
    /// is solved by bisection to 1e-12 bracket width.
    double inverse(double y) const {
        if (y <= lo_value_) return x_.front() + (y - lo_value_) / lo_slope_;
        if (y >= hi_value_) return x_.back() + (y - hi_value_) / hi_slope_;
        double lo = x_.front(), hi = x_.back();
        for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
            double mid = 0.5 * (lo + hi);
            if (forward(mid).y < y)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    std::size_t knot_count() const { return x_.size(); }
    const std::vector<double>& knots_x() const { return x_; }
    const std::vector<double>& knots_y() const { return y_; }
    const std::vector<double>& derivatives() const { return d_; }
    double alpha_inner() const { return alpha_inner_; }
    double alpha_tail() const { return alpha_tail_; }

  private:
    // Gregory-Delbourgo rational-quadratic interpolant and its derivative
    // on the bin containing x.
    std::pair<double, double> rational_quadratic(double x) const {
        std::size_t k = static_cast<std::size_t>(
            std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
        if (k == 0) k = 1;
        if (k >= x_.size()) k = x_.size() - 1;
        --k;  // bin index: x in [x_[k], x_[k+1]]
        double h = x_[k + 1] - x_[k];
        double s = (y_[k + 1] - y_[k]) / h;
        double xi = (x - x_[k]) / h;
        double omx = 1.0 - xi;
        double a = d_[k + 1] + d_[k] - 2.0 * s;
        double denom = s + a * xi * omx;
        double value = y_[k] + (y_[k + 1] - y_[k]) * (s * xi * xi + d_[k] * xi * omx) / denom;
        double deriv = s * s * (d_[k + 1] * xi * xi + 2.0 * s * xi * omx + d_[k] * omx * omx) / (denom * denom);
        return {value, deriv};
    }

    std::vector<double> x_, y_, d_;
    double alpha_inner_, alpha_tail_;
    double lo_value_, hi_value_, lo_slope_, hi_slope_;
};

}  // namespace gflow
