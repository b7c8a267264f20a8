// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Scales and tolerances are fixed here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gflow/distributions.hpp"
#include "gflow/experiments.hpp"
#include "gflow/gaussian_theory.hpp"
#include "gflow/model.hpp"
#include "gflow/rotations.hpp"
#include "gflow/stats.hpp"

using namespace gflow;

namespace {

struct Check {
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }

    template <typename T>
    std::string str(const T& v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }
};

double e_inv() { return std::exp(-1.0); }

// ---------------------------------------------------------------------------
// criterion 1: Thm. 2 rate bound on the exact simulator

void criterion_rate_bound(Check& check) {
    Rng rng = make_rng(10001);
    for (int dim : {8, 32, 128}) {
        double rate = iterative_rate_factor(dim);
        double margin = 0.05 * (2.0 / (dim + 2.0));
        for (auto c : {SpectrumCase::single_varying, SpectrumCase::all_but_one,
                       SpectrumCase::all_but_one_shifted, SpectrumCase::half_half,
                       SpectrumCase::uniform_random, SpectrumCase::log_uniform_random}) {
            double alpha = (c == SpectrumCase::single_varying || c == SpectrumCase::all_but_one)
                               ? 4.0
                               : 0.25;
            auto spectrum = make_spectrum(c, dim, alpha, 1e-3, rng);
            CovarianceState sigma = CovarianceState::from_spectrum(spectrum, sample_haar(dim, rng));
            double loss = gaussian_kl(sigma);
            int layers = 0;
            while (loss > 1e-3 && layers < 400 * dim) {
                auto step = apply_block_exact(sigma, sample_haar(dim, rng));
                sigma = std::move(step.covariance);
                loss -= step.loss_drop;
                ++layers;
            }
            check.require(loss <= 1e-3, "criterion 1: case did not reach the low-loss regime");
            std::vector<double> ratios;
            ratios.reserve(1000);
            for (int k = 0; k < 1000; ++k) {
                double drop = apply_block_exact(sigma, sample_haar(dim, rng)).loss_drop;
                ratios.push_back((loss - drop) / loss);
            }
            auto mv = mean_variance(ratios);
            check.require(mv.mean >= rate - margin,
                          "criterion 1: D=" + std::to_string(dim) + " " + spectrum_case_name(c) +
                              ": mean ratio " + check.str(mv.mean) + " < " + check.str(rate - margin));
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 2: Fig. 1 scaling of the full covariance sweep

void criterion_gaussian_scaling(Check& check) {
    GaussianExperimentConfig config;
    config.master_seed = 20001;
    config.alphas_per_side = 3;  // keeps the single-threaded sweep within budget
    config.random_draws = 3;
    config.jobs = 1;
    config.record_layers = false;
    config.verify_bookkeeping = true;
    auto records = run_gaussian_experiment(config);

    std::map<int, std::vector<double>> required_by_dim;
    std::map<int, int> compliant, total;
    double max_final_loss = 0.0;
    for (const auto& r : records) {
        if (r.layer != -1) continue;
        max_final_loss = std::max(max_final_loss, r.loss);
        double bound = gaussianization_required_layers(r.dim, e_inv()).exact;
        total[r.dim]++;
        if (std::isfinite(r.required_layers)) {
            required_by_dim[r.dim].push_back(r.required_layers);
            if (r.required_layers >= 0.98 * bound) compliant[r.dim]++;
        }
    }
    check.require(!records.empty(), "criterion 2: no records produced");
    check.require(max_final_loss < 1e-1,
                  "criterion 2: final loss " + check.str(max_final_loss) + " above the 1e-1 band");
    for (auto& [dim, n] : total) {
        double fraction = static_cast<double>(compliant[dim]) / static_cast<double>(n);
        check.require(fraction >= 0.90, "criterion 2: D=" + std::to_string(dim) + " compliance " +
                                            check.str(fraction) + " < 0.90");
        double med = median(required_by_dim[dim]);
        double bound = gaussianization_required_layers(dim, e_inv()).exact;
        check.require(med >= 0.98 * bound, "criterion 2: D=" + std::to_string(dim) + " median " +
                                               check.str(med) + " below 0.98 * " + check.str(bound));
    }
    auto fit = fit_scaling_exponent(records);
    check.require(fit.exponent >= 0.85 && fit.exponent <= 1.15,
                  "criterion 2: scaling exponent " + check.str(fit.exponent) + " outside [0.85, 1.15]");
    std::fprintf(stderr, "  criterion 2: exponent %.4f over %zu summary rows\n", fit.exponent,
                 required_by_dim.size());
}

// ---------------------------------------------------------------------------
// criterion 3: coupling theory curve

void criterion_coupling_curve(Check& check) {
    check.require(coupling_rate_limit_high_dim() == 0.5, "criterion 3: high-dim limit is not 0.5");
    for (double d = 2.0; d <= 1000.0; d *= 1.2599210498948732) {
        int dim = static_cast<int>(std::lround(d));
        double g = coupling_rate_low_loss_limit(dim);
        check.require(g >= 0.5 - 1e-15 && g <= 5.0 / 9.0 + 1e-15,
                      "criterion 3: low-loss limit at D=" + std::to_string(dim) + " is " + check.str(g));
        double full = coupling_rate(1e-10, dim);
        check.require(std::abs(full - g) < 1e-4,
                      "criterion 3: full formula at tiny loss deviates from the limit at D=" +
                          std::to_string(dim));
    }
    check.require(std::abs(coupling_required_layers(e_inv()) - 1.4427) <= 1e-4,
                  "criterion 3: coupling_required_layers(e^-1) != 1.4427 +- 1e-4");
}

// ---------------------------------------------------------------------------
// criterion 4: exact simulator vs sample-based training

void criterion_exact_vs_sample(Check& check) {
    Rng rng = make_rng(40001);
    auto spectrum = make_spectrum(SpectrumCase::half_half, 8, 0.5, 1e-3, rng);
    auto q0 = sample_haar(8, rng);
    auto gaussian = gaussian_dataset(spectrum, q0, 1000000, rng);
    CovarianceState sigma(gaussian.covariance);

    Rng train_rng = make_rng(40002);
    auto trained = train_block(gaussian.data, 128, 0.0, 0.0, train_rng);
    auto exact = apply_block_exact(sigma, trained.block.rotation);

    Eigen::MatrixXd centered =
        trained.transformed.rows.rowwise() - trained.transformed.rows.colwise().mean();
    Eigen::MatrixXd empirical = centered.transpose() * centered / static_cast<double>(centered.rows());
    double cov_error = (empirical - exact.covariance.matrix()).cwiseAbs().maxCoeff();
    check.require(cov_error < 0.01,
                  "criterion 4: output covariance off by " + check.str(cov_error));

    double constant = 0.5 * 8.0 * kLogTwoPi - gaussian.entropy;
    double before = 0.0, after = 0.0;
    for (long i = 0; i < gaussian.data.size(); ++i) {
        before += 0.5 * gaussian.data.rows.row(i).squaredNorm();
        after += 0.5 * trained.transformed.rows.row(i).squaredNorm() - trained.log_det(i);
    }
    before = before / static_cast<double>(gaussian.data.size()) + constant;
    after = after / static_cast<double>(gaussian.data.size()) + constant;
    double drop = before - after;
    check.require(exact.loss_drop > 0.05,
                  "criterion 4: chosen rotation removes too little loss to measure at 5%");
    check.require(std::abs(drop - exact.loss_drop) <= 0.05 * exact.loss_drop,
                  "criterion 4: empirical loss drop " + check.str(drop) + " vs exact " +
                      check.str(exact.loss_drop));
}

// ---------------------------------------------------------------------------
// criterion 5: toy-family scaling

void criterion_toy_scaling(Check& check) {
    ToyExperimentConfig config;
    config.master_seed = 50001;
    config.jobs = static_cast<int>(default_jobs());
    config.record_layers = false;
    auto records = run_toy_experiment(config);

    std::map<std::string, std::map<int, std::vector<double>>> by_case;
    for (const auto& r : records)
        if (r.layer == -1 && std::isfinite(r.required_layers))
            by_case[r.case_label][r.dim].push_back(r.required_layers);

    std::map<std::string, double> exponent;
    std::map<std::string, std::map<int, double>> medians;
    for (auto& [label, groups] : by_case) {
        std::vector<std::pair<double, double>> points;
        for (auto& [dim, values] : groups) {
            medians[label][dim] = median(values);
            points.emplace_back(static_cast<double>(dim), medians[label][dim]);
        }
        check.require(points.size() == 4, "criterion 5: " + label + " lost dimension groups");
        exponent[label] = fit_power_law(points).exponent;
        std::fprintf(stderr, "  criterion 5: %s exponent %.4f (medians", label.c_str(), exponent[label]);
        for (auto& [dim, med] : medians[label]) std::fprintf(stderr, " %d:%.1f", dim, med);
        std::fprintf(stderr, ")\n");
    }
    for (const auto* label : {"case1", "case3"}) {
        check.require(exponent.count(label) && exponent[label] >= 0.7 && exponent[label] <= 1.3,
                      std::string("criterion 5: ") + label + " exponent " +
                          check.str(exponent[label]) + " outside [0.7, 1.3]");
    }
    check.require(exponent.count("case2") && exponent["case2"] < 0.35,
                  "criterion 5: case2 exponent " + check.str(exponent["case2"]) + " >= 0.35");
    if (medians.count("case2") && medians["case2"].count(16) && medians["case2"].count(128)) {
        double ratio = medians["case2"][128] / medians["case2"][16];
        check.require(ratio < 2.0, "criterion 5: case2 D=128/D=16 ratio " + check.str(ratio) + " >= 2");
    } else {
        check.require(false, "criterion 5: case2 medians missing");
    }
}

// ---------------------------------------------------------------------------
// criterion 6: spurious projection at full scale and at the CI preset

void criterion_spurious(Check& check) {
    auto run_scale = [&](long n, int dim, std::uint64_t seed, double& final_w2, double& baseline) {
        Rng data_rng = make_rng(derive_stream(seed, 1));
        Rng target_rng = make_rng(derive_stream(seed, 2));
        Rng baseline_rng = make_rng(derive_stream(seed, 3));
        Rng opt_rng = make_rng(derive_stream(seed, 4));
        Eigen::MatrixXf data(n, dim);
        std::normal_distribution<float> normal;
        for (long i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) data(i, j) = normal(data_rng);
        BimodalTarget target;
        auto y = bimodal_sample(target, n, target_rng);
        baseline = spurious_random_baseline(data, y, 16, baseline_rng);
        SpuriousOptions options;
        auto result = find_spurious_projection(data, y, options, opt_rng);
        check.require(std::abs(result.w.norm() - 1.0) < 1e-10, "criterion 6: |w| != 1");
        check.require(result.w2_final < result.w2_initial, "criterion 6: no improvement over init");
        final_w2 = result.w2_final;
    };

    double final_full = 0.0, baseline_full = 0.0;
    run_scale(60000, 3072, 60001, final_full, baseline_full);
    std::fprintf(stderr, "  criterion 6: full scale w2 final %.4f baseline %.4f\n", final_full,
                 baseline_full);
    check.require(final_full >= 0.015 && final_full <= 0.045,
                  "criterion 6: full-scale final W2 " + check.str(final_full) +
                      " outside [0.015, 0.045]");
    check.require(baseline_full >= 0.05 && baseline_full <= 0.15,
                  "criterion 6: random baseline " + check.str(baseline_full) +
                      " outside [0.05, 0.15]");

    double final_ci = 0.0, baseline_ci = 0.0;
    run_scale(10000, 512, 60002, final_ci, baseline_ci);
    std::fprintf(stderr, "  criterion 6: ci scale w2 final %.4f baseline %.4f\n", final_ci, baseline_ci);
    check.require(final_ci < 0.5 * baseline_ci,
                  "criterion 6: CI preset final " + check.str(final_ci) + " not below half of " +
                      check.str(baseline_ci));
}

// ---------------------------------------------------------------------------
// criterion 7: identity and property suites at spec scale

void criterion_identities(Check& check) {
    // Haar mean and variance identities over 1e5 draws
    {
        Rng rng = make_rng(70001);
        for (int dim : {4, 16, 64}) {
            auto spectrum = make_spectrum(SpectrumCase::uniform_random, dim, 0.5, 1e-3, rng);
            CovarianceState sigma = CovarianceState::from_spectrum(spectrum);
            const int draws = 100000;
            std::vector<double> entry;
            entry.reserve(draws);
            for (int k = 0; k < draws; ++k) {
                auto q = sample_haar(dim, rng);
                Eigen::VectorXd row = q.matrix().row(0);
                entry.push_back(row.dot(sigma.matrix() * row));
            }
            auto mv = mean_variance(entry);
            check.require(std::abs(mv.mean - 1.0) < 3.0 * mv.std_error_of_mean(),
                          "criterion 7: Haar mean identity failed at D=" + std::to_string(dim));
            double expected = 2.0 / (dim + 2.0) * spectrum.variance();
            double m4 = 0.0;
            for (double v : entry) m4 += std::pow(v - mv.mean, 4);
            m4 /= static_cast<double>(entry.size());
            double se = std::sqrt((m4 - mv.variance * mv.variance) / static_cast<double>(entry.size()));
            check.require(std::abs(mv.variance - expected) < 3.0 * se,
                          "criterion 7: Haar variance identity failed at D=" + std::to_string(dim) +
                              " (" + check.str(mv.variance) + " vs " + check.str(expected) + ")");
        }
    }
    // AM-GM bracket sweep
    {
        Rng rng = make_rng(70002);
        bool ok = true;
        for (int trial = 0; trial < 10000; ++trial) {
            auto s = make_spectrum(SpectrumCase::uniform_random, 8, 0.5, 1e-3, rng);
            auto b = amgm_bracket(s);
            ok = ok && (b.lower <= b.value + 1e-12) && (b.value <= b.upper + 1e-12);
        }
        check.require(ok, "criterion 7: AM-GM bracket violated");
    }
    // kappa bound brute force
    {
        Rng rng = make_rng(70003);
        bool ok = true;
        for (int trial = 0; trial < 10000; ++trial) {
            auto s = make_spectrum(SpectrumCase::log_uniform_random, 6, 0.5, 1e-2, rng);
            double kappa = s.eigenvalues.maxCoeff() / s.eigenvalues.minCoeff();
            ok = ok && (kappa <= kappa_upper_bound(s.geometric_mean(), 6) * (1.0 + 1e-9));
        }
        check.require(ok, "criterion 7: kappa bound violated");
    }
    // Pythagorean decomposition on Gaussian fixtures
    {
        Rng rng = make_rng(70004);
        Eigen::MatrixXd corr(2, 2);
        corr << 1.0, 0.5, 0.5, 1.0;
        auto d = pythagorean_decomposition_gaussian(CovarianceState(corr));
        check.require(std::abs(d.marginals.sum()) < 1e-12 &&
                          std::abs(d.dependence - 0.14384103622589045) < 1e-10,
                      "criterion 7: unit-diagonal decomposition wrong");
        bool ok = true;
        for (int trial = 0; trial < 500; ++trial) {
            auto s = make_spectrum(SpectrumCase::uniform_random, 6, 0.5, 1e-3, rng);
            auto sigma = CovarianceState::from_spectrum(s, sample_haar(6, rng));
            auto dec = pythagorean_decomposition_gaussian(sigma);
            double total = gaussian_kl(sigma);
            ok = ok && dec.dependence >= -1e-9 &&
                 std::abs(dec.dependence + dec.marginals.sum() - total) < 1e-9;
        }
        check.require(ok, "criterion 7: Pythagorean decomposition violated on random fixtures");
    }
    // spline inverse round-trip
    {
        Rng rng = make_rng(70005);
        std::normal_distribution<double> normal(0.4, 1.7);
        std::vector<double> samples(50000);
        for (auto& v : samples) v = normal(rng);
        auto t = MonotoneTransform1D::fit_from_samples(samples, 128, 0.9, 0.99);
        std::uniform_real_distribution<double> u(-6.0, 6.0);
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            double y = u(rng);
            worst = std::max(worst, std::abs(t.forward(t.inverse(y)).y - y));
        }
        check.require(worst < 1e-9, "criterion 7: spline round-trip error " + check.str(worst));
    }
    // log-det against a finite-difference Jacobian determinant
    {
        Rng rng = make_rng(70006);
        std::normal_distribution<double> normal;
        Dataset data;
        data.rows.resize(20000, 2);
        for (long i = 0; i < data.rows.rows(); ++i) {
            data.rows(i, 0) = normal(rng) * 1.3 + 0.1;
            data.rows(i, 1) = std::tanh(normal(rng)) * 2.0;
        }
        TrainConfig tc;
        tc.layers = 2;
        tc.bins = 64;
        tc.alpha_inner = 0.3;
        tc.alpha_tail = 0.9;
        auto trained = train_iterative(data, tc, 2.8, rng);
        const double h = 1e-5;
        bool ok = true;
        for (int i = 0; i < 10; ++i) {
            Eigen::Vector2d x(normal(rng), normal(rng));
            Eigen::Matrix2d jac;
            for (int c = 0; c < 2; ++c) {
                Eigen::Vector2d hi = x, lo = x;
                hi(c) += h;
                lo(c) -= h;
                jac.col(c) = (trained.model.transform(hi).z - trained.model.transform(lo).z) / (2.0 * h);
            }
            double fd = std::log(std::abs(jac.determinant()));
            double an = trained.model.transform(x).log_det;
            ok = ok && std::abs(fd - an) / std::max(1e-8, std::abs(an)) < 1e-3;
        }
        check.require(ok, "criterion 7: log-det does not match finite differences");
    }
}

// ---------------------------------------------------------------------------
// criterion 8: determinism across job counts

void criterion_determinism(Check& check) {
    {
        GaussianExperimentConfig config;
        config.master_seed = 80001;
        config.dims = {10, 23};
        config.rotations = 2;
        config.layers_factor = 3;
        config.alphas_per_side = 2;
        config.random_draws = 2;
        config.jobs = 1;
        auto a = run_gaussian_experiment(config);
        config.jobs = 8;
        auto b = run_gaussian_experiment(config);
        std::ostringstream ca, cb;
        write_records_csv(ca, a);
        write_records_csv(cb, b);
        check.require(ca.str() == cb.str() && !ca.str().empty(),
                      "criterion 8: gaussian CSV differs between --jobs 1 and --jobs 8");
    }
    {
        ToyExperimentConfig config;
        config.master_seed = 80002;
        config.cases = {ToyCase::all_previous, ToyCase::core_noise};
        config.dims = {6, 9};
        config.seeds = 2;
        config.samples = 1500;
        config.core = 3;
        config.layers = 3;
        config.bins = 16;
        config.entropy_mc = 10000;
        config.jobs = 1;
        auto a = run_toy_experiment(config);
        config.jobs = 8;
        auto b = run_toy_experiment(config);
        std::ostringstream ca, cb;
        write_records_csv(ca, a);
        write_records_csv(cb, b);
        check.require(ca.str() == cb.str() && !ca.str().empty(),
                      "criterion 8: toy CSV differs between --jobs 1 and --jobs 8");
    }
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void(Check&)> run;
    };
    std::vector<Criterion> criteria = {
        {1, "Thm. 2 rate bound (exact simulator)", criterion_rate_bound},
        {2, "Fig. 1 Gaussianization scaling", criterion_gaussian_scaling},
        {3, "coupling theory curve", criterion_coupling_curve},
        {4, "exact-vs-sample consistency", criterion_exact_vs_sample},
        {5, "toy scaling (Fig. 4)", criterion_toy_scaling},
        {6, "spurious projection (Fig. 3)", criterion_spurious},
        {7, "identity/property suites", criterion_identities},
        {8, "determinism across job counts", criterion_determinism},
    };

    int failed = 0;
    for (auto& criterion : criteria) {
        Check check;
        auto start = std::chrono::steady_clock::now();
        try {
            criterion.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("unexpected exception: ") + e.what());
        }
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (check.failures.empty()) {
            std::printf("[PASS] criterion %d: %s (%.1f s)\n", criterion.id, criterion.name, elapsed);
        } else {
            ++failed;
            std::printf("[FAIL] criterion %d: %s (%.1f s)\n", criterion.id, criterion.name, elapsed);
            for (const auto& f : check.failures) std::printf("       %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
