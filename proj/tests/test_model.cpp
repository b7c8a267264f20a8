#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gflow/distributions.hpp"
#include "gflow/gaussian_theory.hpp"
#include "gflow/model.hpp"
#include "gflow/stats.hpp"

using namespace gflow;

namespace {

Dataset standard_normal_data(long n, int dim, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    Dataset d;
    d.rows.resize(n, dim);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) d.rows(i, j) = normal(rng);
    d.provenance = "unit-normal";
    d.seed = seed;
    return d;
}

// Three-mode 2-D Gaussian mixture with exact log density.
struct Mixture {
    std::vector<Eigen::Vector2d> means = {{0.0, 2.0}, {-2.0, -1.0}, {2.0, -1.0}};
    double sigma = 0.5;

    Dataset sample(long n, Rng& rng) const {
        std::normal_distribution<double> normal;
        Dataset d;
        d.rows.resize(n, 2);
        for (long i = 0; i < n; ++i) {
            const auto& mu = means[rng() % 3];
            d.rows(i, 0) = mu(0) + sigma * normal(rng);
            d.rows(i, 1) = mu(1) + sigma * normal(rng);
        }
        d.provenance = "mixture3";
        return d;
    }

    double log_density(const Eigen::Vector2d& x) const {
        double best = -1e300;
        std::vector<double> terms;
        for (const auto& mu : means) {
            double t = normal_log_pdf(x(0), mu(0), sigma * sigma) +
                       normal_log_pdf(x(1), mu(1), sigma * sigma) - std::log(3.0);
            terms.push_back(t);
            best = std::max(best, t);
        }
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        return best + std::log(acc);
    }

    double entropy_mc(long n, Rng& rng) const {
        std::normal_distribution<double> normal;
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
            const auto& mu = means[rng() % 3];
            Eigen::Vector2d x(mu(0) + sigma * normal(rng), mu(1) + sigma * normal(rng));
            acc += -log_density(x);
        }
        return acc / static_cast<double>(n);
    }
};

}  // namespace

TEST_CASE("train_block Gaussianizes already-Gaussian data at alpha = 0") {
    Dataset data = standard_normal_data(100000, 4, 401);
    Rng rng = make_rng(402);
    auto trained = train_block(data, 128, 0.0, 0.0, rng);
    for (int j = 0; j < 4; ++j) {
        std::vector<double> col(trained.transformed.rows.col(j).begin(),
                                trained.transformed.rows.col(j).end());
        std::sort(col.begin(), col.end());
        REQUIRE(ks_statistic(col, [](double x) { return normal_cdf(x); }) < 0.01);
    }
}

TEST_CASE("train_block needs bins + 2 samples") {
    Dataset data = standard_normal_data(20, 2, 403);
    Rng rng = make_rng(404);
    REQUIRE_THROWS_AS(train_block(data, 32, 0.0, 0.0, rng), std::invalid_argument);
}

TEST_CASE("train_block matches the exact covariance update") {
    // lighter version of the exact-vs-sample acceptance criterion
    Rng rng = make_rng(405);
    auto spectrum = make_spectrum(SpectrumCase::half_half, 4, 0.5, 1e-3, rng);
    auto rotation = sample_haar(4, rng);
    auto gaussian = gaussian_dataset(spectrum, rotation, 200000, rng);
    CovarianceState sigma(gaussian.covariance);

    Rng train_rng = make_rng(406);
    auto trained = train_block(gaussian.data, 128, 0.0, 0.0, train_rng);
    auto exact = apply_block_exact(sigma, trained.block.rotation);

    Eigen::MatrixXd centered =
        trained.transformed.rows.rowwise() - trained.transformed.rows.colwise().mean();
    Eigen::MatrixXd empirical = centered.transpose() * centered / static_cast<double>(centered.rows());
    REQUIRE((empirical - exact.covariance.matrix()).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("empty model is the identity with zero log-det") {
    GaussianizationModel model(3);
    Eigen::Vector3d x(0.3, -1.0, 2.0);
    auto r = model.transform(x);
    REQUIRE((r.z - x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(r.log_det == 0.0);
    REQUIRE((model.inverse_transform(x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transform and inverse_transform round-trip") {
    Dataset data = standard_normal_data(5000, 3, 407);
    data.rows.col(1) = data.rows.col(1).array().tanh() * 2.0;  // non-Gaussian dimension
    Rng rng = make_rng(408);
    TrainConfig config;
    config.layers = 3;
    config.bins = 32;
    config.alpha_inner = 0.5;
    config.alpha_tail = 0.9;
    auto trained = train_iterative(data, config, 3.0, rng);

    Rng probe_rng = make_rng(409);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 1000; ++i) {
        Eigen::Vector3d x(normal(probe_rng), normal(probe_rng), normal(probe_rng));
        x *= 2.0;
        auto z = trained.model.transform(x);
        Eigen::VectorXd back = trained.model.inverse_transform(z.z);
        REQUIRE((back - x).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("log-det matches the finite-difference Jacobian determinant at D=2") {
    Dataset data = standard_normal_data(20000, 2, 411);
    data.rows.col(0) = data.rows.col(0).array() * 1.5 + 0.2;
    Rng rng = make_rng(412);
    TrainConfig config;
    config.layers = 2;
    config.bins = 64;
    config.alpha_inner = 0.3;
    config.alpha_tail = 0.9;
    auto trained = train_iterative(data, config, 2.9, rng);

    Rng probe_rng = make_rng(413);
    std::normal_distribution<double> normal;
    const double h = 1e-5;
    for (int i = 0; i < 10; ++i) {
        Eigen::Vector2d x(normal(probe_rng), normal(probe_rng));
        Eigen::Matrix2d jac;
        for (int c = 0; c < 2; ++c) {
            Eigen::Vector2d hi = x, lo = x;
            hi(c) += h;
            lo(c) -= h;
            jac.col(c) = (trained.model.transform(hi).z - trained.model.transform(lo).z) / (2.0 * h);
        }
        double fd = std::log(std::abs(jac.determinant()));
        double an = trained.model.transform(x).log_det;
        REQUIRE(std::abs(fd - an) / std::max(1e-8, std::abs(an)) < 1e-3);
    }
}

TEST_CASE("kl_loss on Gaussian fixtures") {
    SECTION("standard normal with the empty model is zero within noise") {
        Dataset data = standard_normal_data(100000, 4, 415);
        GaussianizationModel model(4);
        double loss = kl_loss(model, data, 0.5 * 4 * std::log(2.0 * kPi * std::exp(1.0)));
        REQUIRE(std::abs(loss) < 3.0 * std::sqrt(4.0 / 2.0 / 100000.0));
    }
    SECTION("N(0, Sigma) with the empty model matches the closed form") {
        Rng rng = make_rng(416);
        auto spectrum = make_spectrum(SpectrumCase::uniform_random, 3, 0.5, 1e-3, rng);
        auto q = sample_haar(3, rng);
        auto gaussian = gaussian_dataset(spectrum, q, 100000, rng);
        GaussianizationModel model(3);
        double estimate = kl_loss(model, gaussian.data, gaussian.entropy);
        double exact = gaussian_kl(CovarianceState(gaussian.covariance));
        // dominant noise: the quadratic term, sd ~ sqrt(sum lambda_i^2 / 2 / n)
        double se = std::sqrt(spectrum.eigenvalues.array().square().sum() / 2.0 / 100000.0);
        REQUIRE(std::abs(estimate - exact) < 3.0 * se);
    }
}

TEST_CASE("kl_loss is invariant to a fixed pre-rotation of the data") {
    Rng rng = make_rng(417);
    auto spectrum = make_spectrum(SpectrumCase::uniform_random, 5, 0.5, 1e-3, rng);
    auto gaussian = gaussian_dataset(spectrum, sample_haar(5, rng), 60000, rng);
    auto q = sample_haar(5, rng);
    Dataset rotated;
    rotated.rows = gaussian.data.rows * q.matrix().transpose();
    rotated.provenance = gaussian.data.provenance;

    GaussianizationModel empty(5);
    REQUIRE(kl_loss(empty, rotated, gaussian.entropy) ==
            Catch::Approx(kl_loss(empty, gaussian.data, gaussian.entropy)).margin(1e-9));

    TrainConfig config;
    config.layers = 1;
    config.bins = 128;
    config.alpha_inner = 0.0;
    config.alpha_tail = 0.0;
    Rng ra = make_rng(418), rb = make_rng(418);
    auto ta = train_iterative(gaussian.data, config, gaussian.entropy, ra);
    auto tb = train_iterative(rotated, config, gaussian.entropy, rb);
    REQUIRE(ta.loss_curve.back() == Catch::Approx(tb.loss_curve.back()).margin(0.05));
}

TEST_CASE("training is deterministic given the seed") {
    Dataset data = standard_normal_data(20000, 3, 419);
    TrainConfig config;
    config.layers = 4;
    config.bins = 32;
    Rng ra = make_rng(420), rb = make_rng(420);
    auto a = train_iterative(data, config, 4.2, ra);
    auto b = train_iterative(data, config, 4.2, rb);
    REQUIRE(a.loss_curve.size() == b.loss_curve.size());
    for (std::size_t i = 0; i < a.loss_curve.size(); ++i)
        REQUIRE(a.loss_curve[i] == b.loss_curve[i]);  // bit-identical
}

TEST_CASE("iterative training flattens a three-mode mixture") {
    Mixture mixture;
    Rng rng = make_rng(421);
    Dataset data = mixture.sample(20000, rng);
    double entropy = mixture.entropy_mc(100000, rng);

    TrainConfig config;
    config.layers = 17;
    config.bins = 64;
    config.alpha_inner = 0.0;
    config.alpha_tail = 0.0;
    Rng train_rng = make_rng(422);
    auto trained = train_iterative(data, config, entropy, train_rng);

    REQUIRE(trained.loss_curve.size() == 18);
    double after_one = trained.loss_curve[1];
    double after_all = trained.loss_curve.back();
    REQUIRE(after_all < 0.2 * after_one);
    for (std::size_t i = 1; i < trained.loss_curve.size(); ++i)
        REQUIRE(trained.loss_curve[i] <= trained.loss_curve[i - 1] + 0.02);
}

TEST_CASE("train_iterative with zero layers returns only the initial loss") {
    Dataset data = standard_normal_data(5000, 2, 423);
    TrainConfig config;
    config.layers = 0;
    Rng rng = make_rng(424);
    auto trained = train_iterative(data, config, 2.8, rng);
    REQUIRE(trained.loss_curve.size() == 1);
    REQUIRE(trained.model.block_count() == 0);
}

TEST_CASE("marginal_dependence_estimate") {
    SECTION("standard-normal data has near-zero marginals") {
        Dataset data = standard_normal_data(100000, 3, 425);
        auto est = marginal_dependence_estimate(data);
        for (int j = 0; j < 3; ++j) REQUIRE(est.marginals(j) < 0.01);
    }
    SECTION("an N(0,4) dimension shows its closed-form marginal loss") {
        Dataset data = standard_normal_data(100000, 3, 426);
        data.rows.col(1) *= 2.0;
        auto est = marginal_dependence_estimate(data);
        REQUIRE(est.marginals(1) == Catch::Approx(0.8068528194400547).margin(0.05));
    }
    SECTION("marginal sum is below the total loss on a correlated Gaussian fixture") {
        Rng rng = make_rng(427);
        auto spectrum = make_spectrum(SpectrumCase::half_half, 4, 0.4, 1e-3, rng);
        auto q = sample_haar(4, rng);
        auto gaussian = gaussian_dataset(spectrum, q, 100000, rng);
        double total = gaussian_kl(CovarianceState(gaussian.covariance));
        auto est = marginal_dependence_estimate(gaussian.data);
        REQUIRE(est.marginals.sum() <= total + 0.02);
    }
    SECTION("a constant dimension is flagged") {
        Dataset data = standard_normal_data(1000, 2, 428);
        data.rows.col(0).setConstant(1.25);
        auto est = marginal_dependence_estimate(data);
        REQUIRE(est.degenerate[0]);
        REQUIRE(std::isinf(est.marginals(0)));
        REQUIRE_FALSE(est.degenerate[1]);
    }
}

TEST_CASE("standardize") {
    Dataset data = standard_normal_data(50000, 3, 429);
    data.rows.col(0) = data.rows.col(0).array() * 3.0 + 5.0;
    auto s = standardize(data);
    REQUIRE(std::abs(s.data.rows.col(0).mean()) < 1e-12);
    double var = s.data.rows.col(0).array().square().mean();
    REQUIRE(var == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(s.log_std_sum == Catch::Approx(s.stddev.array().log().sum()));

    Dataset degenerate = standard_normal_data(100, 2, 430);
    degenerate.rows.col(1).setZero();
    REQUIRE_THROWS_AS(standardize(degenerate), std::domain_error);
}

TEST_CASE("model serialization round-trips") {
    Dataset data = standard_normal_data(4000, 2, 431);
    TrainConfig config;
    config.layers = 2;
    config.bins = 16;
    Rng rng = make_rng(432);
    auto trained = train_iterative(data, config, 2.8, rng);

    std::string path = (std::filesystem::temp_directory_path() / "gflow_model_test.gfm").string();
    save_model(trained.model, path);
    auto loaded = load_model(path);
    REQUIRE(loaded.dim() == 2);
    REQUIRE(loaded.block_count() == 2);
    Rng probe = make_rng(433);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 100; ++i) {
        Eigen::Vector2d x(normal(probe), normal(probe));
        auto a = trained.model.transform(x);
        auto b = loaded.transform(x);
        REQUIRE(a.z(0) == b.z(0));
        REQUIRE(a.z(1) == b.z(1));
        REQUIRE(a.log_det == b.log_det);
    }
    std::filesystem::remove(path);

    REQUIRE_THROWS_AS(load_model("/nonexistent/gflow.model"), std::runtime_error);
}
