// gflow: Gaussianization-convergence laboratory command line.
//
// Subcommands: theory, simulate-gaussian, train-toy, spurious, plot.
// stdout carries machine-readable output; progress goes to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gflow/csv.hpp"
#include "gflow/distributions.hpp"
#include "gflow/experiments.hpp"
#include "gflow/gaussian_theory.hpp"
#include "gflow/json_export.hpp"
#include "gflow/model.hpp"
#include "gflow/svg.hpp"

namespace {

using nlohmann::json;

struct SharedOptions {
    std::uint64_t seed = 0;
    int jobs = static_cast<int>(gflow::default_jobs());
    std::string out;
    std::string format = "csv";
};

void add_shared(CLI::App* cmd, SharedOptions& shared) {
    cmd->add_option("--seed", shared.seed, "Master seed; fixes all randomness");
    cmd->add_option("--jobs", shared.jobs, "Worker threads (results are independent of this)");
    cmd->add_option("--out", shared.out, "Output path (default: stdout)");
    cmd->add_option("--format", shared.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    // options reachable from config files (flags take precedence) and from
    // a --config given after the subcommand name
    cmd->configurable();
    cmd->fallthrough();
}

void write_output(const std::string& path, const std::string& bytes) {
    if (path.empty() || path == "-") {
        std::cout << bytes;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << bytes;
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::string records_output(const std::vector<gflow::ConvergenceRecord>& records,
                           const std::string& format) {
    if (format == "json") return gflow::records_to_json(records).dump(2) + "\n";
    std::ostringstream os;
    gflow::write_records_csv(os, records);
    return os.str();
}

const std::map<std::string, std::string>& case_palette() {
    static const std::map<std::string, std::string> palette = {
        {"case1", "#1f77b4"}, {"case2", "#ff7f0e"}, {"case3", "#2ca02c"},
        {"case4", "#d62728"}, {"case5", "#9467bd"}, {"case6", "#8c564b"},
    };
    return palette;
}

std::string scaling_svg(const std::vector<gflow::ConvergenceRecord>& records, double ratio,
                        const std::string& title) {
    gflow::LogLogPlot plot(title, "dimension D", "required layers");
    std::map<int, std::vector<double>> by_dim;
    for (const auto& r : records) {
        if (r.layer != -1 || !std::isfinite(r.required_layers)) continue;
        auto it = case_palette().find(r.case_label);
        plot.add_point(r.dim, r.required_layers, it == case_palette().end() ? "#555555" : it->second);
        by_dim[r.dim].push_back(r.required_layers);
    }
    std::vector<std::pair<double, double>> medians, theory, coupling;
    for (auto& [dim, values] : by_dim) {
        medians.emplace_back(dim, gflow::median(values));
        theory.emplace_back(dim, gflow::gaussianization_required_layers(dim, ratio).exact);
        coupling.emplace_back(dim, gflow::coupling_required_layers(ratio));
    }
    if (!medians.empty()) {
        plot.add_line(medians, "black", "", "median");
        plot.add_line(theory, "#777777", "", "gaussianization bound");
        plot.add_line(coupling, "#777777", "6,3", "coupling rate");
        try {
            auto fit = gflow::fit_scaling_exponent(records);
            std::vector<std::pair<double, double>> fit_line;
            for (auto& [d, unused] : by_dim)
                fit_line.emplace_back(d, std::exp(fit.intercept + fit.exponent * std::log(d)));
            plot.add_line(fit_line, "#cc0000", "2,3",
                          "fit: exponent " + gflow::format_double(fit.exponent));
        } catch (const std::exception&) {
        }
    }
    return plot.render();
}

std::string spurious_svg(const gflow::Histogram& random_hist, const gflow::Histogram& optimized_hist,
                         long n) {
    const double width = 640, height = 420, left = 60, right = 20, top = 36, bottom = 44;
    double lo = std::min(random_hist.lo, optimized_hist.lo);
    double hi = std::max(random_hist.hi, optimized_hist.hi);
    double peak = 0.0;
    auto density = [n](long count, double bin_width) {
        return static_cast<double>(count) / (static_cast<double>(n) * bin_width);
    };
    for (long c : random_hist.counts) peak = std::max(peak, density(c, random_hist.bin_width()));
    for (long c : optimized_hist.counts) peak = std::max(peak, density(c, optimized_hist.bin_width()));
    gflow::SvgCanvas svg(width, height);
    double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - lo) / (hi - lo) * pw; };
    auto sy = [&](double d) { return top + (1.0 - d / (peak * 1.05)) * ph; };
    svg.line(left, top, left, top + ph, "black");
    svg.line(left, top + ph, left + pw, top + ph, "black");
    svg.text(width / 2, 20, "projected histograms: random vs optimized direction", 13, "middle");
    svg.text(width / 2, height - 8, "w^T x", 12, "middle");
    auto draw = [&](const gflow::Histogram& h, const std::string& color) {
        double bw = h.bin_width();
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            double x0 = h.lo + static_cast<double>(i) * bw;
            double d = density(h.counts[i], bw);
            svg.rect(sx(x0), sy(d), sx(x0 + bw) - sx(x0), top + ph - sy(d), color, 0.5);
        }
    };
    draw(random_hist, "#1f77b4");
    draw(optimized_hist, "#ff7f0e");
    svg.rect(left + pw - 160, top + 8, 10, 10, "#1f77b4", 0.5);
    svg.text(left + pw - 144, top + 17, "random w", 10);
    svg.rect(left + pw - 160, top + 24, 10, 10, "#ff7f0e", 0.5);
    svg.text(left + pw - 144, top + 33, "optimized w", 10);
    return svg.finish();
}

int cmd_theory(const SharedOptions& shared, int dim, double k, double loss, double ratio) {
    auto bounds = gflow::evaluate_bounds(dim, k, loss, ratio);
    auto layers = gflow::gaussianization_required_layers(dim, ratio);
    double coupling_layers = gflow::coupling_required_layers(ratio);
    if (shared.format == "json") {
        json j;
        j["dim"] = dim;
        j["k"] = k;
        j["loss_ratio"] = ratio;
        if (loss > 0.0) j["loss"] = loss;
        for (const auto& b : bounds) j[gflow::bound_kind_name(b.kind)] = b.value;
        j["gaussianization_required_layers_exact"] = layers.exact;
        j["gaussianization_required_layers_linearized"] = layers.linearized;
        j["coupling_required_layers"] = coupling_layers;
        j["coupling_rate_low_loss_limit"] = gflow::coupling_rate_low_loss_limit(std::max(dim, 2));
        write_output(shared.out, j.dump(2) + "\n");
        return 0;
    }
    std::ostringstream os;
    os << "quantity,value\n";
    for (const auto& b : bounds)
        os << gflow::bound_kind_name(b.kind) << ',' << gflow::format_double(b.value) << '\n';
    os << "gaussianization_required_layers_exact," << gflow::format_double(layers.exact) << '\n';
    os << "gaussianization_required_layers_linearized," << gflow::format_double(layers.linearized) << '\n';
    os << "coupling_required_layers," << gflow::format_double(coupling_layers) << '\n';
    write_output(shared.out, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussianization convergence laboratory"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "Config file: flat subcommand.key=value lines or a [subcommand] section");
    app.get_config_formatter_base()->valueSeparator('=');

    // ---- theory ----
    SharedOptions theory_shared;
    int theory_dim = 2;
    double theory_k = 1.0, theory_loss = 0.0, theory_ratio = gflow::kDefaultLossRatio;
    auto* theory = app.add_subcommand("theory", "Evaluate the convergence bounds for one dimension");
    add_shared(theory, theory_shared);
    theory->add_option("--dim", theory_dim, "Data dimension D")->required()->check(CLI::PositiveNumber);
    theory->add_option("--k", theory_k, "Rotation parameter budget factor (k*D parameters)");
    theory->add_option("--loss", theory_loss, "Loss at which to evaluate the coupling rate (0: limit)");
    theory->add_option("--ratio", theory_ratio, "Loss ratio for layer extrapolations")
        ->check(CLI::Range(1e-12, 0.9999999));

    // ---- simulate-gaussian ----
    SharedOptions sim_shared;
    gflow::GaussianExperimentConfig sim;
    sim.jobs = static_cast<int>(gflow::default_jobs());
    std::string sim_svg;
    bool sim_summary_only = false;
    auto* simulate = app.add_subcommand("simulate-gaussian",
                                        "Evolve Gaussian covariances exactly through random-rotation blocks");
    add_shared(simulate, sim_shared);
    simulate->add_option("--dims", sim.dims, "Dimension grid (default: 10 geometric values in [10,128])");
    simulate->add_option("--rotations", sim.rotations, "Rotated variants per spectrum")->check(CLI::PositiveNumber);
    simulate->add_option("--layers-factor", sim.layers_factor, "L_train = factor * D")->check(CLI::PositiveNumber);
    simulate->add_option("--alphas-per-side", sim.alphas_per_side, "Alpha grid density per side of 1")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--random-draws", sim.random_draws, "Random spectra per (case, D)")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--lambda-min", sim.lambda_min, "Smallest admissible eigenvalue")
        ->check(CLI::Range(1e-12, 0.999));
    simulate->add_option("--ratio", sim.loss_ratio, "Loss ratio for required-layer extrapolation")
        ->check(CLI::Range(1e-12, 0.9999999));
    simulate->add_flag("--summary-only", sim_summary_only, "Emit only the summary row per run");
    simulate->add_flag("--verify-bookkeeping", sim.verify_bookkeeping,
                       "Cross-check the final loss against a direct evaluation");
    simulate->add_option("--svg", sim_svg, "Also write a scaling plot to this path");

    // ---- train-toy ----
    SharedOptions toy_shared;
    gflow::ToyExperimentConfig toy;
    toy.jobs = static_cast<int>(gflow::default_jobs());
    std::vector<int> toy_cases = {1, 2, 3};
    std::string toy_svg, toy_models;
    bool toy_summary_only = false;
    auto* train_toy = app.add_subcommand("train-toy", "Train spline Gaussianization on the toy family");
    add_shared(train_toy, toy_shared);
    train_toy->add_option("--cases", toy_cases, "Toy cases to run (1..3)")->check(CLI::Range(1, 3));
    train_toy->add_option("--dims", toy.dims, "Dimension grid");
    train_toy->add_option("--seeds", toy.seeds, "Runs per (case, D)")->check(CLI::PositiveNumber);
    train_toy->add_option("--samples", toy.samples, "Training sample count")->check(CLI::PositiveNumber);
    train_toy->add_option("--layers", toy.layers, "Trained layers")->check(CLI::PositiveNumber);
    train_toy->add_option("--bins", toy.bins, "Spline bins")->check(CLI::Range(2, 100000));
    train_toy->add_option("--alpha", toy.alpha_inner, "Identity blend inside the knot range")
        ->check(CLI::Range(0.0, 1.0));
    train_toy->add_option("--alpha-tail", toy.alpha_tail, "Identity blend on the tails")
        ->check(CLI::Range(0.0, 1.0));
    train_toy->add_option("--core", toy.core, "Core dimension d for cases 2 and 3")->check(CLI::PositiveNumber);
    train_toy->add_option("--entropy-mc", toy.entropy_mc, "Monte-Carlo samples for the entropy")
        ->check(CLI::PositiveNumber);
    train_toy->add_option("--ratio", toy.loss_ratio, "Loss ratio for required-layer extrapolation")
        ->check(CLI::Range(1e-12, 0.9999999));
    train_toy->add_flag("--summary-only", toy_summary_only, "Emit only the summary row per run");
    train_toy->add_option("--save-models", toy_models, "Directory for trained model files");
    train_toy->add_option("--svg", toy_svg, "Also write a scaling plot to this path");

    // ---- spurious ----
    SharedOptions spur_shared;
    long spur_n = 60000;
    int spur_dim = 3072, spur_bins = 70, spur_baselines = 16;
    gflow::SpuriousOptions spur_opt;
    std::string spur_svg, spur_preset = "full";
    auto* spurious = app.add_subcommand("spurious",
                                        "Optimize a projection of normal data toward a bimodal target");
    add_shared(spurious, spur_shared);
    spurious->add_option("--samples", spur_n, "Sample count")->check(CLI::PositiveNumber);
    spurious->add_option("--dim", spur_dim, "Data dimension")->check(CLI::PositiveNumber);
    spurious->add_option("--steps", spur_opt.steps, "Optimizer steps")->check(CLI::PositiveNumber);
    spurious->add_option("--lr", spur_opt.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    spurious->add_option("--momentum", spur_opt.momentum, "Momentum")->check(CLI::Range(0.0, 0.999));
    spurious->add_option("--baseline-count", spur_baselines, "Random directions for the baseline")
        ->check(CLI::PositiveNumber);
    spurious->add_option("--bins", spur_bins, "Histogram bins for the figure")->check(CLI::PositiveNumber);
    spurious->add_option("--preset", spur_preset, "full: N=60000 D=3072; ci: N=10000 D=512")
        ->check(CLI::IsMember({"full", "ci"}));
    spurious->add_option("--svg", spur_svg, "Write the two-histogram figure to this path");

    // ---- plot ----
    SharedOptions plot_shared;
    std::string plot_in;
    double plot_ratio = gflow::kDefaultLossRatio;
    auto* plot = app.add_subcommand("plot", "Render a scaling plot from an experiment CSV");
    add_shared(plot, plot_shared);
    plot->add_option("--in", plot_in, "Input CSV (from simulate-gaussian or train-toy)")->required();
    plot->add_option("--ratio", plot_ratio, "Loss ratio of the theory overlays")
        ->check(CLI::Range(1e-12, 0.9999999));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*theory) return cmd_theory(theory_shared, theory_dim, theory_k, theory_loss, theory_ratio);

        if (*simulate) {
            sim.master_seed = sim_shared.seed;
            sim.jobs = sim_shared.jobs;
            sim.record_layers = !sim_summary_only;
            std::fprintf(stderr, "simulate-gaussian: %zu dims, %d rotations, layer factor %d\n",
                         sim.dims.size(), sim.rotations, sim.layers_factor);
            auto records = gflow::run_gaussian_experiment(sim);
            write_output(sim_shared.out, records_output(records, sim_shared.format));
            if (!sim_svg.empty())
                write_output(sim_svg, scaling_svg(records, sim.loss_ratio, "required layers vs dimension"));
            std::fprintf(stderr, "simulate-gaussian: done (%zu records)\n", records.size());
            return 0;
        }

        if (*train_toy) {
            toy.master_seed = toy_shared.seed;
            toy.jobs = toy_shared.jobs;
            toy.record_layers = !toy_summary_only;
            toy.cases.clear();
            for (int c : toy_cases) toy.cases.push_back(static_cast<gflow::ToyCase>(c));
            if (!toy_models.empty()) {
                std::filesystem::create_directories(toy_models);
                toy.save_model_dir = toy_models;
            }
            std::fprintf(stderr, "train-toy: %zu cases, %zu dims, %d seeds\n", toy.cases.size(),
                         toy.dims.size(), toy.seeds);
            auto records = gflow::run_toy_experiment(toy);
            write_output(toy_shared.out, records_output(records, toy_shared.format));
            if (!toy_svg.empty())
                write_output(toy_svg, scaling_svg(records, toy.loss_ratio, "toy family scaling"));
            std::fprintf(stderr, "train-toy: done (%zu records)\n", records.size());
            return 0;
        }

        if (*spurious) {
            if (spur_preset == "ci" && !spurious->count("--samples")) spur_n = 10000;
            if (spur_preset == "ci" && !spurious->count("--dim")) spur_dim = 512;
            std::fprintf(stderr, "spurious: N=%ld D=%d steps=%d\n", spur_n, spur_dim, spur_opt.steps);
            gflow::Rng data_rng = gflow::make_rng(gflow::derive_stream(spur_shared.seed, 1));
            gflow::Rng target_rng = gflow::make_rng(gflow::derive_stream(spur_shared.seed, 2));
            gflow::Rng baseline_rng = gflow::make_rng(gflow::derive_stream(spur_shared.seed, 3));
            gflow::Rng opt_rng = gflow::make_rng(gflow::derive_stream(spur_shared.seed, 4));

            Eigen::MatrixXf data(spur_n, spur_dim);
            {
                std::normal_distribution<float> normal;
                for (long i = 0; i < spur_n; ++i)
                    for (int j = 0; j < spur_dim; ++j) data(i, j) = normal(data_rng);
            }
            gflow::BimodalTarget target;
            auto y = gflow::bimodal_sample(target, spur_n, target_rng);
            double baseline = gflow::spurious_random_baseline(data, y, spur_baselines, baseline_rng);
            auto result = gflow::find_spurious_projection(data, y, spur_opt, opt_rng);

            json j;
            j["n"] = spur_n;
            j["dim"] = spur_dim;
            j["steps"] = spur_opt.steps;
            j["lr"] = spur_opt.learning_rate;
            j["momentum"] = spur_opt.momentum;
            j["w2_initial"] = result.w2_initial;
            j["w2_final"] = result.w2_final;
            j["w2_final_rms"] = result.w2_final_rms;
            j["w2_final_sum"] = result.w2_final_sum;
            j["w2_random_baseline"] = baseline;
            j["trajectory"] = result.trajectory;
            write_output(spur_shared.out, j.dump(2) + "\n");

            if (!spur_svg.empty()) {
                std::normal_distribution<double> normal;
                Eigen::VectorXd w_rand(spur_dim);
                for (int i = 0; i < spur_dim; ++i) w_rand(i) = normal(baseline_rng);
                w_rand /= w_rand.norm();
                Eigen::VectorXd proj_rand = (data * w_rand.cast<float>().eval()).cast<double>();
                Eigen::VectorXd proj_opt = (data * result.w.cast<float>().eval()).cast<double>();
                auto h_rand = gflow::histogram_values(
                    std::span<const double>(proj_rand.data(), static_cast<std::size_t>(proj_rand.size())), spur_bins);
                auto h_opt = gflow::histogram_values(
                    std::span<const double>(proj_opt.data(), static_cast<std::size_t>(proj_opt.size())), spur_bins);
                write_output(spur_svg, spurious_svg(h_rand, h_opt, spur_n));
            }
            std::fprintf(stderr, "spurious: w2 final %.4f (baseline %.4f)\n", result.w2_final, baseline);
            return 0;
        }

        if (*plot) {
            std::ifstream is(plot_in);
            if (!is) throw std::runtime_error("cannot open input CSV: " + plot_in);
            auto records = gflow::read_records_csv(is);
            std::string title = records.empty() ? "scaling" : records.front().experiment + " scaling";
            write_output(plot_shared.out, scaling_svg(records, plot_ratio, title));
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
