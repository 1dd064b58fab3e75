// monce: command-line harness for the contrastive loss library.
//
//   monce loss      --x X.mnce --y Y.mnce [--config run.cfg] [--out layers.csv]
//   monce sweep     --x X.mnce --y Y.mnce [--betas ..] [--qs ..] [--modes ..] [--strategy ..] --out sweep.csv
//   monce hist      --x X.mnce --y Y.mnce --bins 20 --out hist.csv
//   monce gradcheck [--config run.cfg] --n 4 --d 6 --seed 0 [--step 1e-4] [--tol 1e-4]
//   monce demo      [--config run.cfg] --n 64 --d 16 --steps 200 --lr 0.05 --seed 0 --out traj.csv
//
// Exit codes: 0 success, 2 input error, 3 check failure.

#include "monce/monce.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kInputError = 2;
constexpr int kCheckFailure = 3;

struct Args {
    std::string x, y, config, out;
    std::size_t bins = 20;
    std::optional<std::uint64_t> seed;
    int steps = 200;
    double lr = 0.05;
    long n = 4;
    long d = 6;
    double h = monce::harness::kGradcheckStep;
    double tol = monce::harness::kGradcheckTolerance;
    long demo_n = 64;
    long demo_d = 16;
    std::vector<double> betas{0.07, 0.1, 0.5, 1.0};
    std::vector<double> qs{1.0};
    std::vector<std::string> modes{"patchnce", "weightnce", "monce"};
    std::optional<std::string> strategy;
    std::string generator = "gaussian_clusters";
    double init_noise = 1.0;
};

monce::io::RunConfig load_config(const Args& a) {
    monce::io::RunConfig cfg = a.config.empty() ? monce::io::RunConfig{} : monce::io::read_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.strategy) {
        const auto s = monce::parse_strategy(*a.strategy);
        if (!s) throw monce::Error(monce::ErrorKind::InvalidArgument, "--strategy must be hard|easy");
        cfg.loss.strategy = *s;
    }
    return cfg;
}

void emit(const monce::io::Table& t, const std::string& out) {
    if (out.empty()) std::cout << monce::io::to_csv(t);
    else monce::io::write_csv(out, t);
}

int cmd_loss(const Args& a) {
    const auto cfg = load_config(a);
    const auto x = monce::io::read_features(a.x);
    const auto y = monce::io::read_features(a.y);
    const auto report = monce::multilayer(x, y, cfg.loss);
    std::cout << monce::harness::format_report(report, cfg.loss);
    if (!a.out.empty()) monce::io::write_csv(a.out, monce::harness::layer_table(report));
    return 0;
}

int cmd_sweep(const Args& a) {
    const auto cfg = load_config(a);
    monce::harness::SweepSpec spec;
    spec.betas = a.betas;
    spec.qs = a.qs;
    spec.strategy = cfg.loss.strategy;
    spec.modes.clear();
    for (const auto& m : a.modes) {
        const auto mode = monce::parse_mode(m);
        if (!mode) throw monce::Error(monce::ErrorKind::InvalidArgument, "unknown mode '" + m + "'");
        spec.modes.push_back(*mode);
    }
    const auto x = monce::io::read_features(a.x);
    const auto y = monce::io::read_features(a.y);
    emit(monce::harness::run_sweep(x, y, cfg.loss, spec), a.out);
    return 0;
}

int cmd_hist(const Args& a) {
    const auto x = monce::io::read_features(a.x);
    const auto y = monce::io::read_features(a.y);
    emit(monce::harness::similarity_histogram(x, y, a.bins), a.out);
    return 0;
}

int cmd_gradcheck(const Args& a) {
    const auto cfg = load_config(a);
    const auto rows = monce::harness::gradcheck(cfg.loss, a.n, a.d, cfg.seed, a.h, a.tol);
    bool ok = true;
    std::cout << "mode        max_rel_error  result\n";
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(12) << monce::to_string(r.mode) << std::setw(15) << std::scientific
                  << std::setprecision(3) << r.max_error << (r.pass ? "PASS" : "FAIL") << '\n';
        ok = ok && r.pass;
    }
    return ok ? 0 : kCheckFailure;
}

int cmd_demo(const Args& a) {
    const auto cfg = load_config(a);
    monce::harness::DemoSpec spec;
    spec.n_patches = a.demo_n;
    spec.dim = a.demo_d;
    spec.steps = a.steps;
    spec.learning_rate = a.lr;
    spec.seed = cfg.seed;
    spec.loss = cfg.loss;
    spec.init_noise = a.init_noise;
    const auto gen = monce::harness::parse_generator(a.generator);
    if (!gen) throw monce::Error(monce::ErrorKind::InvalidArgument, "unknown generator '" + a.generator + "'");
    spec.generator = *gen;
    const auto result = monce::harness::run_demo(spec);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    emit(result.trajectory, a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive loss harness (PatchNCE / WeightNCE / MoNCE)"};
    app.require_subcommand(1);
    Args a;

    auto* loss = app.add_subcommand("loss", "Evaluate the configured loss over all layers");
    auto* sweep = app.add_subcommand("sweep", "Loss over a beta x Q x mode grid, as CSV");
    auto* hist = app.add_subcommand("hist", "Positive vs negative pair similarity histogram, as CSV");
    auto* check = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients on random features");
    auto* demo = app.add_subcommand("demo", "Toy embedding optimization trajectory, as CSV");

    for (auto* sc : {loss, sweep, hist}) {
        sc->add_option("--x", a.x, "Feature file for the anchors")->required()->check(CLI::ExistingFile);
        sc->add_option("--y", a.y, "Feature file for the targets")->required()->check(CLI::ExistingFile);
    }
    for (auto* sc : {loss, sweep, check, demo}) {
        sc->add_option("--config", a.config, "key=value run configuration")->check(CLI::ExistingFile);
        sc->add_option("--strategy", a.strategy, "hard | easy (overrides config)");
    }
    for (auto* sc : {loss, sweep, hist, demo}) sc->add_option("--out", a.out, "Output CSV path");
    for (auto* sc : {check, demo}) sc->add_option("--seed", a.seed, "Seed (overrides config)");
    check->add_option("--n", a.n, "Patch count");
    check->add_option("--d", a.d, "Feature dimension");
    check->add_option("--step", a.h, "Central difference step");
    check->add_option("--tol", a.tol, "Largest accepted error");
    demo->add_option("--n", a.demo_n, "Patch count");
    demo->add_option("--d", a.demo_d, "Feature dimension");
    sweep->add_option("--betas", a.betas, "Comma-separated beta grid")->delimiter(',');
    sweep->add_option("--qs", a.qs, "Comma-separated Q grid")->delimiter(',');
    sweep->add_option("--modes", a.modes, "Comma-separated modes")->delimiter(',');
    hist->add_option("--bins", a.bins, "Number of bins over [-1, 1]");
    demo->add_option("--steps", a.steps, "Gradient steps");
    demo->add_option("--lr", a.lr, "Learning rate");
    demo->add_option("--generator", a.generator, "gaussian_clusters | uniform_sphere");
    demo->add_option("--init-noise", a.init_noise, "Noise added to x to initialize y (0 copies x)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (*loss) return cmd_loss(a);
        if (*sweep) return cmd_sweep(a);
        if (*hist) return cmd_hist(a);
        if (*check) return cmd_gradcheck(a);
        if (*demo) return cmd_demo(a);
    } catch (const monce::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}
