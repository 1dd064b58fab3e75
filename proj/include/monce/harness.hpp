#pragma once

// Experiment drivers behind the command-line tool: parameter sweeps,
// similarity histograms, gradient checks and the toy embedding demo. Each
// returns a Table (or a small report) so it can be exercised without a
// process boundary.

#include "monce/features.hpp"
#include "monce/io.hpp"
#include "monce/losses.hpp"
#include "monce/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace monce::harness {

using io::Table;

inline Table layer_table(const LossReport& r) {
    Table t{{"layer_id", "loss"}, {}};
    for (const auto& l : r.per_layer) t.rows.push_back({static_cast<double>(l.layer_id), l.value});
    return t;
}

inline std::string format_report(const LossReport& r, const LossConfig& cfg) {
    std::ostringstream os;
    os << "mode=" << to_string(cfg.mode) << " strategy=" << to_string(cfg.strategy) << " tau=" << cfg.tau
       << " beta=" << cfg.beta << " q=" << cfg.q << " bidirectional=" << (cfg.bidirectional ? "true" : "false")
       << '\n';
    os << "total " << io::format_double(r.total) << '\n';
    for (const auto& l : r.per_layer) os << "layer " << l.layer_id << ' ' << io::format_double(l.value) << '\n';
    for (const auto& s : r.solver) {
        os << "sinkhorn layer " << s.layer_id << (s.reverse ? " reverse" : "") << " iterations=" << s.iterations
           << " marginal_error=" << s.marginal_error << " transport_cost=" << s.transport_cost
           << " converged=" << (s.converged ? "true" : "false") << '\n';
    }
    for (const auto& w : r.warnings) os << "warning: " << w << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

struct SweepSpec {
    std::vector<double> betas{0.07, 0.1, 0.5, 1.0};
    std::vector<double> qs{1.0};
    std::vector<Mode> modes{Mode::patchnce, Mode::weightnce, Mode::monce};
    Strategy strategy = Strategy::hard;

    void validate() const {
        if (betas.empty() || qs.empty() || modes.empty()) {
            throw Error(ErrorKind::InvalidArgument, "sweep needs at least one beta, q and mode");
        }
        for (double b : betas) detail::require_positive(b, "beta");
        for (double q : qs) detail::require_positive(q, "q");
    }
};

/// One row per (beta, q, mode), beta outermost. Loss is the multi-layer total.
inline Table run_sweep(const LayeredFeatureSet& x, const LayeredFeatureSet& y, const LossConfig& base,
                       const SweepSpec& spec) {
    spec.validate();
    Table t{{"beta", "q", "mode", "loss"}, {}};
    for (double beta : spec.betas) {
        for (double q : spec.qs) {
            for (Mode mode : spec.modes) {
                LossConfig cfg = base;
                cfg.beta = beta;
                cfg.q = q;
                cfg.mode = mode;
                cfg.strategy = spec.strategy;
                const auto r = multilayer(x, y, cfg);
                t.rows.push_back({beta, q, std::string(to_string(mode)), r.total});
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------

/// Bin index of a similarity on [-1, 1]; values at or past the ends clamp.
inline std::size_t similarity_bin(double s, std::size_t bins) {
    const double pos = (s + 1.0) / 2.0 * static_cast<double>(bins);
    if (!(pos > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(pos), bins - 1);
}

/// Positive-pair (diagonal) vs negative-pair (off-diagonal) similarity counts,
/// pooled over all layers.
inline Table similarity_histogram(const LayeredFeatureSet& x, const LayeredFeatureSet& y, std::size_t bins) {
    if (bins < 2) throw Error(ErrorKind::InvalidArgument, "bins must be >= 2");
    x.validate();
    y.validate();
    if (x.layers.size() != y.layers.size()) throw Error(ErrorKind::LayerMismatch, "layer counts differ");
    std::vector<double> pos(bins, 0.0), neg(bins, 0.0);
    for (std::size_t k = 0; k < x.layers.size(); ++k) {
        if (x.layers[k].layer_id != y.layers[k].layer_id) {
            throw Error(ErrorKind::LayerMismatch, "layer ids differ at position " + std::to_string(k));
        }
        const auto s = similarity(x.layers[k], y.layers[k]);
        for (Eigen::Index i = 0; i < s.rows(); ++i)
            for (Eigen::Index j = 0; j < s.cols(); ++j)
                (i == j ? pos : neg)[similarity_bin(s(i, j), bins)] += 1.0;
    }
    Table t{{"bin_left", "bin_right", "pos_count", "neg_count"}, {}};
    const double width = 2.0 / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        t.rows.push_back({-1.0 + width * static_cast<double>(b), -1.0 + width * static_cast<double>(b + 1), pos[b],
                          neg[b]});
    }
    return t;
}

// ---------------------------------------------------------------------------

inline Matrix random_gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// Mixed absolute/relative error used for gradient checks:
/// |a - f| / max(1, |a|, |f|).
inline double gradient_error(const Matrix& analytic, const Matrix& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double a = analytic(i, j), f = numeric(i, j);
            worst = std::max(worst, std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)}));
        }
    }
    return worst;
}

/// Central differences of the frozen-weight loss with respect to x and y.
inline Gradients numeric_gradient(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg,
                                  const FrozenWeights& fw, double h) {
    Gradients g{Matrix::Zero(x.n_patches(), x.dim()), Matrix::Zero(y.n_patches(), y.dim())};
    FeatureSet xp = x, yp = y;
    for (Eigen::Index i = 0; i < x.n_patches(); ++i) {
        for (Eigen::Index d = 0; d < x.dim(); ++d) {
            const double x0 = xp.data(i, d);
            xp.data(i, d) = x0 + h;
            const double up = frozen_loss(xp, y, cfg, fw).total;
            xp.data(i, d) = x0 - h;
            const double dn = frozen_loss(xp, y, cfg, fw).total;
            xp.data(i, d) = x0;
            g.dx(i, d) = (up - dn) / (2.0 * h);

            const double y0 = yp.data(i, d);
            yp.data(i, d) = y0 + h;
            const double upy = frozen_loss(x, yp, cfg, fw).total;
            yp.data(i, d) = y0 - h;
            const double dny = frozen_loss(x, yp, cfg, fw).total;
            yp.data(i, d) = y0;
            g.dy(i, d) = (upy - dny) / (2.0 * h);
        }
    }
    return g;
}

struct GradcheckRow {
    Mode mode = Mode::patchnce;
    double max_error = 0.0;
    bool pass = false;
};

inline constexpr double kGradcheckStep = 1e-4;
inline constexpr double kGradcheckTolerance = 1e-4;

/// Analytic vs finite-difference gradients for every mode on random
/// normalized features drawn from `seed`.
inline std::vector<GradcheckRow> gradcheck(const LossConfig& base, Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                                           double h = kGradcheckStep, double tolerance = kGradcheckTolerance) {
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "gradcheck needs n >= 2");
    if (d < 1) throw Error(ErrorKind::InvalidArgument, "gradcheck needs d >= 1");
    detail::require_positive(h, "h");
    detail::require_positive(tolerance, "tolerance");
    base.validate();
    std::mt19937_64 rng(seed);
    const FeatureSet x = normalize_rows(random_gaussian(n, d, rng));
    const FeatureSet y = normalize_rows(random_gaussian(n, d, rng));
    std::vector<GradcheckRow> rows;
    for (Mode mode : {Mode::patchnce, Mode::weightnce, Mode::monce}) {
        LossConfig cfg = base;
        cfg.mode = mode;
        const FrozenWeights fw = resolve_weights(x, y, cfg);
        const Gradients analytic = frozen_grad(x, y, cfg, fw);
        const Gradients numeric = numeric_gradient(x, y, cfg, fw, h);
        const double err = std::max(gradient_error(analytic.dx, numeric.dx), gradient_error(analytic.dy, numeric.dy));
        rows.push_back({mode, err, err <= tolerance});
    }
    return rows;
}

// ---------------------------------------------------------------------------

enum class Generator { gaussian_clusters, uniform_sphere };

inline std::optional<Generator> parse_generator(std::string_view s) {
    if (s == "gaussian_clusters") return Generator::gaussian_clusters;
    if (s == "uniform_sphere") return Generator::uniform_sphere;
    return std::nullopt;
}

struct DemoSpec {
    Eigen::Index n_patches = 64;
    Eigen::Index dim = 16;
    int steps = 200;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    Generator generator = Generator::gaussian_clusters;
    double cluster_spread = 0.35;
    double init_noise = 1.0;  // 0 starts y as an exact copy of x
    LossConfig loss{};

    void validate() const {
        if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");
        detail::require_positive(learning_rate, "learning_rate");
        if (n_patches < 2 || dim < 1) throw Error(ErrorKind::InvalidArgument, "demo needs n >= 2 and d >= 1");
        if (!(init_noise >= 0.0) || !(cluster_spread >= 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "noise levels must be >= 0");
        }
        loss.validate();
    }
};

struct DemoResult {
    Table trajectory;
    std::vector<std::string> warnings;
};

inline FeatureSet demo_anchors(const DemoSpec& spec, std::mt19937_64& rng) {
    if (spec.generator == Generator::uniform_sphere) {
        return normalize_rows(random_gaussian(spec.n_patches, spec.dim, rng));
    }
    const Eigen::Index clusters = std::max<Eigen::Index>(2, spec.n_patches / 8);
    const Matrix centers = normalize_rows(random_gaussian(clusters, spec.dim, rng)).data;
    Matrix m = spec.cluster_spread * random_gaussian(spec.n_patches, spec.dim, rng);
    for (Eigen::Index i = 0; i < spec.n_patches; ++i) m.row(i) += centers.row(i % clusters);
    return normalize_rows(m);
}

/// Gradient descent on free embeddings y against fixed anchors x. Row i of
/// the trajectory is measured before update i; the last row is the final
/// state after `steps` updates.
inline DemoResult run_demo(const DemoSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const FeatureSet x = demo_anchors(spec, rng);
    FeatureSet y = spec.init_noise > 0.0
                       ? normalize_rows(x.data + spec.init_noise * random_gaussian(spec.n_patches, spec.dim, rng))
                       : x;

    DemoResult out{{{"step", "loss", "mean_pos_sim", "mean_neg_sim"}, {}}, {}};
    std::vector<double> losses;
    const double n = static_cast<double>(spec.n_patches);
    for (int step = 0; step <= spec.steps; ++step) {
        LossReport diag;
        const FrozenWeights fw = resolve_weights(x, y, spec.loss, &diag);
        const LossReport r = frozen_loss(x, y, spec.loss, fw);
        const Matrix s = similarity(x, y);
        const double pos = s.diagonal().sum() / n;
        const double neg = (s.sum() - s.diagonal().sum()) / (n * (n - 1.0));
        out.trajectory.rows.push_back({static_cast<double>(step), r.total, pos, neg});
        losses.push_back(r.total);
        for (const auto& w : diag.warnings) out.warnings.push_back("step " + std::to_string(step) + ": " + w);
        if (step == spec.steps) break;
        const Gradients g = frozen_grad(x, y, spec.loss, fw);
        y = normalize_rows(y.data - spec.learning_rate * g.dy);
    }
    if (spec.learning_rate <= 0.1 && spec.generator == Generator::gaussian_clusters) {
        for (std::size_t k = 1; k < losses.size() && k <= 10; ++k) {
            if (losses[k] > losses[k - 1]) {
                out.warnings.push_back("loss increased at step " + std::to_string(k) + " (" +
                                       io::format_double(losses[k - 1]) + " -> " + io::format_double(losses[k]) + ")");
                break;
            }
        }
    }
    return out;
}

}  // namespace monce::harness
