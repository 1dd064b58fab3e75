#pragma once

// Patch-level contrastive losses: unweighted (PatchNCE), per-anchor
// re-weighted (WeightNCE) and transport-modulated (MoNCE), their analytic
// gradients with respect to the normalized feature rows, the multi-layer sum
// and the bidirectional variant.
//
// For anchor i the loss term is
//
//   l_i = -s_ii/tau + log( e^{s_ii/tau} + sum_{j!=i} c_ij e^{s_ij/tau} )
//
// with c_ij = 1 for PatchNCE and c_ij = Q (N-1) w_ij for the weighted modes.
// Everything is evaluated as a log-sum-exp, since tau = 0.07 already puts the
// exponents at +-14.

#include "monce/features.hpp"
#include "monce/sinkhorn.hpp"
#include "monce/types.hpp"
#include "monce/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace monce {

struct LossConfig {
    double tau = 0.07;
    double beta = 0.1;
    double q = 1.0;
    Strategy strategy = Strategy::hard;
    Mode mode = Mode::patchnce;
    SinkhornOptions sinkhorn{};
    bool bidirectional = false;

    void validate() const {
        detail::require_positive(tau, "tau");
        detail::require_positive(beta, "beta");
        detail::require_positive(q, "q");
        detail::require_positive(sinkhorn.epsilon, "epsilon");
        detail::require_positive(sinkhorn.tol, "tol");
        if (sinkhorn.max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
    }
};

/// Layers ordered by strictly increasing layer_id, all with the same N.
struct LayeredFeatureSet {
    std::vector<FeatureSet> layers;

    void validate() const {
        if (layers.empty()) throw Error(ErrorKind::LayerMismatch, "layered feature set is empty");
        for (std::size_t k = 1; k < layers.size(); ++k) {
            if (layers[k].layer_id <= layers[k - 1].layer_id) {
                throw Error(ErrorKind::LayerMismatch, "layer ids must be strictly increasing (index " +
                                                          std::to_string(k) + ")");
            }
            if (layers[k].n_patches() != layers[0].n_patches()) {
                throw Error(ErrorKind::LayerMismatch, "layer " + std::to_string(layers[k].layer_id) +
                                                          " has a different patch count");
            }
        }
    }
};

struct SolverReport {
    std::uint32_t layer_id = 0;
    bool reverse = false;
    int iterations = 0;
    double marginal_error = 0.0;
    double transport_cost = 0.0;
    bool converged = false;
};

struct LayerLoss {
    std::uint32_t layer_id = 0;
    double value = 0.0;
};

struct LossReport {
    double total = 0.0;
    std::vector<LayerLoss> per_layer;
    std::vector<double> per_anchor;  // single-layer evaluations only
    std::vector<SolverReport> solver;
    std::vector<std::string> warnings;
};

/// Weights used by one loss evaluation. An empty direction means the
/// unweighted PatchNCE denominator.
struct FrozenWeights {
    std::optional<Matrix> forward;
    std::optional<Matrix> reverse;
};

struct Gradients {
    Matrix dx;
    Matrix dy;
};

namespace detail {

// Per-anchor terms; accumulates dL/dS into `ds` when non-null.
inline Vector contrast_terms(const SimilarityMatrix& s, const Matrix* weights, double tau, double q, Matrix* ds) {
    const Eigen::Index n = s.rows();
    Vector terms(n);
    if (ds) ds->setZero(n, n);
    const double scale = q * static_cast<double>(n - 1);
    std::vector<double> logits(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        // logits[i] is the positive term, logits[j] the weighted negatives
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            double a = s(i, j) / tau;
            if (j != i && weights) {
                const double c = scale * (*weights)(i, j);
                a = c > 0.0 ? a + std::log(c) : -std::numeric_limits<double>::infinity();
            }
            logits[static_cast<std::size_t>(j)] = a;
            m = std::max(m, a);
        }
        double z = 0.0;
        for (double a : logits) z += std::exp(a - m);
        const double lse = m + std::log(z);
        terms[i] = lse - s(i, i) / tau;
        if (ds) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double p = std::exp(logits[static_cast<std::size_t>(j)] - lse);
                (*ds)(i, j) = (j == i ? p - 1.0 : p) / tau;
            }
        }
    }
    return terms;
}

inline void check_pair(const FeatureSet& x, const FeatureSet& y) {
    if (x.dim() != y.dim() || x.n_patches() != y.n_patches()) {
        throw Error(ErrorKind::DimensionMismatch, "feature sets disagree in shape");
    }
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Weights for one direction given that direction's similarity matrix.
inline std::optional<Matrix> direction_weights(const SimilarityMatrix& s, const LossConfig& cfg, std::uint32_t layer_id,
                                               bool reverse, LossReport* diag) {
    switch (cfg.mode) {
        case Mode::patchnce:
            return std::nullopt;
        case Mode::weightnce:
            return strategy_weights(s, cfg.strategy, cfg.beta).w;
        case Mode::monce: {
            const auto plan = sinkhorn(build_cost(s, cfg.strategy, cfg.beta), cfg.sinkhorn);
            if (diag) {
                diag->solver.push_back(
                    {layer_id, reverse, plan.iterations, plan.marginal_error, plan.transport_cost, plan.converged});
                if (!plan.converged) {
                    diag->warnings.push_back("NoConvergence: sinkhorn on layer " + std::to_string(layer_id) +
                                             (reverse ? " (reverse)" : "") + " stopped at marginal error " +
                                             std::to_string(plan.marginal_error) + " after " +
                                             std::to_string(plan.iterations) + " iterations");
                }
            }
            return plan.plan.w;
        }
    }
    return std::nullopt;
}

inline void require_negatives(const LossConfig& cfg, Eigen::Index n) {
    if (cfg.mode != Mode::patchnce && n < 2) {
        throw Error(ErrorKind::DegenerateAnchor, std::string(to_string(cfg.mode)) + " needs N >= 2");
    }
}

}  // namespace detail

/// Weights the configured mode would use for (x, y), computed once so they
/// can be held fixed for differentiation. Solver diagnostics go to `diag`.
inline FrozenWeights resolve_weights(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg,
                                     LossReport* diag = nullptr) {
    detail::check_pair(x, y);
    detail::require_negatives(cfg, x.n_patches());
    const SimilarityMatrix s = similarity(x, y);
    FrozenWeights fw;
    fw.forward = detail::direction_weights(s, cfg, x.layer_id, false, diag);
    if (cfg.bidirectional) {
        fw.reverse = detail::direction_weights(s.transpose(), cfg, x.layer_id, true, diag);
    }
    return fw;
}

/// Single-layer loss with the given weights held fixed.
inline LossReport frozen_loss(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg, const FrozenWeights& fw) {
    detail::check_pair(x, y);
    cfg.validate();
    const SimilarityMatrix s = similarity(x, y);
    const Matrix* wf = fw.forward ? &*fw.forward : nullptr;
    Vector anchors = detail::contrast_terms(s, wf, cfg.tau, cfg.q, nullptr);
    if (cfg.bidirectional) {
        const Matrix* wr = fw.reverse ? &*fw.reverse : nullptr;
        anchors += detail::contrast_terms(s.transpose(), wr, cfg.tau, cfg.q, nullptr);
    }
    LossReport r;
    r.total = anchors.sum();
    r.per_layer.push_back({x.layer_id, r.total});
    r.per_anchor = detail::to_std(anchors);
    return r;
}

/// dL/dx and dL/dy with respect to the rows as given (no renormalization).
inline Gradients frozen_grad(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg, const FrozenWeights& fw) {
    detail::check_pair(x, y);
    cfg.validate();
    const SimilarityMatrix s = similarity(x, y);
    Matrix ds;
    detail::contrast_terms(s, fw.forward ? &*fw.forward : nullptr, cfg.tau, cfg.q, &ds);
    Gradients g{ds * y.data, ds.transpose() * x.data};
    if (cfg.bidirectional) {
        detail::contrast_terms(s.transpose(), fw.reverse ? &*fw.reverse : nullptr, cfg.tau, cfg.q, &ds);
        g.dy += ds * x.data;
        g.dx += ds.transpose() * y.data;
    }
    return g;
}

/// Mode-selected single-layer loss, honouring cfg.bidirectional.
inline LossReport evaluate(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg) {
    cfg.validate();
    LossReport diag;
    const FrozenWeights fw = resolve_weights(x, y, cfg, &diag);
    LossReport r = frozen_loss(x, y, cfg, fw);
    r.solver = std::move(diag.solver);
    r.warnings = std::move(diag.warnings);
    return r;
}

inline LossReport patchnce(const FeatureSet& x, const FeatureSet& y, double tau) {
    LossConfig cfg;
    cfg.tau = tau;
    cfg.mode = Mode::patchnce;
    return evaluate(x, y, cfg);
}

inline LossReport weightnce(const FeatureSet& x, const FeatureSet& y, LossConfig cfg) {
    cfg.mode = Mode::weightnce;
    cfg.bidirectional = false;
    return evaluate(x, y, cfg);
}

/// WeightNCE with caller-supplied negative weights (uniform, hard, easy or a
/// transport plan).
inline LossReport weightnce(const FeatureSet& x, const FeatureSet& y, const WeightMatrix& w, double tau, double q) {
    detail::check_pair(x, y);
    detail::require_square(w.w, "weightnce");
    if (w.size() != x.n_patches()) throw Error(ErrorKind::DimensionMismatch, "weight matrix size differs from N");
    LossConfig cfg;
    cfg.tau = tau;
    cfg.q = q;
    cfg.mode = Mode::weightnce;
    return frozen_loss(x, y, cfg, FrozenWeights{w.w, std::nullopt});
}

/// NoConvergence is not fatal here: the last Sinkhorn iterate is used and
/// the report carries a warning.
inline LossReport monce(const FeatureSet& x, const FeatureSet& y, LossConfig cfg) {
    cfg.mode = Mode::monce;
    cfg.bidirectional = false;
    return evaluate(x, y, cfg);
}

/// loss(x -> y) + loss(y -> x); each direction builds its own weights.
inline LossReport bidirectional(const FeatureSet& x, const FeatureSet& y, LossConfig cfg) {
    cfg.bidirectional = true;
    return evaluate(x, y, cfg);
}

inline LossReport multilayer(const LayeredFeatureSet& xl, const LayeredFeatureSet& yl, const LossConfig& cfg) {
    xl.validate();
    yl.validate();
    if (xl.layers.size() != yl.layers.size()) {
        throw Error(ErrorKind::LayerMismatch, "x has " + std::to_string(xl.layers.size()) + " layers, y has " +
                                                  std::to_string(yl.layers.size()));
    }
    LossReport out;
    for (std::size_t k = 0; k < xl.layers.size(); ++k) {
        if (xl.layers[k].layer_id != yl.layers[k].layer_id) {
            throw Error(ErrorKind::LayerMismatch, "layer ids differ at position " + std::to_string(k));
        }
        LossReport r = evaluate(xl.layers[k], yl.layers[k], cfg);
        out.per_layer.push_back(r.per_layer.front());
        out.total += r.total;
        for (auto& s : r.solver) out.solver.push_back(s);
        for (auto& w : r.warnings) out.warnings.push_back(std::move(w));
        if (xl.layers.size() == 1) out.per_anchor = std::move(r.per_anchor);
    }
    return out;
}

/// Analytic gradient of the configured loss. Weights (softmax or transport
/// plan) are recomputed from the current features and then treated as
/// constants.
inline Gradients grad(const FeatureSet& x, const FeatureSet& y, const LossConfig& cfg) {
    cfg.validate();
    return frozen_grad(x, y, cfg, resolve_weights(x, y, cfg));
}

}  // namespace monce
