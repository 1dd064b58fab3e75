#pragma once

// Collaborative negative weighting as an optimal transport problem.
//
// The cost of sending anchor i's unit of weight to negative j is built from
// the pair's similarity; the diagonal (the positive pair) is forbidden. The
// entropic problem is solved with log-domain Sinkhorn scaling so that very
// small regularization and exponentiated costs do not under/overflow. A brute
// force derangement enumeration provides the exact optimum for small N.

#include "monce/features.hpp"
#include "monce/types.hpp"
#include "monce/weighting.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace monce {

/// Off-diagonal costs are finite and positive; the diagonal holds +inf and
/// contributes an exact zero to the kernel.
struct CostMatrix {
    Matrix c;

    Eigen::Index size() const { return c.rows(); }
    static bool masked(Eigen::Index i, Eigen::Index j) { return i == j; }
};

struct SinkhornOptions {
    double epsilon = 0.05;
    double tol = 1e-6;
    int max_iter = 1000;
};

struct TransportPlan {
    WeightMatrix plan;
    int iterations = 0;
    double marginal_error = 0.0;
    double transport_cost = 0.0;
    bool converged = false;
};

inline CostMatrix build_cost(const SimilarityMatrix& s, Strategy strategy, double beta) {
    detail::require_square(s, "build_cost");
    detail::require_positive(beta, "beta");
    const Eigen::Index n = s.rows();
    Matrix c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) {
                c(i, j) = std::numeric_limits<double>::infinity();
                continue;
            }
            // easy: similar pairs are expensive, so the plan drifts to easy negatives.
            // hard: dissimilar pairs are expensive, so it drifts to hard negatives.
            const double e = strategy == Strategy::easy ? s(i, j) / beta : (1.0 - s(i, j)) / beta;
            c(i, j) = std::exp(e);
            if (!std::isfinite(c(i, j))) {
                throw Error(ErrorKind::NonFinite, "cost exp(" + std::to_string(e) + ") overflows at (" +
                                                      std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    return {std::move(c)};
}

/// <C, T> over unmasked cells.
inline double transport_cost(const CostMatrix& c, const Matrix& t) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i)
        for (Eigen::Index j = 0; j < c.size(); ++j)
            if (i != j) total += c.c(i, j) * t(i, j);
    return total;
}

/// Largest deviation of any row or column sum of `t` from one.
inline double marginal_error(const Matrix& t) {
    const double rows = (t.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double cols = (t.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(rows, cols);
}

namespace detail {

// Dual potentials are kept in cost units (f_i = eps * log u_i) so they stay
// meaningful when eps changes between annealing stages.
class SinkhornState {
public:
    explicit SinkhornState(const Matrix& c)
        : cost_(c), f_(Vector::Zero(c.rows())), g_(Vector::Zero(c.rows())), lse_(c.rows()) {}

    // Marginal error of the current plan. Row sums come from a fresh row LSE
    // (kept for advance()); the column part was measured by the last update.
    double error(double eps) {
        const Eigen::Index n = cost_.rows();
        double err = col_err_;
        for (Eigen::Index i = 0; i < n; ++i) {
            lse_[i] = lse_excluding(eps, i, /*rows=*/true);
            err = std::max(err, std::abs(std::exp(f_[i] / eps + lse_[i]) - 1.0));
        }
        return err;
    }

    // Plain Sinkhorn sweep after error(): exact f, then exact g.
    void advance(double eps) {
        f_ = -eps * lse_;
        update_g(eps);
    }

    // Exact g for the current f; afterwards every column sums to one.
    void update_g(double eps) {
        const Eigen::Index n = cost_.rows();
        for (Eigen::Index j = 0; j < n; ++j) lse_[j] = lse_excluding(eps, j, /*rows=*/false);
        g_ = -eps * lse_;
        col_err_ = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            col_err_ = std::max(col_err_, std::abs(std::exp(g_[j] / eps + lse_[j]) - 1.0));
        }
    }

    Matrix plan(double eps) const { return plan_for(eps, f_, g_); }

    // One damped Newton step on the marginal equations r(f, g) = 1,
    // c(f, g) = 1. Eliminating df leaves a graph Laplacian in dg, pinned at
    // the last node to remove the constant shift between f and g. The step is
    // halved until the squared residual drops (Armijo). Returns false when no
    // step length helps, which sends the caller back to plain sweeps.
    bool newton_step(double eps) {
        const Eigen::Index n = cost_.rows();
        const Matrix t = plan(eps);
        const Vector r = t.rowwise().sum();
        const Vector c = t.colwise().sum().transpose();
        if (!r.allFinite() || (r.array() <= 0.0).any() || !c.allFinite()) return false;
        const Vector res_r = Vector::Ones(n) - r;
        const Vector res_c = Vector::Ones(n) - c;
        const double merit = res_r.squaredNorm() + res_c.squaredNorm();

        const Vector inv_r = r.cwiseInverse();
        Matrix lap = -(t.transpose() * inv_r.asDiagonal() * t);
        // Diagonal as sum_i T_ij (r_i - T_ij) / r_i, with r_i - T_ij formed
        // from the row's non-dominant mass to avoid cancellation.
        lap.diagonal().setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index top = 0;
            t.row(i).maxCoeff(&top);
            const double others = r[i] - t(i, top) > 0.0 ? t.row(i).sum() - t(i, top) : 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (t(i, j) == 0.0) continue;
                const double rest = j == top ? others : t(i, top) + std::max(0.0, others - t(i, j));
                lap(j, j) += t(i, j) * rest * inv_r[i];
            }
        }
        const Vector rhs = eps * res_c - t.transpose() * (eps * res_r.cwiseProduct(inv_r));

        const Eigen::Index m = n - 1;
        Matrix reduced = lap.topLeftCorner(m, m);
        const double ridge = 1e-14 * std::max(1.0, reduced.diagonal().maxCoeff());
        reduced.diagonal().array() += ridge;
        Vector dg = Vector::Zero(n);
        Eigen::LDLT<Matrix> ldlt(reduced);
        if (ldlt.info() != Eigen::Success) return false;
        dg.head(m) = ldlt.solve(rhs.head(m));
        if (!dg.allFinite()) return false;
        const Vector df = (eps * res_r - t * dg).cwiseProduct(inv_r);
        if (!df.allFinite()) return false;

        for (double step = 1.0; step > 1e-12; step *= 0.5) {
            const Vector f1 = f_ + step * df;
            const Vector g1 = g_ + step * dg;
            const Matrix t1 = plan_for(eps, f1, g1);
            const Vector r1 = t1.rowwise().sum();
            const Vector c1 = t1.colwise().sum().transpose();
            const double merit1 = (Vector::Ones(n) - r1).squaredNorm() + (Vector::Ones(n) - c1).squaredNorm();
            if (std::isfinite(merit1) && merit1 <= (1.0 - 1e-4 * step) * merit) {
                f_ = f1;
                g_ = g1;
                col_err_ = (c1.array() - 1.0).abs().maxCoeff();
                return true;
            }
        }
        return false;
    }

private:
    Matrix plan_for(double eps, const Vector& f, const Vector& g) const {
        const Eigen::Index n = cost_.rows();
        Matrix t = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j) t(i, j) = std::exp((f[i] + g[j] - cost_(i, j)) / eps);
        return t;
    }

    // rows: LSE_j (g_j - C_kj)/eps over j != k; columns: LSE_i (f_i - C_ik)/eps
    double lse_excluding(double eps, Eigen::Index k, bool rows) const {
        const Eigen::Index n = cost_.rows();
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index o = 0; o < n; ++o) {
            if (o == k) continue;
            m = std::max(m, rows ? (g_[o] - cost_(k, o)) / eps : (f_[o] - cost_(o, k)) / eps);
        }
        double z = 0.0;
        for (Eigen::Index o = 0; o < n; ++o) {
            if (o == k) continue;
            z += std::exp((rows ? (g_[o] - cost_(k, o)) / eps : (f_[o] - cost_(o, k)) / eps) - m);
        }
        return m + std::log(z);
    }

    const Matrix& cost_;
    Vector f_;
    Vector g_;
    Vector lse_;
    double col_err_ = 0.0;
};

}  // namespace detail

/// Entropic OT between two all-ones marginals with a forbidden diagonal.
///
/// Log-domain Sinkhorn at `epsilon`, warm-started by an annealing pass that
/// halves the regularization from the off-diagonal cost range down to
/// `epsilon`. When plain sweeps contract slowly (near-permutation plans with
/// almost tied costs) the solver switches to damped Newton steps on the same
/// marginal equations, dropping back to sweeps if a Newton step stalls.
/// None of this moves the fixed point. Annealing sweeps, plain sweeps and
/// Newton steps each count as one iteration against max_iter. Once tol is
/// met, up to four more Newton steps and a few scaling sweeps on the plan
/// itself polish it to rounding level. If the marginal error is still above
/// tol the last iterate is returned with converged = false.
inline TransportPlan sinkhorn(const CostMatrix& cost, double epsilon, double tol, int max_iter) {
    detail::require_square(cost.c, "sinkhorn");
    detail::require_positive(epsilon, "epsilon");
    detail::require_positive(tol, "tol");
    if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");

    const Eigen::Index n = cost.size();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double v = cost.c(i, j);
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFinite, "off-diagonal cost must be finite");
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }

    detail::SinkhornState state(cost.c);
    int iterations = 0;

    constexpr int kStageIters = 20;
    constexpr double kStageTol = 1e-2;
    for (double eps = hi - lo; eps > 2.0 * epsilon && iterations < max_iter; eps *= 0.5) {
        state.update_g(eps);
        for (int k = 0; k < kStageIters && iterations < max_iter; ++k) {
            if (state.error(eps) <= kStageTol) break;
            state.advance(eps);
            ++iterations;
        }
    }

    // Sweeps per contraction-rate estimate, and the rate above which Newton
    // takes over.
    constexpr int kRateWindow = 10;
    constexpr double kSlowRate = 0.9;
    state.update_g(epsilon);
    std::vector<double> history;
    bool newton = false;
    bool converged = false;
    while (iterations < max_iter) {
        const double err = state.error(epsilon);
        if (err <= tol) {
            converged = true;
            break;
        }
        ++iterations;
        if (newton) {
            if (state.newton_step(epsilon)) continue;
            newton = false;
            history.clear();
            state.error(epsilon);
        }
        state.advance(epsilon);
        history.push_back(err);
        if (history.size() > kRateWindow) {
            const double rate = std::pow(err / history[history.size() - 1 - kRateWindow], 1.0 / kRateWindow);
            if (rate > kSlowRate) newton = true;
        }
    }

    // A small residual does not bound the distance to the fixed point when
    // the plan is close to a permutation, so a converged iterate gets a few
    // Newton steps down to rounding level while they still make progress.
    constexpr int kPolishSteps = 4;
    constexpr double kPolishFloor = 1e-13;
    for (int k = 0; converged && k < kPolishSteps && iterations < max_iter; ++k) {
        if (state.error(epsilon) <= kPolishFloor || !state.newton_step(epsilon)) break;
        ++iterations;
    }

    // The same row/column scaling, applied to the plan itself. Entries are
    // O(1) here, whereas exp((f + g - C)/eps) loses about |f|/eps ulps when
    // the costs are large.
    Matrix t = state.plan(epsilon);
    constexpr int kRescaleSweeps = 8;
    double plan_err = marginal_error(t);
    for (int k = 0; converged && k < kRescaleSweeps && plan_err > kPolishFloor; ++k) {
        Matrix next = t.rowwise().sum().cwiseInverse().asDiagonal() * t;
        next = next * next.colwise().sum().cwiseInverse().asDiagonal();
        const double next_err = marginal_error(next);
        if (!(next_err < plan_err)) break;
        t = std::move(next);
        plan_err = next_err;
    }

    TransportPlan out;
    out.marginal_error = plan_err;
    out.converged = converged && out.marginal_error <= tol;
    out.transport_cost = transport_cost(cost, t);
    out.iterations = iterations;
    out.plan = WeightMatrix{std::move(t), WeightKind::doubly_stochastic, WeightSource::transport};
    return out;
}

inline TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornOptions& opt = {}) {
    return sinkhorn(cost, opt.epsilon, opt.tol, opt.max_iter);
}

struct ExactAssignment {
    WeightMatrix plan;
    double cost = 0.0;
    std::vector<Eigen::Index> permutation;  // row i sends its mass to column permutation[i]
};

inline constexpr Eigen::Index kOracleMaxN = 8;

/// Exact minimum of <C, T> over zero-diagonal doubly stochastic T. The
/// optimum of this LP sits at a vertex of the polytope, which is a
/// derangement matrix, so enumerating derangements is exhaustive.
inline ExactAssignment exact_ot_oracle(const CostMatrix& cost) {
    const Eigen::Index n = cost.size();
    if (cost.c.rows() != cost.c.cols()) throw Error(ErrorKind::DimensionMismatch, "cost must be square");
    if (n < 2) throw Error(ErrorKind::DegenerateAnchor, "oracle needs N >= 2");
    if (n > kOracleMaxN) {
        throw Error(ErrorKind::TooLarge, "derangement enumeration limited to N <= 8, got " + std::to_string(n));
    }
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::vector<Eigen::Index> best;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        bool fixed_point = false;
        for (Eigen::Index i = 0; i < n && !fixed_point; ++i) {
            const auto j = perm[static_cast<std::size_t>(i)];
            if (j == i) fixed_point = true;
            else total += cost.c(i, j);
        }
        if (!fixed_point && total < best_cost) {
            best_cost = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Matrix t = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) t(i, best[static_cast<std::size_t>(i)]) = 1.0;
    return {WeightMatrix{std::move(t), WeightKind::doubly_stochastic, WeightSource::transport}, best_cost,
            std::move(best)};
}

}  // namespace monce
