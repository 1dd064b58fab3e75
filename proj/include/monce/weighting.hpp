#pragma once

// Per-anchor negative-pair weights for the weighted contrastive loss.
//
// Hard weighting favours negatives that look like the anchor's positive
// (softmax of S[i][j] / beta); easy weighting favours dissimilar negatives
// (softmax of (1 - S[i][j]) / beta). The softmax runs over j != i only, so
// every row of negative weights sums to one.

#include "monce/features.hpp"
#include "monce/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace monce {

enum class WeightKind { row_stochastic, doubly_stochastic };
enum class WeightSource { hard, easy, uniform, transport };

struct WeightMatrix {
    Matrix w;
    WeightKind kind = WeightKind::row_stochastic;
    WeightSource source = WeightSource::uniform;

    Eigen::Index size() const { return w.rows(); }
};

namespace detail {

inline void require_square(const Matrix& s, const char* what) {
    if (s.rows() != s.cols()) {
        throw Error(ErrorKind::DimensionMismatch, std::string(what) + " needs a square matrix");
    }
    if (s.rows() < 2) {
        throw Error(ErrorKind::DegenerateAnchor, std::string(what) + " needs N >= 2 (no negatives otherwise)");
    }
}

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be a finite positive number");
    }
}

// Row-wise softmax over off-diagonal entries of `logits`, max-shifted.
inline Matrix offdiag_softmax(const Matrix& logits) {
    const Eigen::Index n = logits.rows();
    Matrix w = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) m = std::max(m, logits(i, j));
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            w(i, j) = std::exp(logits(i, j) - m);
            z += w(i, j);
        }
        w.row(i) /= z;
    }
    return w;
}

}  // namespace detail

inline WeightMatrix hard_weights(const SimilarityMatrix& s, double beta) {
    detail::require_square(s, "hard_weights");
    detail::require_positive(beta, "beta");
    return {detail::offdiag_softmax(s / beta), WeightKind::row_stochastic, WeightSource::hard};
}

inline WeightMatrix easy_weights(const SimilarityMatrix& s, double beta) {
    detail::require_square(s, "easy_weights");
    detail::require_positive(beta, "beta");
    const Matrix logits = (1.0 - s.array()).matrix() / beta;
    return {detail::offdiag_softmax(logits), WeightKind::row_stochastic, WeightSource::easy};
}

inline WeightMatrix uniform_weights(Eigen::Index n) {
    if (n < 2) throw Error(ErrorKind::DegenerateAnchor, "uniform_weights needs n >= 2");
    Matrix w = Matrix::Constant(n, n, 1.0 / static_cast<double>(n - 1));
    w.diagonal().setZero();
    return {std::move(w), WeightKind::row_stochastic, WeightSource::uniform};
}

inline WeightMatrix strategy_weights(const SimilarityMatrix& s, Strategy strategy, double beta) {
    return strategy == Strategy::hard ? hard_weights(s, beta) : easy_weights(s, beta);
}

}  // namespace monce
