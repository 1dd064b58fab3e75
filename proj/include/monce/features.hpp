#pragma once

// Patch feature sets: construction, row normalization, pairwise similarity
// and seeded patch subsampling from a spatial feature grid.

#include "monce/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace monce {

/// N x D patch features for one encoder layer. Rows are unit-normalized when
/// produced by normalize_rows(); direct construction does not enforce it.
struct FeatureSet {
    Matrix data;
    std::uint32_t layer_id = 0;

    Eigen::Index n_patches() const { return data.rows(); }
    Eigen::Index dim() const { return data.cols(); }
};

/// S[i][j] = x_i . y_j. Not symmetric in general.
using SimilarityMatrix = Matrix;

inline constexpr double kZeroRowNorm = 1e-12;

inline FeatureSet normalize_rows(const Matrix& m, std::uint32_t layer_id = 0) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw Error(ErrorKind::BadShape, "feature matrix must be at least 1x1, got " +
                                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    FeatureSet out{m, layer_id};
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!m.row(i).allFinite()) {
            throw Error(ErrorKind::NonFinite, "row " + std::to_string(i) + " of layer " +
                                                  std::to_string(layer_id) + " has a NaN/Inf entry");
        }
        const double norm = m.row(i).norm();
        if (norm < kZeroRowNorm) {
            throw Error(ErrorKind::ZeroRow,
                        "row " + std::to_string(i) + " of layer " + std::to_string(layer_id) + " has zero norm");
        }
        out.data.row(i) /= norm;
    }
    return out;
}

inline SimilarityMatrix similarity(const FeatureSet& x, const FeatureSet& y) {
    if (x.dim() != y.dim() || x.n_patches() != y.n_patches()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "x is " + std::to_string(x.n_patches()) + "x" + std::to_string(x.dim()) + ", y is " +
                        std::to_string(y.n_patches()) + "x" + std::to_string(y.dim()));
    }
    return x.data * y.data.transpose();
}

/// H x W x C feature tensor stored channel-last (index (h*W + w)*C + c).
struct FeatureGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> values;

    std::size_t positions() const { return height * width; }
};

/// `count` distinct spatial positions out of `total`, in sampled order.
/// Partial Fisher-Yates driven by a 64-bit Mersenne Twister seeded with `seed`.
inline std::vector<std::size_t> sample_positions(std::size_t total, std::size_t count, std::uint64_t seed) {
    if (count > total) {
        throw Error(ErrorKind::TooManyPatches,
                    "requested " + std::to_string(count) + " patches from " + std::to_string(total) + " positions");
    }
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, total - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

inline FeatureSet sample_patches(const FeatureGrid& grid, std::size_t count, std::uint64_t seed,
                                 std::uint32_t layer_id = 0) {
    if (grid.values.size() != grid.positions() * grid.channels) {
        throw Error(ErrorKind::BadShape, "grid value count does not match H*W*C");
    }
    if (count == 0 || grid.channels == 0) {
        throw Error(ErrorKind::BadShape, "sampling needs count >= 1 and C >= 1");
    }
    const auto picked = sample_positions(grid.positions(), count, seed);
    Matrix m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(grid.channels));
    for (std::size_t r = 0; r < count; ++r) {
        const double* src = grid.values.data() + picked[r] * grid.channels;
        for (std::size_t c = 0; c < grid.channels; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = src[c];
        }
    }
    return normalize_rows(m, layer_id);
}

}  // namespace monce
