#pragma once

// Shared numeric types, enums and the error type used across the library.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace monce {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
    ZeroRow,
    NonFinite,
    DimensionMismatch,
    TooManyPatches,
    DegenerateAnchor,
    TooLarge,
    NoConvergence,
    LayerMismatch,
    BadMagic,
    BadVersion,
    TruncatedFile,
    TrailingData,
    BadShape,
    BadConfig,
    InvalidArgument,
    Io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ZeroRow: return "ZeroRow";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::TooManyPatches: return "TooManyPatches";
        case ErrorKind::DegenerateAnchor: return "DegenerateAnchor";
        case ErrorKind::TooLarge: return "TooLarge";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::LayerMismatch: return "LayerMismatch";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::BadVersion: return "BadVersion";
        case ErrorKind::TruncatedFile: return "TruncatedFile";
        case ErrorKind::TrailingData: return "TrailingData";
        case ErrorKind::BadShape: return "BadShape";
        case ErrorKind::BadConfig: return "BadConfig";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a named kind so callers
/// (and the CLI exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& message() const noexcept { return message_; }

    /// Same kind, message prefixed with `where`.
    Error with_context(const std::string& where) const { return Error(kind_, where + ": " + message_); }

private:
    ErrorKind kind_;
    std::string message_;
};

enum class Strategy { hard, easy };
enum class Mode { patchnce, weightnce, monce };

inline std::string_view to_string(Strategy s) { return s == Strategy::hard ? "hard" : "easy"; }

inline std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::patchnce: return "patchnce";
        case Mode::weightnce: return "weightnce";
        case Mode::monce: return "monce";
    }
    return "unknown";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "hard") return Strategy::hard;
    if (s == "easy") return Strategy::easy;
    return std::nullopt;
}

inline std::optional<Mode> parse_mode(std::string_view s) {
    if (s == "patchnce") return Mode::patchnce;
    if (s == "weightnce") return Mode::weightnce;
    if (s == "monce") return Mode::monce;
    return std::nullopt;
}

}  // namespace monce
