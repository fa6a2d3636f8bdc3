#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fvk {

inline constexpr const char* kVersion = "0.1.0";

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Base class for all errors thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid user input (mesh parameters, config files, incompatible options).
/// The CLI maps this to exit code 1.
struct ConfigError : Error {
    using Error::Error;
};

/// A solver failed irrecoverably (stuck flow, singular system).
/// The CLI maps this to exit code 2.
struct SolverError : Error {
    using Error::Error;
};

/// FNV-1a over raw bytes; used for config and output fingerprints in manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

}  // namespace fvk
