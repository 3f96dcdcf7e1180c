#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace filtration {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input data or unmet operation precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration (maps to CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Solver breakdown: Newton divergence, comparison violation (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

inline std::vector<double> linspace(double a, double b, std::size_t count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = a;
        return out;
    }
    const double step = (b - a) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) out[i] = a + step * static_cast<double>(i);
    out.back() = b;
    return out;
}

inline std::vector<double> geomspace(double a, double b, std::size_t count) {
    std::vector<double> out(count);
    const double la = std::log(a);
    const double lb = std::log(b);
    for (std::size_t i = 0; i < count; ++i) {
        const double s = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        out[i] = std::exp(la + s * (lb - la));
    }
    out.front() = a;
    out.back() = b;
    return out;
}

/// Surface area of the unit sphere in R^N.
inline double unit_sphere_area(int dimension) {
    const double n = static_cast<double>(dimension);
    return 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
}

/// Sample radii used by the hypothesis checks: uniform on [0, rhat], then
/// geometric on [rhat, extent_factor * rhat].
struct SampleGrid {
    std::size_t count = 2048;
    double extent_factor = 10.0;
};

inline std::vector<double> sample_radii(double rhat, const SampleGrid& grid) {
    const std::size_t inner = std::max<std::size_t>(2, grid.count / 8);
    const std::size_t outer = std::max<std::size_t>(2, grid.count - inner);
    std::vector<double> out = linspace(0.0, rhat, inner);
    const auto tail = geomspace(rhat, grid.extent_factor * rhat, outer);
    out.insert(out.end(), tail.begin() + 1, tail.end());
    return out;
}

}  // namespace filtration
