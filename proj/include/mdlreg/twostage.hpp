#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mdlreg/errors.hpp"

namespace mdlreg {

// One quantized direction of the two-stage code.
struct CodeDirection {
    double lambda = 0.0;      // eigenvalue driving the quantization width
    double delta = 0.0;       // Delta_i = 2 sqrt(alpha sigma2 / (n lambda_i))
    long q = 1;               // grid point count, ceil(2 radius / Delta_i)
    long q_prime = 0;         // q - 1
    double length_nats = 0.0; // L_i = log q_i
    double c = 0.0;           // c_i = radius sqrt(lambda_i / (alpha sigma2))
};

// Per-direction uniform quantization grids plus code lengths. Directions
// beyond D are quantized to the single point 0 and carry no codeword.
struct CodeSpec {
    double alpha = 2.0;
    double sigma2 = 1.0;
    long n = 1;
    int D = 0;
    double radius = 1.0; // 1 for the linear design, sqrt(1 + eps1) for the ReLU design
    std::vector<CodeDirection> directions;

    // Grid for direction i: { -Delta q'/2 + Delta k : k = 0..q' }, symmetric about 0.
    double grid_point(int i, long k) const {
        const CodeDirection& dir = directions.at(static_cast<std::size_t>(i));
        if (k < 0 || k > dir.q_prime)
            throw std::invalid_argument("CodeSpec::grid_point: index out of range");
        return -dir.delta * static_cast<double>(dir.q_prime) / 2.0 +
               dir.delta * static_cast<double>(k);
    }

    double total_length_nats() const {
        double L = 0.0;
        for (const auto& dir : directions) L += dir.length_nats;
        return L;
    }

    // Product of the q_i, saturating at `cap` to keep it overflow-safe.
    double grid_size(double cap = 1e18) const {
        double p = 1.0;
        for (const auto& dir : directions) {
            p *= static_cast<double>(dir.q);
            if (p > cap) return cap;
        }
        return p;
    }
};

inline CodeSpec build_code(const Eigen::VectorXd& eigenvalues, double alpha, double sigma2,
                           long n, double radius) {
    if (!(alpha > 1.0)) throw std::invalid_argument("build_code: alpha must exceed 1");
    if (sigma2 <= 0.0) throw std::invalid_argument("build_code: sigma2 must be positive");
    if (n < 1) throw std::invalid_argument("build_code: n must be positive");
    if (radius < 1.0) throw std::invalid_argument("build_code: radius must be >= 1");
    CodeSpec spec;
    spec.alpha = alpha;
    spec.sigma2 = sigma2;
    spec.n = n;
    spec.D = static_cast<int>(eigenvalues.size());
    spec.radius = radius;
    spec.directions.reserve(eigenvalues.size());
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        const double lam = eigenvalues(i);
        if (lam <= 0.0)
            throw std::invalid_argument(
                "build_code: nonpositive eigenvalue; drop the direction before coding");
        CodeDirection dir;
        dir.lambda = lam;
        dir.delta = 2.0 * std::sqrt(alpha * sigma2 / (static_cast<double>(n) * lam));
        dir.q = static_cast<long>(std::ceil(2.0 * radius / dir.delta));
        dir.q_prime = dir.q - 1;
        dir.length_nats = std::log(static_cast<double>(dir.q));
        dir.c = radius * std::sqrt(lam / (alpha * sigma2));
        spec.directions.push_back(dir);
    }
    return spec;
}

// L(theta) = sum_i log q_i; the per-direction code is uniform, so the total
// is the same for every grid point.
inline double code_length(const CodeSpec& spec, const std::vector<long>& grid_point_indices) {
    if (grid_point_indices.size() != spec.directions.size())
        throw std::invalid_argument("code_length: index count mismatch");
    double L = 0.0;
    for (std::size_t i = 0; i < spec.directions.size(); ++i) {
        if (grid_point_indices[i] < 0 || grid_point_indices[i] > spec.directions[i].q_prime)
            throw std::invalid_argument("code_length: grid index out of range");
        L += spec.directions[i].length_nats;
    }
    return L;
}

// Kraft sum over the full product grid, in closed form: prod_i q_i e^{-log q_i}.
inline double kraft_sum(const CodeSpec& spec) {
    double s = 1.0;
    for (const auto& dir : spec.directions)
        s *= static_cast<double>(dir.q) * std::exp(-dir.length_nats);
    return s;
}

struct LengthBoundReport {
    std::vector<double> slack;   // bound_i - L_i
    std::vector<bool> satisfied; // L_i <= bound_i; can be false only when c_i sqrt(n) < 1
};

// Checks L_i <= (1/2) log n + log c_i + 1/(c_i sqrt(n)) per coded direction.
inline LengthBoundReport length_bound_check(const CodeSpec& spec) {
    LengthBoundReport report;
    const double sqrt_n = std::sqrt(static_cast<double>(spec.n));
    for (const auto& dir : spec.directions) {
        if (dir.c * sqrt_n <= 0.0)
            throw std::invalid_argument("length_bound_check: c_i sqrt(n) must be positive");
        const double bound =
            0.5 * std::log(static_cast<double>(spec.n)) + std::log(dir.c) + 1.0 / (dir.c * sqrt_n);
        report.slack.push_back(bound - dir.length_nats);
        report.satisfied.push_back(dir.length_nats <= bound + 1e-12);
    }
    return report;
}

struct QuantizedPoint {
    Eigen::VectorXd value;
    std::vector<long> index;
    bool clamped = false; // some coordinate lay outside the quantization range
};

// Per-coordinate nearest grid point, ties toward the smaller value.
// Guarantees |value_i - theta_i| <= Delta_i/2 whenever |theta_i| <= radius.
inline QuantizedPoint quantize_point(const CodeSpec& spec, const Eigen::VectorXd& theta) {
    if (theta.size() != static_cast<Eigen::Index>(spec.directions.size()))
        throw std::invalid_argument("quantize_point: dimension mismatch");
    QuantizedPoint out;
    out.value.resize(theta.size());
    out.index.resize(spec.directions.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const CodeDirection& dir = spec.directions[static_cast<std::size_t>(i)];
        const double z =
            (theta(i) + dir.delta * static_cast<double>(dir.q_prime) / 2.0) / dir.delta;
        long k = static_cast<long>(std::ceil(z - 0.5)); // rounds half toward the smaller point
        if (k < 0) k = 0;
        if (k > dir.q_prime) k = dir.q_prime;
        if (std::abs(theta(i)) > spec.radius) out.clamped = true;
        out.index[static_cast<std::size_t>(i)] = k;
        out.value(i) = spec.grid_point(static_cast<int>(i), k);
    }
    return out;
}

}  // namespace mdlreg
