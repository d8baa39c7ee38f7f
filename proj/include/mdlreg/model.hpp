#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mdlreg/errors.hpp"
#include "mdlreg/rng.hpp"

namespace mdlreg {

// Two-layer ReLU network with a frozen first layer:
//   y = phi(x W) v^T + eps,  x ~ N(0, I_d),  eps ~ N(0, sigma2).
// Only the last-layer weights v are estimated.
struct NetworkModel {
    int d = 0;              // input dimension
    int m = 0;              // hidden width
    Eigen::MatrixXd W;      // d x m first-layer weights
    double sigma2 = 1.0;    // noise variance, > 0
    std::uint64_t seed = 0; // seed W was sampled with (0 when W was set directly)
};

// Last-layer weight row vector, constrained to the unit ball.
struct TrueParam {
    Eigen::RowVectorXd v;
};

struct Dataset {
    long n = 0;
    Eigen::MatrixXd inputs;    // n x d
    Eigen::MatrixXd features;  // n x m, phi(inputs * W)
    Eigen::VectorXd responses; // n
};

// W entries are iid N(0, 1/m).
inline Eigen::MatrixXd sample_weights(int d, int m, std::uint64_t seed) {
    if (d < 1 || m < 1)
        throw std::invalid_argument("sample_weights: dimensions must be positive");
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
    Eigen::MatrixXd W(d, m);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < m; ++c) W(r, c) = gauss(rng);
    return W;
}

inline NetworkModel make_network_model(int d, int m, double sigma2, std::uint64_t seed) {
    if (sigma2 <= 0.0)
        throw std::invalid_argument("make_network_model: sigma2 must be positive");
    return NetworkModel{d, m, sample_weights(d, m, seed), sigma2, seed};
}

inline Eigen::RowVectorXd relu_features(const Eigen::RowVectorXd& x, const Eigen::MatrixXd& W) {
    if (x.cols() != W.rows())
        throw std::invalid_argument("relu_features: shape mismatch");
    return (x * W).cwiseMax(0.0);
}

inline Eigen::MatrixXd relu_features(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& W) {
    if (inputs.cols() != W.rows())
        throw std::invalid_argument("relu_features: shape mismatch");
    return (inputs * W).cwiseMax(0.0);
}

// Uniform draw from the unit ball: Gaussian direction scaled by U^(1/m).
inline TrueParam sample_true_param(int m, std::uint64_t seed) {
    if (m < 1)
        throw std::invalid_argument("sample_true_param: width must be positive");
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::RowVectorXd g(m);
    for (int i = 0; i < m; ++i) g(i) = gauss(rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    while (u == 0.0) u = unif(rng);
    const double norm = g.norm();
    if (norm == 0.0) return TrueParam{Eigen::RowVectorXd::Zero(m)};
    return TrueParam{g * (std::pow(u, 1.0 / m) / norm)};
}

// noise_sigma2 = 0 is accepted here (noiseless fixtures); everywhere else
// the noise variance must be positive.
inline Dataset generate_dataset_with_noise(const NetworkModel& model, const TrueParam& vstar,
                                           long n, std::uint64_t seed, double noise_sigma2) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be positive");
    if (noise_sigma2 < 0.0)
        throw std::invalid_argument("generate_dataset: noise variance must be nonnegative");
    if (vstar.v.cols() != model.m)
        throw std::invalid_argument("generate_dataset: parameter width mismatch");
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset data;
    data.n = n;
    data.inputs.resize(n, model.d);
    for (long t = 0; t < n; ++t)
        for (int j = 0; j < model.d; ++j) data.inputs(t, j) = gauss(rng);
    data.features = relu_features(data.inputs, model.W);
    data.responses = data.features * vstar.v.transpose();
    if (noise_sigma2 > 0.0) {
        const double sd = std::sqrt(noise_sigma2);
        for (long t = 0; t < n; ++t) data.responses(t) += sd * gauss(rng);
    }
    return data;
}

inline Dataset generate_dataset(const NetworkModel& model, const TrueParam& vstar, long n,
                                std::uint64_t seed) {
    return generate_dataset_with_noise(model, vstar, n, seed, model.sigma2);
}

// sum_t [ (y_t - X_t v^T)^2 / (2 sigma2) + log(2 pi sigma2) / 2 ]
inline double neg_log_likelihood(const Eigen::RowVectorXd& v, const Dataset& data,
                                 double sigma2) {
    if (sigma2 <= 0.0)
        throw std::invalid_argument("neg_log_likelihood: sigma2 must be positive");
    if (v.cols() != data.features.cols())
        throw std::invalid_argument("neg_log_likelihood: parameter width mismatch");
    const Eigen::VectorXd resid = data.responses - data.features * v.transpose();
    const double n = static_cast<double>(data.n);
    return resid.squaredNorm() / (2.0 * sigma2) +
           0.5 * n * std::log(2.0 * std::numbers::pi * sigma2);
}

}  // namespace mdlreg
