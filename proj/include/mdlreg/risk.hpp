#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mdlreg/errors.hpp"
#include "mdlreg/estimator.hpp"
#include "mdlreg/model.hpp"
#include "mdlreg/parallel.hpp"
#include "mdlreg/rng.hpp"
#include "mdlreg/spectral.hpp"
#include "mdlreg/twostage.hpp"

namespace mdlreg {

struct RenyiConfig {
    double lambda_order = 0.5; // Renyi order, in (0, 1); Theorem-1 range is (0, 1 - 1/alpha]
    long mc_samples = 10000;   // x draws per evaluation
    std::uint64_t seed = 0;
};

inline void validate(const RenyiConfig& cfg) {
    if (!(cfg.lambda_order > 0.0 && cfg.lambda_order < 1.0))
        throw std::invalid_argument("RenyiConfig: lambda_order must lie in (0, 1)");
    if (cfg.mc_samples < 1)
        throw std::invalid_argument("RenyiConfig: mc_samples must be positive");
}

// For equal-variance Gaussians the per-x integral of p1^lambda p2^(1-lambda)
// over y collapses to exp(-lambda (1-lambda) delta^2 / (2 sigma2)) with
// delta the mean gap. (Checked against numerical y-quadrature in the tests.)
inline double renyi_integrand_closed_form(double delta, double lambda_order, double sigma2) {
    return std::exp(-lambda_order * (1.0 - lambda_order) * delta * delta / (2.0 * sigma2));
}

// d_lambda from precomputed per-draw mean gaps delta_s = X_s (v2 - v1)^T.
// The log-mean-exp is max-shifted so large delta^2 cannot underflow to
// -inf before averaging.
inline double renyi_from_margins(const Eigen::VectorXd& deltas, double lambda_order,
                                 double sigma2) {
    if (!(lambda_order > 0.0 && lambda_order < 1.0))
        throw std::invalid_argument("renyi_from_margins: lambda_order must lie in (0, 1)");
    if (deltas.size() < 1)
        throw std::invalid_argument("renyi_from_margins: no draws");
    if (sigma2 <= 0.0)
        throw std::invalid_argument("renyi_from_margins: sigma2 must be positive");
    const double factor = lambda_order * (1.0 - lambda_order) / (2.0 * sigma2);
    const Eigen::ArrayXd exponents = -factor * deltas.array().square();
    const double shift = exponents.maxCoeff();
    const double mean = (exponents - shift).exp().mean();
    return -(shift + std::log(mean)) / (1.0 - lambda_order);
}

// Monte Carlo conditional Renyi divergence d_lambda(p_v1, p_v2) with fresh
// x draws; the expectation over y is exact via the closed form above.
inline double renyi_conditional(const Eigen::RowVectorXd& v1, const Eigen::RowVectorXd& v2,
                                const NetworkModel& model, const RenyiConfig& cfg) {
    validate(cfg);
    if (v1.cols() != model.m || v2.cols() != model.m)
        throw std::invalid_argument("renyi_conditional: parameter width mismatch");
    const Eigen::VectorXd diff = (v2 - v1).transpose();
    auto rng = make_rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd deltas(cfg.mc_samples);
    const long chunk = 4096;
    Eigen::MatrixXd X;
    for (long start = 0; start < cfg.mc_samples; start += chunk) {
        const long rows = std::min(chunk, cfg.mc_samples - start);
        X.resize(rows, model.d);
        for (long r = 0; r < rows; ++r)
            for (int c = 0; c < model.d; ++c) X(r, c) = gauss(rng);
        deltas.segment(start, rows) = relu_features(X, model.W) * diff;
    }
    return renyi_from_margins(deltas, cfg.lambda_order, model.sigma2);
}

// KL between the conditionals averaged over x: (v1-v2) J (v1-v2)^T / (2 sigma2).
inline double kl_conditional(const Eigen::RowVectorXd& v1, const Eigen::RowVectorXd& v2,
                             const FimMatrix& fim, double sigma2) {
    if (v1.cols() != fim.J.rows() || v2.cols() != fim.J.rows())
        throw std::invalid_argument("kl_conditional: shape mismatch");
    if (sigma2 <= 0.0)
        throw std::invalid_argument("kl_conditional: sigma2 must be positive");
    const Eigen::RowVectorXd diff = v1 - v2;
    const double q = diff * fim.J * diff.transpose();
    return std::max(q, 0.0) / (2.0 * sigma2);
}

struct BoundBreakdown {
    double term_log = 0.0;
    double term_c = 0.0;
    double term_dim = 0.0;
    double term_tail = 0.0;
    double total = 0.0;
    double beta = 0.0;        // tail mass used by the bound (after any clipping)
    bool beta_clipped = false;
};

namespace detail {

inline double c_term_sum(const Eigen::VectorXd& lambdas, double alpha, double sigma2, long n,
                         double radius2) {
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    double s = 0.0;
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        if (lambdas(i) <= 0.0)
            throw std::invalid_argument("bound: eigenvalues must be positive");
        const double c = std::sqrt(radius2 * lambdas(i) / (alpha * sigma2));
        s += std::log(c) + 1.0 / (c * sqrt_n);
    }
    return s;
}

}  // namespace detail

// Theorem-2 scale (total redundancy over n samples):
//   alpha D log n / 2 + alpha sum_i (log c_i + 1/(c_i sqrt n)) + alpha D / 2
//   + 2 n beta_D tr(J) / sigma2,   c_i = sqrt(lambda_i / (alpha sigma2)).
inline BoundBreakdown thm2_rhs(const Eigen::VectorXd& lambdas, double trace, int D, double alpha,
                               double sigma2, long n) {
    if (!(alpha > 1.0)) throw std::invalid_argument("thm2_rhs: alpha must exceed 1");
    if (D != static_cast<int>(lambdas.size()))
        throw std::invalid_argument("thm2_rhs: D does not match the eigenvalue count");
    if (trace <= 0.0) throw std::invalid_argument("thm2_rhs: trace must be positive");
    BoundBreakdown b;
    const double nd = static_cast<double>(n);
    b.beta = std::clamp(1.0 - lambdas.sum() / trace, 0.0, 1.0);
    b.term_log = alpha * D * std::log(nd) / 2.0;
    b.term_c = alpha * detail::c_term_sum(lambdas, alpha, sigma2, n, 1.0);
    b.term_dim = alpha * D / 2.0;
    b.term_tail = 2.0 * nd * b.beta * trace / sigma2;
    b.total = b.term_log + b.term_c + b.term_dim + b.term_tail;
    return b;
}

// Corollary-1 scale (per-sample risk): every coded term of Theorem 2
// divided by n, tail term 2 beta_D tr(J) / sigma2.
inline BoundBreakdown cor1_rhs(const Eigen::VectorXd& lambdas, double trace, int D, double alpha,
                               double sigma2, long n) {
    BoundBreakdown b = thm2_rhs(lambdas, trace, D, alpha, sigma2, n);
    const double nd = static_cast<double>(n);
    b.term_log /= nd;
    b.term_c /= nd;
    b.term_dim /= nd;
    b.term_tail /= nd;
    b.total = b.term_log + b.term_c + b.term_dim + b.term_tail;
    return b;
}

// Theorem-3 scale (per-sample risk, ReLU design):
//   D log n / (2n) + (alpha/n) sum_i (log c_i + 1/(c_i sqrt n)) + D alpha / (2n)
//   + 2 (1+eps1)(beta+eps1) tr(J) / sigma2,
// with c_i = sqrt((1+eps1) lambda_i / (alpha sigma2)) and
// beta = 1 - sum_i lambda_i / tr(J) over the approximate eigenvalues.
// The approximate eigenvalue sum can exceed a Monte Carlo trace (it does for
// small d, and trace estimates fluctuate at small m); the resulting negative
// beta is clipped to 0 and flagged. A sum beyond twice the trace means the
// inputs are inconsistent.
inline BoundBreakdown thm3_rhs(const Eigen::VectorXd& approx_lambdas, double trace_estimate,
                               int D, double alpha, double sigma2, long n, double eps1) {
    if (!(alpha > 1.0)) throw std::invalid_argument("thm3_rhs: alpha must exceed 1");
    if (D != static_cast<int>(approx_lambdas.size()))
        throw std::invalid_argument("thm3_rhs: D does not match the eigenvalue count");
    if (trace_estimate <= 0.0) throw std::invalid_argument("thm3_rhs: trace must be positive");
    if (eps1 < 0.0) throw std::invalid_argument("thm3_rhs: eps1 must be nonnegative");
    const double lambda_sum = approx_lambdas.sum();
    if (lambda_sum > trace_estimate * 2.0)
        throw std::invalid_argument("thm3_rhs: eigenvalue sum exceeds twice the trace");
    BoundBreakdown b;
    double beta = 1.0 - lambda_sum / trace_estimate;
    if (beta < 0.0) {
        beta = 0.0;
        b.beta_clipped = true;
    }
    b.beta = beta;
    const double nd = static_cast<double>(n);
    b.term_log = D * std::log(nd) / (2.0 * nd);
    b.term_c = alpha / nd *
               detail::c_term_sum(approx_lambdas, alpha, sigma2, n, 1.0 + eps1);
    b.term_dim = D * alpha / (2.0 * nd);
    b.term_tail = 2.0 * (1.0 + eps1) * (beta + eps1) * trace_estimate / sigma2;
    b.total = b.term_log + b.term_c + b.term_dim + b.term_tail;
    return b;
}

struct TrialSummary {
    double mean = 0.0;
    double se = 0.0;
};

struct RiskTrialOutcome {
    double risk = 0.0;       // d_lambda(p*, p_ddot), Monte Carlo
    double redundancy = 0.0; // log p*(y|x) - log p_ddot(y|x) + alpha L(ddot)
};

inline TrialSummary summarize(const std::vector<double>& values) {
    const double T = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= T;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= (T - 1.0);
    return TrialSummary{mean, std::sqrt(var / T)};
}

// One fit per trial on an independent dataset; datasets and Renyi draws are
// sub-seeded per trial, so trials can run on any worker count without
// changing the outcome.
inline std::vector<RiskTrialOutcome> run_risk_trials(
    const NetworkModel& model, const TrueParam& vstar, const CodeSpec& spec,
    const ApproxBasis& basis, double alpha, const RenyiConfig& cfg, long trials, long n,
    std::uint64_t seed, SolveMethod method, bool compute_risk, unsigned threads = 1) {
    if (trials < 2) throw std::invalid_argument("run_risk_trials: need at least 2 trials");
    if (compute_risk) {
        validate(cfg);
        if (cfg.lambda_order > 1.0 - 1.0 / alpha + 1e-12)
            throw std::invalid_argument(
                "run_risk_trials: lambda_order must not exceed 1 - 1/alpha");
    }
    auto one_trial = [&](std::size_t t) {
        const Dataset data =
            generate_dataset(model, vstar, n, derive_seed(seed, 2 * t));
        const ReducedProblem problem = reduce(data, basis.basis_rows, model.sigma2);
        const MdlEstimate est = mdl_estimate(problem, spec, alpha, method);
        RiskTrialOutcome out;
        out.redundancy = est.objective - neg_log_likelihood(vstar.v, data, model.sigma2);
        if (compute_risk) {
            RenyiConfig trial_cfg = cfg;
            trial_cfg.seed = derive_seed(cfg.seed, 2 * t + 1);
            out.risk = renyi_conditional(vstar.v, est.v_ddot, model, trial_cfg);
        }
        return out;
    };
    return parallel_tasks<RiskTrialOutcome>(static_cast<std::size_t>(trials), threads, one_trial);
}

// Mean and standard error of log p*(y^n|x^n) - log p_ddot(y^n|x^n) + alpha L(ddot)
// over independent datasets.
inline TrialSummary empirical_redundancy(const NetworkModel& model, const TrueParam& vstar,
                                         const CodeSpec& spec, const ApproxBasis& basis,
                                         double alpha, long trials, long n, std::uint64_t seed,
                                         SolveMethod method = SolveMethod::nearest_plane,
                                         unsigned threads = 1) {
    const auto outcomes = run_risk_trials(model, vstar, spec, basis, alpha, RenyiConfig{}, trials,
                                          n, seed, method, false, threads);
    std::vector<double> values;
    values.reserve(outcomes.size());
    for (const auto& o : outcomes) values.push_back(o.redundancy);
    return summarize(values);
}

// Mean and standard error of d_lambda(p*, p_ddot) over independent datasets.
inline TrialSummary empirical_risk(const NetworkModel& model, const TrueParam& vstar,
                                   const CodeSpec& spec, const ApproxBasis& basis, double alpha,
                                   const RenyiConfig& cfg, long trials, long n,
                                   std::uint64_t seed,
                                   SolveMethod method = SolveMethod::nearest_plane,
                                   unsigned threads = 1) {
    const auto outcomes = run_risk_trials(model, vstar, spec, basis, alpha, cfg, trials, n, seed,
                                          method, true, threads);
    std::vector<double> values;
    values.reserve(outcomes.size());
    for (const auto& o : outcomes) values.push_back(o.risk);
    return summarize(values);
}

}  // namespace mdlreg
