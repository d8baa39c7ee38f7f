#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdlreg/errors.hpp"
#include "mdlreg/model.hpp"
#include "mdlreg/twostage.hpp"

namespace mdlreg {

// Regression restricted to the coded directions: z_t = X_t U^T, so fitting
// theta on Z is the same as fitting v = theta U over span{u^(i)}.
struct ReducedProblem {
    Eigen::MatrixXd Z; // n x D
    Eigen::VectorXd y;
    double sigma2 = 1.0;
    Eigen::MatrixXd basis_rows; // D x m, kept to reconstruct v from theta
    Eigen::MatrixXd zTz;        // D x D normal-equations matrix
    Eigen::VectorXd zTy;
};

enum class SolveMethod { exhaustive, nearest_plane };

inline std::string to_string(SolveMethod method) {
    return method == SolveMethod::exhaustive ? "exhaustive" : "nearest_plane";
}

struct MdlEstimate {
    Eigen::VectorXd theta_hat;  // unconstrained least squares
    Eigen::VectorXd theta_ddot; // selected grid point
    Eigen::RowVectorXd v_ddot;  // sum_i theta_ddot_i u^(i)
    double objective = 0.0;     // neg_log_lik + alpha * code_length_nats
    double neg_log_lik = 0.0;
    double code_length_nats = 0.0;
    SolveMethod method = SolveMethod::exhaustive;
    bool clamped = false; // nearest-plane target fell outside some grid
    bool ridged = false;  // least squares needed the ridge fallback
};

inline ReducedProblem reduce(const Dataset& data, const Eigen::MatrixXd& basis_rows,
                             double sigma2) {
    if (basis_rows.cols() != data.features.cols())
        throw std::invalid_argument("reduce: basis width mismatch");
    ReducedProblem p;
    p.Z = data.features * basis_rows.transpose();
    p.y = data.responses;
    p.sigma2 = sigma2;
    p.basis_rows = basis_rows;
    p.zTz = p.Z.transpose() * p.Z;
    p.zTz = 0.5 * (p.zTz + p.zTz.transpose());
    p.zTy = p.Z.transpose() * p.y;
    return p;
}

struct LeastSquaresResult {
    Eigen::VectorXd theta_hat;
    bool ridged = false;
};

// theta_hat = argmin ||y - Z theta||^2. Singular normal equations fall back
// to a flagged ridge of 1e-10 tr(Z^T Z)/D.
inline LeastSquaresResult least_squares(const ReducedProblem& problem) {
    const int D = static_cast<int>(problem.zTz.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(problem.zTz);
    if (solver.info() != Eigen::Success)
        throw numerical_error("least_squares: eigensolver did not converge");
    const Eigen::VectorXd w = solver.eigenvalues();
    const double trace = problem.zTz.trace();
    if (trace <= 0.0) return LeastSquaresResult{Eigen::VectorXd::Zero(D), true};
    double ridge = 0.0;
    bool ridged = false;
    if (w(0) <= 1e-12 * trace) {
        ridge = 1e-10 * trace / D;
        ridged = true;
    }
    const Eigen::VectorXd rhs = solver.eigenvectors().transpose() * problem.zTy;
    const Eigen::VectorXd scaled = rhs.array() / (w.array() + ridge);
    return LeastSquaresResult{solver.eigenvectors() * scaled, ridged};
}

namespace detail {

// Quadratic data term of the objective:
//   nll(theta) = (y^T y - 2 theta . zTy + theta^T zTz theta) / (2 sigma2)
//                + (n/2) log(2 pi sigma2)
struct ReducedNll {
    const ReducedProblem& p;
    double yTy;
    double log_norm;
    explicit ReducedNll(const ReducedProblem& problem)
        : p(problem),
          yTy(problem.y.squaredNorm()),
          log_norm(0.5 * static_cast<double>(problem.y.size()) *
                   std::log(2.0 * std::numbers::pi * problem.sigma2)) {}
    double operator()(const Eigen::VectorXd& theta) const {
        const double quad = yTy - 2.0 * theta.dot(p.zTy) + theta.dot(p.zTz * theta);
        return quad / (2.0 * p.sigma2) + log_norm;
    }
};

// Nearest grid point of direction i to t, ties toward the smaller value.
inline long round_to_grid(const CodeSpec& spec, int i, double t, bool& clamped) {
    const CodeDirection& dir = spec.directions[static_cast<std::size_t>(i)];
    const double z = (t + dir.delta * static_cast<double>(dir.q_prime) / 2.0) / dir.delta;
    long k = static_cast<long>(std::ceil(z - 0.5));
    if (k < 0) {
        k = 0;
        clamped = true;
    } else if (k > dir.q_prime) {
        k = dir.q_prime;
        clamped = true;
    }
    return k;
}

}  // namespace detail

// MDL estimate over the quantized grid. The code length is constant across
// grid points, so the penalized argmin is the grid minimizer of the
// quadratic. `exhaustive` enumerates the grid in lexicographic index order
// (exact argmin, first minimum kept); `nearest_plane` is Babai rounding on
// the Cholesky factor of Z^T Z, fixing coordinates in decreasing-lambda
// order conditioned on the ones already chosen.
inline MdlEstimate mdl_estimate(const ReducedProblem& problem, const CodeSpec& spec,
                                double alpha, SolveMethod method) {
    if (std::abs(alpha - spec.alpha) > 1e-12)
        throw std::invalid_argument("mdl_estimate: alpha does not match the code spec");
    const int D = spec.D;
    if (problem.Z.cols() != D)
        throw std::invalid_argument("mdl_estimate: dimension mismatch with code spec");

    MdlEstimate est;
    est.method = method;
    const LeastSquaresResult ls = least_squares(problem);
    est.theta_hat = ls.theta_hat;
    est.ridged = ls.ridged;
    const detail::ReducedNll nll(problem);

    Eigen::VectorXd theta(D);
    if (method == SolveMethod::exhaustive) {
        if (spec.grid_size(1e7 + 1) > 1e7)
            throw std::invalid_argument("mdl_estimate: exhaustive grid exceeds the 1e7 budget");
        std::vector<long> idx(static_cast<std::size_t>(D), 0);
        Eigen::VectorXd point(D);
        double best = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_point(D);
        bool done = (D == 0);
        while (!done) {
            for (int i = 0; i < D; ++i)
                point(i) = spec.grid_point(i, idx[static_cast<std::size_t>(i)]);
            const double value = nll(point);
            if (value < best) {
                best = value;
                best_point = point;
            }
            // lexicographic successor: last coordinate moves fastest
            int pos = D - 1;
            while (pos >= 0) {
                if (++idx[static_cast<std::size_t>(pos)] <=
                    spec.directions[static_cast<std::size_t>(pos)].q_prime)
                    break;
                idx[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            done = (pos < 0);
        }
        theta = best_point;
    } else {
        // Reverse-permute so the largest-lambda direction is decided first.
        Eigen::MatrixXd A = problem.zTz;
        if (ls.ridged) {
            const double trace = A.trace();
            A.diagonal().array() += (trace > 0.0 ? 1e-10 * trace / D : 1e-300);
        }
        Eigen::MatrixXd B(D, D);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) B(i, j) = A(D - 1 - i, D - 1 - j);
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        double jitter = 1e-12 * (B.trace() > 0 ? B.trace() / D : 1.0);
        while (llt.info() != Eigen::Success && jitter < 1e6) {
            Eigen::MatrixXd Bj = B;
            Bj.diagonal().array() += jitter;
            llt.compute(Bj);
            jitter *= 10.0;
        }
        if (llt.info() != Eigen::Success)
            throw numerical_error("mdl_estimate: Cholesky factorization failed");
        const Eigen::MatrixXd R = llt.matrixU();
        Eigen::VectorXd center(D); // theta_hat in permuted coordinates
        for (int i = 0; i < D; ++i) center(i) = ls.theta_hat(D - 1 - i);
        Eigen::VectorXd chosen(D);
        for (int k = D - 1; k >= 0; --k) {
            double shift = 0.0;
            for (int j = k + 1; j < D; ++j) shift += R(k, j) * (chosen(j) - center(j));
            const double target = center(k) - shift / R(k, k);
            const int orig = D - 1 - k;
            const long gi = detail::round_to_grid(spec, orig, target, est.clamped);
            chosen(k) = spec.grid_point(orig, gi);
        }
        for (int i = 0; i < D; ++i) theta(D - 1 - i) = chosen(i);
    }

    est.theta_ddot = theta;
    est.v_ddot = theta.transpose() * problem.basis_rows;
    est.neg_log_lik = nll(theta);
    est.code_length_nats = spec.total_length_nats();
    est.objective = est.neg_log_lik + alpha * est.code_length_nats;
    return est;
}

struct LAlphaResult {
    double value = 0.0;              // -log p_theta_ddot + alpha L(theta_ddot)
    double description_length = 0.0; // the alpha = 1 value, L(y^n | x^n)
};

inline LAlphaResult l_alpha(const Dataset& data, const CodeSpec& spec,
                            const Eigen::MatrixXd& basis_rows, double alpha,
                            SolveMethod method = SolveMethod::exhaustive) {
    const ReducedProblem problem = reduce(data, basis_rows, spec.sigma2);
    const MdlEstimate est = mdl_estimate(problem, spec, alpha, method);
    return LAlphaResult{est.objective, est.neg_log_lik + est.code_length_nats};
}

}  // namespace mdlreg
