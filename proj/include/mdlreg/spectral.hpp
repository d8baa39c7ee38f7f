#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mdlreg/errors.hpp"
#include "mdlreg/model.hpp"
#include "mdlreg/parallel.hpp"
#include "mdlreg/rng.hpp"

namespace mdlreg {

enum class FimSource { empirical, monte_carlo, analytic_reconstruction };

// Second-moment matrix J = E[X^T X] of the feature vector; the Fisher
// information of the model is I = J / sigma2 (never stored separately).
struct FimMatrix {
    Eigen::MatrixXd J;
    FimSource source = FimSource::empirical;
    long sample_count = 0; // x-draws used (0 for analytic reconstructions)
};

struct Spectrum {
    Eigen::VectorXd eigenvalues;  // descending
    Eigen::MatrixXd eigenvectors; // orthonormal rows u^(i), aligned with eigenvalues
    double trace = 0.0;           // sum of eigenvalues
};

// The analytic near-eigenbasis of J for the ReLU model. Rows are ordered
//   [ v0; W_1..W_d; vbar_1..vbar_{d-1}; v^(a,b) for a<b lexicographic ]
// with grouped approximate eigenvalues
//   [ (2d+1)/(4pi); 1/4 (d times); 1/(2 pi d) (D-d-1 times) ].
struct ApproxBasis {
    int D = 0;
    Eigen::MatrixXd basis_rows;        // D x m
    Eigen::VectorXd approx_eigenvalues; // length D
};

struct GramReport {
    Eigen::MatrixXd G;         // D x D Gram matrix of the basis rows
    double eps1 = 0.0;         // max(||G - I||_2, ||G^-1 - I||_2)
    Eigen::MatrixXd dual_rows; // D x m, row i satisfies u^(i) dual_j^T = delta_ij
};

inline int relu_basis_dimension(int d) { return d * (d + 3) / 2; }

// Grouped approximate eigenvalues for the ReLU model.
inline Eigen::VectorXd relu_approx_eigenvalues(int d) {
    if (d < 1) throw std::invalid_argument("relu_approx_eigenvalues: d must be positive");
    const int D = relu_basis_dimension(d);
    Eigen::VectorXd lam(D);
    lam(0) = (2.0 * d + 1.0) / (4.0 * std::numbers::pi);
    for (int i = 1; i <= d; ++i) lam(i) = 0.25;
    for (int i = d + 1; i < D; ++i) lam(i) = 1.0 / (2.0 * std::numbers::pi * d);
    return lam;
}

namespace detail {

inline Eigen::MatrixXd symmetric_from_lower(Eigen::MatrixXd M) {
    M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
    return M;
}

}  // namespace detail

// Jhat = (1/n) sum_t X_t^T X_t
inline FimMatrix empirical_fim(const Dataset& data) {
    if (data.n < 1) throw std::invalid_argument("empirical_fim: empty dataset");
    const long m = data.features.cols();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    J.selfadjointView<Eigen::Lower>().rankUpdate(data.features.transpose(),
                                                 1.0 / static_cast<double>(data.n));
    return FimMatrix{detail::symmetric_from_lower(std::move(J)), FimSource::empirical, data.n};
}

// Monte Carlo estimate of J = E[X^T X] over fresh x ~ N(0, I_d).
// Draws are split into fixed-size chunks seeded by (seed, chunk index) and
// chunks are assigned to a fixed number of accumulation groups, so the
// result is bit-identical for any thread count.
inline FimMatrix monte_carlo_fim(const NetworkModel& model, long samples, std::uint64_t seed,
                                 unsigned threads = 1) {
    if (samples < 1) throw std::invalid_argument("monte_carlo_fim: samples must be positive");
    const long chunk = 4096;
    const long num_chunks = (samples + chunk - 1) / chunk;
    const long num_groups = std::min<long>(num_chunks, 8);
    const long chunks_per_group = (num_chunks + num_groups - 1) / num_groups;
    const int m = model.m;

    auto group_sum = [&](std::size_t g) {
        Eigen::MatrixXd Jg = Eigen::MatrixXd::Zero(m, m);
        const long first = static_cast<long>(g) * chunks_per_group;
        const long last = std::min(first + chunks_per_group, num_chunks);
        Eigen::MatrixXd X;
        for (long ci = first; ci < last; ++ci) {
            const long rows = std::min(chunk, samples - ci * chunk);
            auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(ci)));
            std::normal_distribution<double> gauss(0.0, 1.0);
            X.resize(rows, model.d);
            for (long r = 0; r < rows; ++r)
                for (int c = 0; c < model.d; ++c) X(r, c) = gauss(rng);
            const Eigen::MatrixXd phi = relu_features(X, model.W);
            Jg.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), 1.0);
        }
        return Jg;
    };
    auto partials = parallel_tasks<Eigen::MatrixXd>(static_cast<std::size_t>(num_groups),
                                                    threads, group_sum);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (const auto& Jg : partials) J += Jg;
    J /= static_cast<double>(samples);
    return FimMatrix{detail::symmetric_from_lower(std::move(J)), FimSource::monte_carlo, samples};
}

inline Spectrum exact_spectrum(const FimMatrix& fim) {
    const long m = fim.J.rows();
    if (fim.J.cols() != m) throw std::invalid_argument("exact_spectrum: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(fim.J);
    if (solver.info() != Eigen::Success)
        throw numerical_error("exact_spectrum: eigensolver did not converge");
    Spectrum s;
    s.eigenvalues = solver.eigenvalues().reverse();
    s.eigenvectors = solver.eigenvectors().rowwise().reverse().transpose();
    s.trace = s.eigenvalues.sum();
    return s;
}

// beta_D = 1 - (sum of the top D eigenvalues) / tr(J)
inline double beta_D(const Spectrum& spectrum, int D) {
    const int m = static_cast<int>(spectrum.eigenvalues.size());
    if (D < 1 || D > m) throw std::invalid_argument("beta_D: D out of range");
    if (spectrum.trace <= 0.0)
        throw numerical_error("beta_D: zero trace (degenerate model)");
    const double partial = spectrum.eigenvalues.head(D).sum();
    return std::clamp(1.0 - partial / spectrum.trace, 0.0, 1.0);
}

// Builds the analytic basis from W:
//   v0_i      = ||W^(i)|| / sqrt(d)          (W^(i) = i-th column of W)
//   v^(a,b)_i = sqrt(d) W_ai W_bi / ||W^(i)||
//   v^(g)     = (v^(g,g) - v0) / sqrt(2)
// The d vectors v^(g) sum to zero, so Gram-Schmidt over them must yield
// exactly d-1 orthonormal vectors vbar.
inline ApproxBasis approx_basis(const NetworkModel& model) {
    const int d = model.d;
    const int m = model.m;
    const int D = relu_basis_dimension(d);
    const double sqrt_d = std::sqrt(static_cast<double>(d));

    Eigen::RowVectorXd col_norms = model.W.colwise().norm();
    for (int i = 0; i < m; ++i)
        if (col_norms(i) <= 0.0)
            throw std::invalid_argument("approx_basis: zero column in W");

    Eigen::MatrixXd rows(D, m);
    rows.row(0) = col_norms / sqrt_d; // v0
    for (int l = 0; l < d; ++l) rows.row(1 + l) = model.W.row(l);

    // v^(g) = (v^(g,g) - v0) / sqrt(2)
    Eigen::MatrixXd vgamma(d, m);
    for (int g = 0; g < d; ++g)
        vgamma.row(g) =
            (sqrt_d * model.W.row(g).cwiseProduct(model.W.row(g)).cwiseQuotient(col_norms) -
             rows.row(0)) /
            std::sqrt(2.0);

    // Orthonormal basis of span{v^(g)} by modified Gram-Schmidt; a vector is
    // dropped when its residual falls below 1e-6 of its original norm, or
    // when the original is numerically zero outright (d = 1 makes every
    // v^(g) vanish identically).
    std::vector<Eigen::RowVectorXd> vbar;
    for (int g = 0; g < d; ++g) {
        Eigen::RowVectorXd r = vgamma.row(g);
        const double orig = r.norm();
        for (const auto& b : vbar) r -= (r * b.transpose())(0, 0) * b;
        if (orig <= 1e-9 || r.norm() < 1e-6 * orig) continue;
        vbar.push_back(r / r.norm());
    }
    if (static_cast<int>(vbar.size()) != d - 1)
        throw numerical_error("approx_basis: span{v^(gamma)} does not have rank d-1");
    for (int s = 0; s < d - 1; ++s) rows.row(1 + d + s) = vbar[s];

    int idx = 2 * d;
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
            rows.row(idx++) = sqrt_d * model.W.row(a)
                                           .cwiseProduct(model.W.row(b))
                                           .cwiseQuotient(col_norms);

    return ApproxBasis{D, std::move(rows), relu_approx_eigenvalues(d)};
}

// Entrywise evaluation of the residual series
//   R_ij = (1/2pi) sum_{k>=1} C(2k,k) (W^(i).W^(j))^(2k+2)
//          / (2^(2k) (2k+1) (2k+2) (||W^(i)|| ||W^(j)||)^(2k+1)).
// Written in terms of the column cosine c this is
//   (a_i a_j / 2pi) sum_{k>=1} t_k,  t_1 = c^4/24,
//   t_{k+1}/t_k = c^2 (2k+1)^2 / ((2k+3)(2k+4)).
inline Eigen::MatrixXd residual_matrix(const NetworkModel& model, double rel_tol = 1e-12) {
    if (!(rel_tol > 0.0 && rel_tol < 1.0))
        throw std::invalid_argument("residual_matrix: rel_tol must be in (0, 1)");
    const int m = model.m;
    Eigen::RowVectorXd col_norms = model.W.colwise().norm();
    for (int i = 0; i < m; ++i)
        if (col_norms(i) <= 0.0)
            throw std::invalid_argument("residual_matrix: zero column in W");

    constexpr int max_terms = 200;
    Eigen::MatrixXd R(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            const double dot = model.W.col(i).dot(model.W.col(j));
            if (dot == 0.0) {
                R(i, j) = R(j, i) = 0.0;
                continue;
            }
            double c = dot / (col_norms(i) * col_norms(j));
            if (std::abs(c) > 1.0 + 1e-9)
                throw numerical_error("residual_matrix: column cosine exceeds 1");
            c = std::clamp(c, -1.0, 1.0);
            const double c2 = c * c;
            double term = c2 * c2 / 24.0;
            double sum = 0.0;
            for (int k = 1; k <= max_terms; ++k) {
                sum += term;
                const double next =
                    term * c2 * static_cast<double>((2 * k + 1) * (2 * k + 1)) /
                    static_cast<double>((2 * k + 3) * (2 * k + 4));
                if (next < rel_tol * sum) break;
                term = next;
            }
            R(i, j) = R(j, i) =
                col_norms(i) * col_norms(j) * sum / (2.0 * std::numbers::pi);
        }
    }
    return R;
}

// G = U U^T, eps1 = max(||G - I||_2, ||G^-1 - I||_2), dual rows = G^-1 U.
// Norms come from the eigendecomposition of G (D is small).
inline GramReport gram_report(const ApproxBasis& basis) {
    const int D = basis.D;
    Eigen::MatrixXd G = basis.basis_rows * basis.basis_rows.transpose();
    G = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(G);
    if (solver.info() != Eigen::Success)
        throw numerical_error("gram_report: eigensolver did not converge");
    const Eigen::VectorXd w = solver.eigenvalues();
    if (w(0) <= 0.0 || w(D - 1) / w(0) > 1e12)
        throw numerical_error("gram_report: basis Gram matrix is degenerate");
    double eps1 = 0.0;
    for (int i = 0; i < D; ++i)
        eps1 = std::max({eps1, std::abs(w(i) - 1.0), std::abs(1.0 / w(i) - 1.0)});
    const Eigen::MatrixXd Ginv = solver.eigenvectors() *
                                 w.cwiseInverse().asDiagonal() *
                                 solver.eigenvectors().transpose();
    return GramReport{std::move(G), eps1, Ginv * basis.basis_rows};
}

// J ~= sum_i lambda_i u^(i)T u^(i) + R
inline FimMatrix analytic_fim_reconstruction(const ApproxBasis& basis, const Eigen::MatrixXd& R) {
    if (R.rows() != basis.basis_rows.cols() || R.cols() != basis.basis_rows.cols())
        throw std::invalid_argument("analytic_fim_reconstruction: shape mismatch");
    Eigen::MatrixXd J = basis.basis_rows.transpose() *
                            basis.approx_eigenvalues.asDiagonal() * basis.basis_rows +
                        R;
    J = 0.5 * (J + J.transpose());
    return FimMatrix{std::move(J), FimSource::analytic_reconstruction, 0};
}

}  // namespace mdlreg
