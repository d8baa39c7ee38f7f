#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "mdlreg/estimator.hpp"
#include "mdlreg/rng.hpp"
#include "mdlreg/spectral.hpp"

using namespace mdlreg;

namespace {

Dataset dataset_from(Eigen::MatrixXd features, Eigen::VectorXd y) {
    Dataset data;
    data.n = features.rows();
    data.inputs = Eigen::MatrixXd::Zero(features.rows(), 1);
    data.features = std::move(features);
    data.responses = std::move(y);
    return data;
}

// enumerate the grid and return the lexicographically-first argmin
Eigen::VectorXd brute_force_grid_argmin(const ReducedProblem& p, const CodeSpec& spec) {
    const int D = spec.D;
    std::vector<long> idx(static_cast<std::size_t>(D), 0);
    Eigen::VectorXd best_point(D), point(D);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        for (int i = 0; i < D; ++i) point(i) = spec.grid_point(i, idx[i]);
        const double value = (p.y - p.Z * point).squaredNorm();
        if (value < best) {
            best = value;
            best_point = point;
        }
        int pos = D - 1;
        while (pos >= 0 && ++idx[pos] > spec.directions[pos].q_prime) idx[pos--] = 0;
        if (pos < 0) break;
    }
    return best_point;
}

}  // namespace

TEST_CASE("reduce projects onto the coded directions", "[estimator]") {
    auto rng = make_rng(3);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd F(20, 6);
    for (int i = 0; i < F.size(); ++i) F(i / 6, i % 6) = gauss(rng);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) y(i) = gauss(rng);
    const Dataset data = dataset_from(F, y);

    // axis-aligned basis picks out feature columns
    Eigen::MatrixXd U = Eigen::MatrixXd::Identity(3, 6);
    const ReducedProblem p = reduce(data, U, 1.0);
    REQUIRE(p.Z == F.leftCols(3));
    REQUIRE(p.zTz.isApprox(p.zTz.transpose(), 1e-14));

    // a full orthonormal reparameterization preserves the residuals
    const Eigen::MatrixXd Q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(F.topRows(6)).householderQ();
    const ReducedProblem full = reduce(data, Q.transpose(), 1.0);
    const Eigen::VectorXd theta = least_squares(full).theta_hat;
    const Eigen::VectorXd vhat =
        F.colPivHouseholderQr().solve(y);
    const double r_theta = (y - full.Z * theta).norm();
    const double r_v = (y - F * vhat).norm();
    REQUIRE(r_theta == Catch::Approx(r_v).margin(1e-8));

    // operator norm bound on the reduced features
    REQUIRE(full.Z.norm() <= F.norm() * 1.0 + 1e-9);
}

TEST_CASE("least_squares closed cases", "[estimator]") {
    // column of ones: the mean
    Eigen::MatrixXd Z(2, 1);
    Z << 1.0, 1.0;
    Eigen::VectorXd y(2);
    y << 1.0, 3.0;
    ReducedProblem p;
    p.Z = Z;
    p.y = y;
    p.sigma2 = 1.0;
    p.zTz = Z.transpose() * Z;
    p.zTy = Z.transpose() * y;
    const LeastSquaresResult ls = least_squares(p);
    REQUIRE(ls.theta_hat(0) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE_FALSE(ls.ridged);

    // exact interpolation of noiseless data
    auto rng = make_rng(5);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd Z2(30, 3);
    for (int i = 0; i < Z2.size(); ++i) Z2(i / 3, i % 3) = gauss(rng);
    Eigen::VectorXd theta_star(3);
    theta_star << 0.4, -0.2, 0.1;
    ReducedProblem p2;
    p2.Z = Z2;
    p2.y = Z2 * theta_star;
    p2.sigma2 = 1.0;
    p2.zTz = Z2.transpose() * Z2;
    p2.zTy = Z2.transpose() * p2.y;
    const LeastSquaresResult ls2 = least_squares(p2);
    REQUIRE((ls2.theta_hat - theta_star).norm() <= 1e-8);
    // residual orthogonality
    const Eigen::VectorXd resid = p2.y - p2.Z * ls2.theta_hat;
    REQUIRE((p2.Z.transpose() * resid).norm() <= 1e-8 * p2.zTy.norm() + 1e-12);

    // duplicated column triggers the flagged ridge fallback
    Eigen::MatrixXd Z3(30, 2);
    Z3.col(0) = Z2.col(0);
    Z3.col(1) = Z2.col(0);
    ReducedProblem p3;
    p3.Z = Z3;
    p3.y = p2.y;
    p3.sigma2 = 1.0;
    p3.zTz = Z3.transpose() * Z3;
    p3.zTy = Z3.transpose() * p3.y;
    const LeastSquaresResult ls3 = least_squares(p3);
    REQUIRE(ls3.ridged);
    REQUIRE(ls3.theta_hat.allFinite());
}

TEST_CASE("least_squares attains the quadratic minimum (grid scan)", "[estimator]") {
    auto rng = make_rng(8);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd Z(40, 2);
    for (int i = 0; i < Z.size(); ++i) Z(i / 2, i % 2) = gauss(rng);
    Eigen::VectorXd y = Z * Eigen::Vector2d(0.3, -0.2);
    for (int i = 0; i < y.size(); ++i) y(i) += 0.1 * gauss(rng);
    ReducedProblem p;
    p.Z = Z;
    p.y = y;
    p.sigma2 = 1.0;
    p.zTz = Z.transpose() * Z;
    p.zTy = Z.transpose() * y;
    const Eigen::VectorXd theta = least_squares(p).theta_hat;
    const double at_hat = (y - Z * theta).squaredNorm();
    double scan_min = std::numeric_limits<double>::infinity();
    for (double a = -1.0; a <= 1.0; a += 1e-3)
        for (double b = -1.0; b <= 1.0; b += 1e-3)
            scan_min = std::min(scan_min, (y - Z * Eigen::Vector2d(a, b)).squaredNorm());
    REQUIRE(at_hat <= scan_min + 1e-9);
}

TEST_CASE("mdl_estimate on a separable problem", "[estimator]") {
    // orthogonal Z columns make the quadratic separable: both methods must
    // give the per-coordinate nearest grid point
    auto rng = make_rng(11);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd M(24, 3);
    for (int i = 0; i < M.size(); ++i) M(i / 3, i % 3) = gauss(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(M).householderQ() *
                              Eigen::MatrixXd::Identity(24, 3);
    Eigen::MatrixXd Z = Q * Eigen::Vector3d(2.0, 1.5, 1.0).asDiagonal();
    Eigen::VectorXd y = Z * Eigen::Vector3d(0.31, -0.44, 0.12);

    Dataset data = dataset_from(Z, y); // identity basis: features are Z itself
    const Eigen::MatrixXd U = Eigen::MatrixXd::Identity(3, 3);
    const ReducedProblem p = reduce(data, U, 1.0);

    Eigen::VectorXd lambdas(3);
    lambdas << 0.5, 0.4, 0.3;
    const CodeSpec spec = build_code(lambdas, 2.0, 1.0, 200, 1.0);

    const MdlEstimate ex = mdl_estimate(p, spec, 2.0, SolveMethod::exhaustive);
    const MdlEstimate np = mdl_estimate(p, spec, 2.0, SolveMethod::nearest_plane);
    REQUIRE(ex.theta_ddot == np.theta_ddot);
    const QuantizedPoint nearest = quantize_point(spec, least_squares(p).theta_hat);
    REQUIRE(ex.theta_ddot == nearest.value);

    // objective identity holds exactly
    REQUIRE(ex.objective == ex.neg_log_lik + 2.0 * ex.code_length_nats);
    REQUIRE(ex.method == SolveMethod::exhaustive);
    REQUIRE(np.method == SolveMethod::nearest_plane);
}

TEST_CASE("mdl_estimate recovers an on-grid parameter from noiseless data", "[estimator]") {
    auto rng = make_rng(17);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd Z(40, 3);
    for (int i = 0; i < Z.size(); ++i) Z(i / 3, i % 3) = gauss(rng);
    Eigen::VectorXd lambdas(3);
    lambdas << 0.5, 0.3, 0.2;
    const CodeSpec spec = build_code(lambdas, 2.0, 1.0, 150, 1.0);
    Eigen::VectorXd theta_star(3);
    for (int i = 0; i < 3; ++i) theta_star(i) = spec.grid_point(i, 1);
    const Eigen::VectorXd y = Z * theta_star;
    const ReducedProblem p = reduce(dataset_from(Z, y), Eigen::MatrixXd::Identity(3, 3), 1.0);
    const MdlEstimate ex = mdl_estimate(p, spec, 2.0, SolveMethod::exhaustive);
    const MdlEstimate np = mdl_estimate(p, spec, 2.0, SolveMethod::nearest_plane);
    REQUIRE((ex.theta_ddot - theta_star).norm() <= 1e-10);
    REQUIRE((np.theta_ddot - theta_star).norm() <= 1e-10);
    REQUIRE(ex.v_ddot.transpose().isApprox(theta_star, 1e-10));

    REQUIRE_THROWS_AS(mdl_estimate(p, spec, 3.0, SolveMethod::exhaustive),
                      std::invalid_argument);
}

TEST_CASE("exhaustive search is optimal over the grid", "[estimator]") {
    auto rng = make_rng(23);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 25; ++trial) {
        Eigen::MatrixXd Z(15, 3);
        for (int i = 0; i < Z.size(); ++i) Z(i / 3, i % 3) = gauss(rng);
        Eigen::VectorXd y(15);
        for (int i = 0; i < 15; ++i) y(i) = gauss(rng);
        const ReducedProblem p =
            reduce(dataset_from(Z, y), Eigen::MatrixXd::Identity(3, 3), 1.0);
        Eigen::VectorXd lambdas(3);
        lambdas << 0.9, 0.5, 0.4;
        const CodeSpec spec = build_code(lambdas, 1.5, 1.0, 30, 1.0);
        const MdlEstimate ex = mdl_estimate(p, spec, 1.5, SolveMethod::exhaustive);
        REQUIRE(ex.theta_ddot == brute_force_grid_argmin(p, spec));
    }
}

TEST_CASE("exhaustive search refuses oversized grids", "[estimator]") {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(4, 4);
    const ReducedProblem p = reduce(dataset_from(Z, Eigen::VectorXd::Ones(4)),
                                    Eigen::MatrixXd::Identity(4, 4), 1.0);
    // enormous n makes each q huge
    const CodeSpec spec =
        build_code(Eigen::VectorXd::Constant(4, 1.0), 2.0, 1.0, 100000000, 1.0);
    REQUIRE_THROWS_AS(mdl_estimate(p, spec, 2.0, SolveMethod::exhaustive),
                      std::invalid_argument);
    REQUIRE_NOTHROW(mdl_estimate(p, spec, 2.0, SolveMethod::nearest_plane));
}

namespace {

// worst row of sum_j |A_ij| / A_ii over the off-diagonal entries
double dominance_mass(const Eigen::MatrixXd& A) {
    double mass = 0.0;
    for (int i = 0; i < A.rows(); ++i) {
        double row = 0.0;
        for (int j = 0; j < A.cols(); ++j)
            if (i != j) row += std::abs(A(i, j));
        mass = std::max(mass, row / A(i, i));
    }
    return mass;
}

// Z with the off-diagonal mass of Z^T Z placed near `target` (< 0.2):
// orthogonal columns mixed by a scaled random coupling.
Eigen::MatrixXd dominant_design(std::mt19937_64& rng, int rows, double target) {
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::MatrixXd M(rows, 4);
    for (int i = 0; i < M.size(); ++i) M(i / 4, i % 4) = gauss(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(M).householderQ() *
                              Eigen::MatrixXd::Identity(rows, 4);
    Eigen::Vector4d scales;
    for (int i = 0; i < 4; ++i) scales(i) = 3.0 + 2.0 * unif(rng);
    Eigen::MatrixXd E(4, 4);
    for (int i = 0; i < 16; ++i) E(i / 4, i % 4) = gauss(rng);
    E.diagonal().setZero();
    const Eigen::MatrixXd base = Q * scales.asDiagonal();
    const Eigen::MatrixXd mixed = base * (Eigen::MatrixXd::Identity(4, 4) + E);
    const double mass1 = dominance_mass(mixed.transpose() * mixed);
    const double gamma = target / mass1; // mass is close to linear in the coupling
    return base * (Eigen::MatrixXd::Identity(4, 4) + gamma * E);
}

}  // namespace

TEST_CASE("nearest plane matches exhaustive on diagonally dominant problems", "[estimator]") {
    auto rng = make_rng(29);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> lam(0.35, 1.9);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> mass(0.0, 0.19);
    int match = 0, total = 0;
    while (total < 500) {
        const Eigen::MatrixXd Z = dominant_design(rng, 100, mass(rng));
        if (dominance_mass(Z.transpose() * Z) >= 0.2) continue;
        Eigen::VectorXd theta_true(4);
        for (int i = 0; i < 4; ++i) theta_true(i) = unif(rng);
        Eigen::VectorXd y = Z * theta_true;
        for (int i = 0; i < y.size(); ++i) y(i) += 0.5 * gauss(rng);
        const ReducedProblem p =
            reduce(dataset_from(Z, y), Eigen::MatrixXd::Identity(4, 4), 1.0);
        Eigen::VectorXd lambdas(4);
        for (int i = 0; i < 4; ++i) lambdas(i) = lam(rng);
        std::sort(lambdas.data(), lambdas.data() + 4, std::greater<double>());
        const CodeSpec spec = build_code(lambdas, 2.0, 1.0, 25, 1.0);
        for (const auto& dir : spec.directions) REQUIRE(dir.q <= 5);
        const MdlEstimate ex = mdl_estimate(p, spec, 2.0, SolveMethod::exhaustive);
        const MdlEstimate np = mdl_estimate(p, spec, 2.0, SolveMethod::nearest_plane);
        ++total;
        if (ex.theta_ddot == np.theta_ddot) ++match;
    }
    INFO("matched " << match << " of " << total);
    REQUIRE(double(match) / double(total) >= 0.95);
}

TEST_CASE("l_alpha values and monotonicity in alpha", "[estimator]") {
    auto rng = make_rng(31);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd Z(25, 2);
    for (int i = 0; i < Z.size(); ++i) Z(i / 2, i % 2) = gauss(rng);
    Eigen::VectorXd y(25);
    for (int i = 0; i < 25; ++i) y(i) = 0.3 * Z(i, 0) + gauss(rng);
    Dataset data = dataset_from(Z, y);
    const Eigen::MatrixXd U = Eigen::MatrixXd::Identity(2, 2);

    Eigen::VectorXd lambdas(2);
    lambdas << 0.6, 0.3;
    const CodeSpec spec = build_code(lambdas, 2.0, 1.0, 50, 1.0);
    const LAlphaResult r = l_alpha(data, spec, U, 2.0);
    const MdlEstimate est = mdl_estimate(reduce(data, U, 1.0), spec, 2.0,
                                         SolveMethod::exhaustive);
    REQUIRE(r.value == est.objective);
    // alpha = 1 value: the plain two-stage description length
    REQUIRE(r.description_length == est.neg_log_lik + est.code_length_nats);
    REQUIRE(r.description_length <= r.value);

    // L is constant on the grid, so the argmin does not move with alpha and
    // the penalized minimum is nondecreasing (linear) in alpha
    double prev = -std::numeric_limits<double>::infinity();
    for (double a : {1.0, 1.5, 2.0, 3.0, 5.0}) {
        const double value = est.neg_log_lik + a * est.code_length_nats;
        REQUIRE(value >= prev);
        prev = value;
    }

    // all-origin grid: L_alpha is just the negative log-likelihood at 0
    const CodeSpec origin = build_code(Eigen::VectorXd::Constant(2, 1e-9), 2.0, 1.0, 50, 1.0);
    const LAlphaResult r0 = l_alpha(data, origin, U, 2.0);
    REQUIRE(r0.value ==
            Catch::Approx(neg_log_likelihood(Eigen::RowVectorXd::Zero(2), data, 1.0))
                .epsilon(1e-12));
}

TEST_CASE("estimates improve with sample size", "[estimator][slow]") {
    const NetworkModel model = make_network_model(2, 200, 1.0, 201);
    const TrueParam vstar = sample_true_param(200, 202);
    const ApproxBasis basis = approx_basis(model);
    const GramReport gram = gram_report(basis);
    const double radius = std::sqrt(1.0 + gram.eps1);

    int better = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        auto fit = [&](long n) {
            const CodeSpec spec =
                build_code(basis.approx_eigenvalues, 2.0, model.sigma2, n, radius);
            const Dataset data = generate_dataset(model, vstar, n, derive_seed(300, 2 * t));
            const ReducedProblem p = reduce(data, basis.basis_rows, model.sigma2);
            const MdlEstimate est = mdl_estimate(p, spec, 2.0, SolveMethod::nearest_plane);
            return (est.v_ddot - vstar.v).norm();
        };
        if (fit(10000) < fit(100)) ++better;
    }
    INFO("improved in " << better << " of " << trials);
    REQUIRE(better >= 90);
}
