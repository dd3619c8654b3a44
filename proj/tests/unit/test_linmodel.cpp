#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "errcal/error.hpp"
#include "errcal/linmodel.hpp"

using namespace errcal;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

struct MixedSample {
    Eigen::MatrixXd values;
    Eigen::MatrixXd design;
};

// values(i, j) = 1 + 0.5 y_i + b_i + u_ij
MixedSample mixed_sample(Eigen::Index n, Eigen::Index m, double var_b, double tau2, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    MixedSample s;
    s.values.resize(n, m);
    s.design.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = z(rng);
        const double b = std::sqrt(var_b) * z(rng);
        s.design(i, 0) = 1.0;
        s.design(i, 1) = y;
        for (Eigen::Index j = 0; j < m; ++j) s.values(i, j) = 1.0 + 0.5 * y + b + std::sqrt(tau2) * z(rng);
    }
    return s;
}

} // namespace

TEST_CASE("fit_ols exact interpolation") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 0, 1, 1, 1, 2, 1, 3;
    const Eigen::VectorXd c = Eigen::Vector2d(0.5, -2.0);
    const LinearFit f = fit_ols(x * c, x);
    CHECK((f.coef - c).norm() < 1e-12);
    CHECK(f.sigma2 < 1e-24);
    CHECK(f.dof == 2);
}

TEST_CASE("fit_ols intercept only gives sample mean and variance") {
    const LinearFit f = fit_ols(Eigen::Vector3d(1, 2, 3), Eigen::MatrixXd::Ones(3, 1));
    CHECK(f.coef(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(f.sigma2 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(f.vcov(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("fit_ols matches the normal-equations oracle") {
    std::mt19937_64 rng(42);
    Eigen::MatrixXd x = random_matrix(50, 3, rng);
    x.col(1).setOnes();
    const Eigen::VectorXd y = x * Eigen::Vector3d(0.3, -1.0, 2.0) + random_matrix(50, 1, rng);
    const LinearFit f = fit_ols(y, x);
    const oracle::Ols o = oracle::normal_equations(y, x);
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(oracle::rel_err(f.coef(j), o.coef(j)) < 1e-10);
        for (Eigen::Index k = 0; k < 3; ++k) CHECK(oracle::rel_err(f.vcov(j, k), o.vcov(j, k)) < 1e-10);
    }
    CHECK(oracle::rel_err(f.sigma2, o.sigma2) < 1e-10);

    // Residuals orthogonal to every design column.
    const Eigen::VectorXd r = y - x * f.coef;
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(r.dot(x.col(j))) < 1e-8 * r.norm() * x.col(j).norm());
    CHECK((f.vcov - f.vcov.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_ols is invariant to row permutation") {
    std::mt19937_64 rng(7);
    Eigen::MatrixXd x = random_matrix(30, 2, rng);
    x.col(1).setOnes();
    const Eigen::VectorXd y = random_matrix(30, 1, rng);
    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd xp(30, 2);
    Eigen::VectorXd yp(30);
    for (int i = 0; i < 30; ++i) {
        xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        yp(i) = y(perm[static_cast<std::size_t>(i)]);
    }
    CHECK((fit_ols(y, x).coef - fit_ols(yp, xp).coef).norm() < 1e-12);
}

TEST_CASE("fit_ols error paths") {
    Eigen::MatrixXd x(5, 3);
    x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, 0, 1);
    CHECK_THROWS_WITH_AS(fit_ols(y, x, {"one", "a", "b"}), doctest::Contains("dependent"), NumericalError);
    CHECK_THROWS_AS(fit_ols(y.head(2), x.topRows(2)), DataError);
}

TEST_CASE("random intercepts recover simulated parameters") {
    const MixedSample s = mixed_sample(2000, 3, 0.3, 0.25, 2021);
    const MixedFit f = fit_random_intercepts(s.values, s.design);
    CHECK_FALSE(f.boundary);
    CHECK(std::abs(f.fixed(1) - 0.5) < 3.0 * std::sqrt(f.fixed_vcov(1, 1)));
    CHECK(std::abs(f.fixed(0) - 1.0) < 3.0 * std::sqrt(f.fixed_vcov(0, 0)));
    CHECK(std::abs(f.var_between - 0.3) < 3.0 * std::sqrt(f.var_between_variance));
    CHECK(std::abs(f.var_within - 0.25) < 3.0 * std::sqrt(f.var_within_variance));
}

TEST_CASE("random intercepts with m = 2: half-difference moment oracle") {
    const MixedSample s = mixed_sample(500, 2, 0.4, 0.5, 99);
    const MixedFit f = fit_random_intercepts(s.values, s.design);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
        const double d = s.values(i, 0) - s.values(i, 1);
        sum += d * d;
    }
    const double oracle_tau2 = sum / (2.0 * static_cast<double>(s.values.rows()));
    CHECK(oracle::rel_err(f.var_within, oracle_tau2) < 1e-12);
}

TEST_CASE("random intercepts: permuting replicate columns changes nothing") {
    const MixedSample s = mixed_sample(200, 3, 0.3, 0.25, 5);
    Eigen::MatrixXd perm(200, 3);
    perm << s.values.col(2), s.values.col(0), s.values.col(1);
    const MixedFit a = fit_random_intercepts(s.values, s.design);
    const MixedFit b = fit_random_intercepts(perm, s.design);
    CHECK((a.fixed - b.fixed).norm() < 1e-12);
    CHECK(std::abs(a.var_between - b.var_between) < 1e-12);
    CHECK(std::abs(a.var_within - b.var_within) < 1e-12);
}

TEST_CASE("random intercepts: estimates are a stationary point of the likelihood") {
    const MixedSample s = mixed_sample(300, 3, 0.3, 0.25, 11);
    const MixedFit f = fit_random_intercepts(s.values, s.design);
    const double at = random_intercepts_loglik(s.values, s.design, f.fixed, f.var_between, f.var_within);
    CHECK(at == doctest::Approx(f.loglik).epsilon(1e-12));
    for (double h : {-1e-3, 1e-3}) {
        Eigen::VectorXd fx = f.fixed;
        fx(1) += h;
        CHECK(random_intercepts_loglik(s.values, s.design, fx, f.var_between, f.var_within) <= at);
        CHECK(random_intercepts_loglik(s.values, s.design, f.fixed, f.var_between + h, f.var_within) <= at);
        CHECK(random_intercepts_loglik(s.values, s.design, f.fixed, f.var_between, f.var_within + h) <= at);
    }
}

TEST_CASE("random intercepts: boundary and error paths") {
    SUBCASE("no between variance clamps to the boundary") {
        const MixedSample s = mixed_sample(50, 3, 0.0, 1.0, 3);
        // Pick a seed-independent boundary case: shrink subject means onto the fit.
        MixedSample t = s;
        const Eigen::VectorXd means = s.values.rowwise().mean();
        const Eigen::VectorXd fitted = s.design * Eigen::Vector2d(1.0, 0.5);
        t.values = s.values.colwise() - (means - fitted);
        const MixedFit f = fit_random_intercepts(t.values, t.design);
        CHECK(f.boundary);
        CHECK(f.var_between == 0.0);
        CHECK(f.var_within > 0.0);
    }
    SUBCASE("identical replicates") {
        Eigen::MatrixXd v(10, 2);
        v.col(0) = Eigen::VectorXd::LinSpaced(10, 0, 1);
        v.col(1) = v.col(0);
        Eigen::MatrixXd d = Eigen::MatrixXd::Ones(10, 1);
        CHECK_THROWS_AS(fit_random_intercepts(v, d), NumericalError);
    }
    SUBCASE("m < 2") {
        CHECK_THROWS_AS(fit_random_intercepts(Eigen::MatrixXd::Ones(10, 1), Eigen::MatrixXd::Ones(10, 1)),
                        DesignError);
    }
}

TEST_CASE("ML back-transformation") {
    MlParameters p;
    p.delta0 = 0.3;
    p.delta_z = Eigen::Vector2d(1.0, -2.0);
    p.sigma2_y_given_z = 1.5;
    p.kappa0 = 0.1;
    p.kappa_y = 0.0;
    p.kappa_z = Eigen::Vector2d(0.2, 0.4);
    p.sigma2_x_given_yz = 0.7;
    SUBCASE("kappa_Y = 0 collapses to the Y|Z regression") {
        const Eigen::VectorXd b = p.outcome_coefficients();
        CHECK(b(0) == 0.0);
        CHECK(b(1) == p.delta0);
        CHECK((b.tail(2) - p.delta_z).norm() == 0.0);
    }
    SUBCASE("reduced vector round trip") {
        p.kappa_y = 0.6;
        const MlParameters q = MlParameters::from_reduced(p.reduced(), 2, 0.25);
        CHECK((q.reduced() - p.reduced()).norm() == 0.0);
        CHECK((q.outcome_coefficients() - p.outcome_coefficients()).norm() == 0.0);
    }
}
