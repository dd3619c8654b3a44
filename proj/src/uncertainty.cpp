#include "errcal/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "errcal/error.hpp"

namespace errcal {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

} // namespace

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_critical(double alpha) { return normal_quantile(1.0 - alpha / 2.0); }

double student_t_critical(double alpha, double dof) {
    return boost::math::quantile(boost::math::students_t_distribution<double>(dof), 1.0 - alpha / 2.0);
}

double student_t_two_sided_p(double t, double dof) {
    if (!std::isfinite(t)) return 0.0;
    return 2.0 * boost::math::cdf(boost::math::complement(
                     boost::math::students_t_distribution<double>(dof), std::abs(t)));
}

Eigen::VectorXd apply_calibration(const Eigen::VectorXd& naive, const CalibrationMatrix& lam) {
    if (naive.size() != lam.dim())
        throw DataError("calibration: coefficient vector and matrix dimensions differ");
    return lam.inverse().transpose() * naive;
}

Eigen::VectorXd apply_error_model(const Eigen::VectorXd& naive, const ErrorModelMatrix& th) {
    const Eigen::Index p = naive.size();
    if (p + 1 != th.dim())
        throw DataError("error model: coefficient vector and matrix dimensions differ");
    Eigen::VectorXd aug(p + 1);
    aug.head(p) = naive;
    aug(p) = 1.0;
    const Eigen::VectorXd full = th.inverse().transpose() * aug;
    return full.head(p);
}

CorrectionJacobian rc_jacobian(const Eigen::VectorXd& naive, const CalibrationMatrix& lam) {
    const Eigen::MatrixXd a = lam.inverse();
    const Eigen::VectorXd corrected = a.transpose() * naive;
    const auto derivs = lam.parameter_derivatives();
    CorrectionJacobian j;
    j.wrt_naive = a.transpose();
    j.wrt_params.resize(lam.dim(), static_cast<Eigen::Index>(derivs.size()));
    // d(b A) = -b A dL A = -corrected dL A
    for (std::size_t p = 0; p < derivs.size(); ++p)
        j.wrt_params.col(static_cast<Eigen::Index>(p)) =
            -(corrected.transpose() * derivs[p] * a).transpose();
    return j;
}

CorrectionJacobian mm_jacobian(const Eigen::VectorXd& naive, const ErrorModelMatrix& th) {
    const Eigen::Index p = naive.size();
    const Eigen::MatrixXd b = th.inverse();
    Eigen::VectorXd aug(p + 1);
    aug.head(p) = naive;
    aug(p) = 1.0;
    const Eigen::RowVectorXd corrected = aug.transpose() * b;
    const auto derivs = th.parameter_derivatives();
    CorrectionJacobian j;
    j.wrt_naive = b.transpose().topLeftCorner(p, p);
    j.wrt_params.resize(p, static_cast<Eigen::Index>(derivs.size()));
    for (std::size_t q = 0; q < derivs.size(); ++q)
        j.wrt_params.col(static_cast<Eigen::Index>(q)) =
            -(corrected * derivs[q] * b).transpose().head(p);
    return j;
}

Eigen::MatrixXd zerovar_vcov_rc(const Eigen::MatrixXd& vcov_naive, const CalibrationMatrix& lam) {
    const Eigen::MatrixXd a = lam.inverse();
    return symmetrize(a.transpose() * vcov_naive * a);
}

Eigen::MatrixXd delta_vcov_rc(const Eigen::VectorXd& naive, const Eigen::MatrixXd& vcov_naive,
                              const CalibrationMatrix& lam) {
    if (!lam.param_vcov)
        throw NumericalError("delta method unavailable: calibration matrix has no parameter vcov "
                             "(zero-variance intervals only)");
    const CorrectionJacobian j = rc_jacobian(naive, lam);
    return symmetrize(j.wrt_naive * vcov_naive * j.wrt_naive.transpose() +
                      j.wrt_params * (*lam.param_vcov) * j.wrt_params.transpose());
}

Eigen::MatrixXd zerovar_vcov_mm(const Eigen::MatrixXd& vcov_naive, const ErrorModelMatrix& th) {
    const Eigen::Index p = vcov_naive.rows();
    // The augmented vcov has a zero last row and column, so only the top-left
    // block of B enters.
    const Eigen::MatrixXd b = th.inverse().topLeftCorner(p, p);
    return symmetrize(b.transpose() * vcov_naive * b);
}

Eigen::MatrixXd delta_vcov_mm(const Eigen::VectorXd& naive, const Eigen::MatrixXd& vcov_naive,
                              const ErrorModelMatrix& th) {
    if (!th.param_vcov)
        throw NumericalError("delta method unavailable: error model matrix has no parameter vcov "
                             "(zero-variance intervals only)");
    const CorrectionJacobian j = mm_jacobian(naive, th);
    return symmetrize(j.wrt_naive * vcov_naive * j.wrt_naive.transpose() +
                      j.wrt_params * (*th.param_vcov) * j.wrt_params.transpose());
}

FiellerInterval fieller_interval(double numerator, double var_numerator, double denominator,
                                 double var_denominator, double alpha, double covariance) {
    const double z2 = std::pow(normal_critical(alpha), 2);
    // Set of r with (num - r den)^2 <= z^2 Var(num - r den), written as
    // f2 r^2 - 2 f1 r + f0 >= 0.
    const double f0 = z2 * var_numerator - numerator * numerator;
    const double f1 = z2 * covariance - numerator * denominator;
    const double f2 = z2 * var_denominator - denominator * denominator;
    FiellerInterval out;
    if (f2 >= 0.0) return out;
    const double disc = std::max(0.0, f1 * f1 - f0 * f2);
    const double r1 = (f1 + std::sqrt(disc)) / f2;
    const double r2 = (f1 - std::sqrt(disc)) / f2;
    out.lower = std::min(r1, r2);
    out.upper = std::max(r1, r2);
    out.bounded = true;
    return out;
}

std::vector<WaldInterval> wald_intervals(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov,
                                         double alpha) {
    if (vcov.rows() != coef.size() || vcov.cols() != coef.size())
        throw DataError("wald: vcov dimension does not match coefficients");
    const double z = normal_critical(alpha);
    std::vector<WaldInterval> out;
    out.reserve(static_cast<std::size_t>(coef.size()));
    for (Eigen::Index j = 0; j < coef.size(); ++j) {
        double var = vcov(j, j);
        const double tol = 1e-12 * std::max(1.0, vcov.diagonal().cwiseAbs().maxCoeff());
        if (var < -tol || std::isnan(var))
            throw NumericalError("wald: negative variance for coefficient " + std::to_string(j));
        var = std::max(0.0, var);
        WaldInterval w;
        w.estimate = coef(j);
        w.se = std::sqrt(var);
        w.lower = coef(j) - z * w.se;
        w.upper = coef(j) + z * w.se;
        out.push_back(w);
    }
    return out;
}

Eigen::MatrixXd MlComponentVcov::block() const {
    const Eigen::Index k = delta.rows() - 1;
    const Eigen::Index n = 5 + 2 * k;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, n);
    v.topLeftCorner(1 + k, 1 + k) = delta;
    v(1 + k, 1 + k) = sigma2_y_given_z;
    v.block(2 + k, 2 + k, 2 + k, 2 + k) = kappa;
    v(n - 1, n - 1) = sigma2_x_given_yz;
    return v;
}

Eigen::MatrixXd ml_jacobian(const MlParameters& p) {
    const Eigen::Index k = p.k();
    const double s = p.sigma2_y_given_z;
    const double v = p.sigma2_x_given_yz;
    const double ky = p.kappa_y;
    const double denom = v + ky * ky * s;
    if (!(denom > 0.0)) throw NumericalError("ml jacobian: undefined at var(X|Y,Z) + kappa_Y^2 var(Y|Z) = 0");
    const double bx = ky * s / denom;
    const double d2 = denom * denom;
    const double dbx_ds = ky * v / d2;
    const double dbx_dky = s * (v - ky * ky * s) / d2;
    const double dbx_dv = -ky * s / d2;

    // Column layout of the reduced vector.
    const Eigen::Index c_d0 = 0, c_dz = 1, c_s = 1 + k, c_k0 = 2 + k, c_ky = 3 + k, c_kz = 4 + k,
                       c_v = 4 + 2 * k;
    const double rho0 = p.rho0();
    const Eigen::VectorXd rho_z = p.rho_z();

    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 + k, 5 + 2 * k);
    j(0, c_s) = dbx_ds;
    j(0, c_ky) = dbx_dky;
    j(0, c_v) = dbx_dv;

    // beta_0 = delta0 - beta_X (kappa0 + kappa_Y delta0)
    j(1, c_d0) = 1.0 - bx * ky;
    j(1, c_s) = -rho0 * dbx_ds;
    j(1, c_k0) = -bx;
    j(1, c_ky) = -rho0 * dbx_dky - bx * p.delta0;
    j(1, c_v) = -rho0 * dbx_dv;

    // beta_Z = delta_Z - beta_X (kappa_Z + kappa_Y delta_Z)
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index r = 2 + i;
        j(r, c_dz + i) = 1.0 - bx * ky;
        j(r, c_s) = -rho_z(i) * dbx_ds;
        j(r, c_ky) = -rho_z(i) * dbx_dky - bx * p.delta_z(i);
        j(r, c_kz + i) = -bx;
        j(r, c_v) = -rho_z(i) * dbx_dv;
    }
    return j;
}

Eigen::MatrixXd delta_vcov_mle(const MlParameters& p, const MlComponentVcov& v) {
    const Eigen::MatrixXd j = ml_jacobian(p);
    return symmetrize(j * v.block() * j.transpose());
}

double percentile(std::vector<double> values, double prob) {
    if (values.empty()) throw DataError("percentile: no values");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

} // namespace errcal
