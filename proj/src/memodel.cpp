#include "errcal/memodel.hpp"

#include <string>

#include "errcal/error.hpp"

namespace errcal {

namespace {

// Design with columns (lead, 1, covariates...) over all rows of d.
Eigen::MatrixXd lead_intercept_design(const Dataset& d, const Eigen::VectorXd& lead,
                                      const std::vector<std::string>& covariates) {
    const Eigen::Index n = static_cast<Eigen::Index>(d.n_rows());
    Eigen::MatrixXd x(n, 2 + static_cast<Eigen::Index>(covariates.size()));
    x.col(0) = lead;
    x.col(1).setOnes();
    for (std::size_t j = 0; j < covariates.size(); ++j)
        x.col(2 + static_cast<Eigen::Index>(j)) = d.column(covariates[j]);
    return x;
}

Eigen::VectorXd row_means(const Dataset& d, const std::vector<std::string>& cols) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_rows()));
    for (const auto& c : cols) mean += d.column(c);
    return mean / static_cast<double>(cols.size());
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

void require_rows(const Dataset& rows, std::size_t needed, const std::string& what) {
    if (rows.n_rows() < needed)
        throw DataError(what + ": " + std::to_string(rows.n_rows()) + " usable rows, need at least " +
                        std::to_string(needed));
}

// Reference column of the outcome error model: the reference itself, or the
// mean of the randomly erroneous replicates in a calibration study.
struct OutcomeErrorRows {
    Dataset rows;
    Eigen::VectorXd reference;
    bool single_replicate = false;
};

OutcomeErrorRows outcome_error_rows(const Dataset& d, const MeasurementSpec& spec,
                                    const std::vector<std::string>& extra) {
    OutcomeErrorRows out;
    if (spec.reference) {
        out.rows = complete_cases(d, concat({spec.substitute, *spec.reference}, extra));
        out.reference = out.rows.column(*spec.reference);
    } else if (spec.design() == Design::calibration) {
        out.rows = complete_cases(d, concat(concat({spec.substitute}, spec.replicates), extra));
        out.reference = row_means(out.rows, spec.replicates);
        out.single_replicate = spec.replicates.size() == 1;
    } else {
        throw DesignError("error model: design '" + std::string(to_string(spec.design())) +
                          "' has no internal data to estimate theta");
    }
    return out;
}

Eigen::MatrixXd arm_transform() {
    // (a, b, c, d) of Y* ~ 1 + X + Y + X:Y  ->  (theta_00, theta_01, theta_10, theta_11)
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(4, 4);
    t(0, 0) = 1;
    t(1, 0) = 1;
    t(1, 1) = 1;
    t(2, 2) = 1;
    t(3, 2) = 1;
    t(3, 3) = 1;
    return t;
}

void check_binary(const Eigen::VectorXd& x, const std::string& name) {
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) == 0.0) has0 = true;
        else if (x(i) == 1.0) has1 = true;
        else throw DataError("differential error: exposure '" + name + "' must be exactly 0/1");
    }
    if (!has0 || !has1)
        throw DataError("differential error: exposure '" + name +
                        "' has a single level in the estimation rows; the interaction is not estimable");
}

} // namespace

std::string_view to_string(CalibrationSource s) {
    switch (s) {
    case CalibrationSource::internal: return "internal";
    case CalibrationSource::replicates: return "replicates";
    case CalibrationSource::calibration: return "calibration";
    case CalibrationSource::external: return "external";
    case CalibrationSource::random_variance: return "random-variance";
    }
    return "unknown";
}

CalibrationMatrix CalibrationMatrix::from_parameters(const Eigen::VectorXd& params,
                                                     std::optional<Eigen::MatrixXd> param_vcov,
                                                     CalibrationSource source) {
    const Eigen::Index p = params.size();
    if (p < 2) throw DataError("calibration matrix: need at least (lambda_X*, lambda_0)");
    if (param_vcov && (param_vcov->rows() != p || param_vcov->cols() != p))
        throw DataError("calibration matrix: parameter vcov has the wrong dimension");
    CalibrationMatrix c;
    c.lambda = Eigen::MatrixXd::Identity(p, p);
    c.lambda.row(0) = params.transpose();
    c.param_vcov = std::move(param_vcov);
    c.source = source;
    return c;
}

Eigen::MatrixXd CalibrationMatrix::inverse() const {
    if (!invertible()) throw NumericalError("calibration matrix is singular (lambda_X* = 0)");
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(dim(), dim());
    const double s = slope();
    inv(0, 0) = 1.0 / s;
    for (Eigen::Index j = 1; j < dim(); ++j) inv(0, j) = -lambda(0, j) / s;
    return inv;
}

std::vector<Eigen::MatrixXd> CalibrationMatrix::parameter_derivatives() const {
    std::vector<Eigen::MatrixXd> d;
    for (Eigen::Index p = 0; p < dim(); ++p) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(dim(), dim());
        e(0, p) = 1.0;
        d.push_back(std::move(e));
    }
    return d;
}

ErrorModelMatrix ErrorModelMatrix::non_differential(double theta0, double theta1, Eigen::Index k,
                                                    std::optional<Eigen::MatrixXd> param_vcov) {
    if (param_vcov && (param_vcov->rows() != 2 || param_vcov->cols() != 2))
        throw DataError("error model matrix: parameter vcov must be 2x2");
    const Eigen::Index dim = k + 3;
    ErrorModelMatrix m;
    m.theta = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim - 1; ++i) m.theta(i, i) = theta1;
    m.theta(dim - 1, dim - 1) = 1.0;
    m.theta(dim - 1, 1) = theta0;
    m.param_vcov = std::move(param_vcov);
    return m;
}

ErrorModelMatrix ErrorModelMatrix::differential_arms(double theta00, double theta01, double theta10,
                                                     double theta11,
                                                     std::optional<Eigen::MatrixXd> param_vcov) {
    if (param_vcov && (param_vcov->rows() != 4 || param_vcov->cols() != 4))
        throw DataError("differential error model matrix: parameter vcov must be 4x4");
    ErrorModelMatrix m;
    m.differential = true;
    m.theta.resize(3, 3);
    m.theta << theta11, 0.0, 0.0,
               theta11 - theta10, theta10, 0.0,
               theta01 - theta00, theta00, 1.0;
    m.param_vcov = std::move(param_vcov);
    return m;
}

Eigen::VectorXd ErrorModelMatrix::parameters() const {
    if (differential) {
        Eigen::VectorXd p(4);
        p << theta(2, 1), theta(2, 0) + theta(2, 1), theta(1, 1), theta(0, 0);
        return p;
    }
    Eigen::VectorXd p(2);
    p << theta(dim() - 1, 1), theta(0, 0);
    return p;
}

bool ErrorModelMatrix::invertible() const {
    if (differential) return theta(0, 0) != 0.0 && theta(1, 1) != 0.0;
    return theta(0, 0) != 0.0;
}

Eigen::MatrixXd ErrorModelMatrix::inverse() const {
    if (!invertible())
        throw NumericalError(differential ? "error model matrix is singular (theta_10 * theta_11 = 0)"
                                          : "error model matrix is singular (theta_1 = 0)");
    if (differential)
        return theta.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(3, 3));
    const Eigen::Index last = dim() - 1;
    const double t1 = theta(0, 0);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(dim(), dim());
    for (Eigen::Index i = 0; i < last; ++i) inv(i, i) = 1.0 / t1;
    inv(last, last) = 1.0;
    inv(last, 1) = -theta(last, 1) / t1;
    return inv;
}

std::vector<Eigen::MatrixXd> ErrorModelMatrix::parameter_derivatives() const {
    const Eigen::Index n = dim();
    std::vector<Eigen::MatrixXd> d;
    auto zero = [n] { return Eigen::MatrixXd::Zero(n, n).eval(); };
    if (differential) {
        Eigen::MatrixXd d00 = zero(), d01 = zero(), d10 = zero(), d11 = zero();
        d00(2, 0) = -1.0;
        d00(2, 1) = 1.0;
        d01(2, 0) = 1.0;
        d10(1, 0) = -1.0;
        d10(1, 1) = 1.0;
        d11(0, 0) = 1.0;
        d11(1, 0) = 1.0;
        d = {d00, d01, d10, d11};
        return d;
    }
    Eigen::MatrixXd d0 = zero(), d1 = zero();
    d0(n - 1, 1) = 1.0;
    for (Eigen::Index i = 0; i < n - 1; ++i) d1(i, i) = 1.0;
    d = {d0, d1};
    return d;
}

CalibrationMatrix estimate_lambda_internal(const Dataset& d, const MeasurementSpec& spec) {
    if (!spec.reference) throw DesignError("internal calibration: no reference column");
    const auto z = spec.other_covariates();
    Dataset rows = complete_cases(d, concat({*spec.reference, spec.substitute}, z));
    require_rows(rows, z.size() + 3, "internal calibration");
    const Eigen::MatrixXd x = lead_intercept_design(rows, rows.column(spec.substitute), z);
    LinearFit fit = fit_ols(rows.column(*spec.reference), x,
                            concat({spec.substitute, "(Intercept)"}, z));
    CalibrationMatrix c = CalibrationMatrix::from_parameters(fit.coef, fit.vcov,
                                                             CalibrationSource::internal);
    c.rows_used = static_cast<Eigen::Index>(rows.n_rows());
    return c;
}

CalibrationMatrix estimate_lambda_replicates(const Dataset& d, const MeasurementSpec& spec) {
    if (spec.replicates.empty())
        throw DesignError("replicates calibration: a single replicate column cannot separate "
                          "error from signal; give at least one further replicate");
    const auto z = spec.other_covariates();
    Dataset rows = complete_cases(d, concat(concat({spec.substitute}, spec.replicates), z));
    require_rows(rows, z.size() + 3, "replicates calibration");
    const Eigen::MatrixXd x = lead_intercept_design(rows, rows.column(spec.substitute), z);
    LinearFit fit = fit_ols(row_means(rows, spec.replicates), x,
                            concat({spec.substitute, "(Intercept)"}, z));
    CalibrationMatrix c = CalibrationMatrix::from_parameters(fit.coef, fit.vcov,
                                                             CalibrationSource::replicates);
    c.rows_used = static_cast<Eigen::Index>(rows.n_rows());
    return c;
}

CalibrationMatrix estimate_lambda_calibration(const Dataset& d, const MeasurementSpec& spec) {
    if (spec.replicates.empty())
        throw DesignError("calibration study: no randomly erroneous replicate columns");
    const auto z = spec.other_covariates();
    Dataset rows = complete_cases(d, concat(concat({spec.substitute}, spec.replicates), z));
    if (rows.n_rows() == 0) throw DataError("calibration study: empty calibration subset");
    require_rows(rows, z.size() + 3, "calibration study");
    const Eigen::MatrixXd x = lead_intercept_design(rows, rows.column(spec.substitute), z);
    LinearFit fit = fit_ols(row_means(rows, spec.replicates), x,
                            concat({spec.substitute, "(Intercept)"}, z));
    CalibrationMatrix c = CalibrationMatrix::from_parameters(fit.coef, fit.vcov,
                                                             CalibrationSource::calibration);
    c.rows_used = static_cast<Eigen::Index>(rows.n_rows());
    return c;
}

CalibrationMatrix lambda_from_random_variance(const Dataset& d, const MeasurementSpec& spec) {
    if (!spec.random_variance) throw DesignError("random-variance calibration: no variance given");
    const double tau2 = *spec.random_variance;
    if (!(tau2 >= 0.0)) throw DesignError("random-variance calibration: variance must be nonnegative");
    const auto z = spec.other_covariates();
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(z.size());
    Dataset rows = complete_cases(d, concat({spec.substitute}, z));
    require_rows(rows, z.size() + 3, "random-variance calibration");

    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.n_rows()), p - 1);
    w.col(0) = rows.column(spec.substitute);
    for (std::size_t j = 0; j < z.size(); ++j) w.col(1 + static_cast<Eigen::Index>(j)) = rows.column(z[j]);
    const Eigen::RowVectorXd mean = w.colwise().mean();
    const Eigen::MatrixXd centered = w.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(w.rows() - 1);

    const double var_sub = cov(0, 0);
    if (tau2 >= var_sub)
        throw NumericalError("random-variance calibration: error variance " + std::to_string(tau2) +
                             " is not below the substitute variance " + std::to_string(var_sub));

    Eigen::VectorXd params(p);
    if (tau2 == 0.0) {
        params.setZero();
        params(0) = 1.0;
    } else {
        // Cov(X, W) = Cov(X*, W) - tau2 e_1 under zero-mean independent error.
        Eigen::VectorXd target = cov.col(0);
        target(0) -= tau2;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw NumericalError("random-variance calibration: covariance of (X*, Z) is singular");
        const Eigen::VectorXd slopes = ldlt.solve(target);
        if (!(slopes(0) > 0.0))
            throw NumericalError("random-variance calibration: error variance exceeds the residual "
                                 "variance of the substitute given the covariates");
        // E(X) = E(X*) because the error has mean zero.
        params(0) = slopes(0);
        params(1) = mean(0) - slopes.dot(mean.transpose());
        params.tail(p - 2) = slopes.tail(p - 2);
    }
    CalibrationMatrix c =
        CalibrationMatrix::from_parameters(params, std::nullopt, CalibrationSource::random_variance);
    c.rows_used = static_cast<Eigen::Index>(rows.n_rows());
    return c;
}

CalibrationMatrix estimate_lambda(const Dataset& d, const MeasurementSpec& spec) {
    switch (spec.design()) {
    case Design::internal: return estimate_lambda_internal(d, spec);
    case Design::replicates: return estimate_lambda_replicates(d, spec);
    case Design::calibration: return estimate_lambda_calibration(d, spec);
    case Design::random_variance: return lambda_from_random_variance(d, spec);
    case Design::external: return lambda_from_external(*spec.external_model, spec.n_other());
    }
    throw DesignError("calibration: unsupported design");
}

ErrorModelMatrix estimate_theta(const Dataset& d, const MeasurementSpec& spec) {
    OutcomeErrorRows r = outcome_error_rows(d, spec, {});
    require_rows(r.rows, 3, "outcome error model");
    const Eigen::Index n = r.reference.size();
    Eigen::MatrixXd x(n, 2);
    x.col(0).setOnes();
    x.col(1) = r.reference;
    LinearFit fit = fit_ols(r.rows.column(spec.substitute), x,
                            {"(Intercept)", spec.reference.value_or("replicate mean")});
    ErrorModelMatrix m = ErrorModelMatrix::non_differential(
        fit.coef(0), fit.coef(1), static_cast<Eigen::Index>(spec.n_other()), fit.vcov);
    m.rows_used = n;
    m.single_replicate = r.single_replicate;
    return m;
}

ErrorModelMatrix estimate_theta_differential(const Dataset& d, const MeasurementSpec& spec) {
    if (!spec.differential_by) throw DesignError("differential error model: no exposure given");
    const std::string& xname = *spec.differential_by;
    OutcomeErrorRows r = outcome_error_rows(d, spec, {xname});
    require_rows(r.rows, 5, "differential error model");
    const Eigen::VectorXd xv = r.rows.column(xname);
    check_binary(xv, xname);
    const Eigen::Index n = xv.size();
    Eigen::MatrixXd x(n, 4);
    x.col(0).setOnes();
    x.col(1) = xv;
    x.col(2) = r.reference;
    x.col(3) = xv.cwiseProduct(r.reference);
    LinearFit fit = fit_ols(r.rows.column(spec.substitute), x,
                            {"(Intercept)", xname, "reference", "interaction"});
    const Eigen::MatrixXd t = arm_transform();
    const Eigen::VectorXd th = t * fit.coef;
    ErrorModelMatrix m = ErrorModelMatrix::differential_arms(th(0), th(1), th(2), th(3),
                                                             Eigen::MatrixXd(t * fit.vcov * t.transpose()));
    m.rows_used = n;
    m.single_replicate = r.single_replicate;
    return m;
}

CalibrationMatrix lambda_from_external(const ExternalModel& model, Eigen::Index k) {
    const Eigen::Index p = k + 2;
    if (model.coef.size() != p)
        throw DesignError("external calibration model: expected " + std::to_string(p) +
                          " coefficients (intercept, substitute, covariates), got " +
                          std::to_string(model.coef.size()));
    // Regression order (lambda_0, lambda_X*, ...) -> matrix order (lambda_X*, lambda_0, ...).
    Eigen::PermutationMatrix<Eigen::Dynamic> swap(p);
    swap.setIdentity();
    swap.indices()(0) = 1;
    swap.indices()(1) = 0;
    const Eigen::VectorXd params = swap * model.coef;
    std::optional<Eigen::MatrixXd> vcov;
    if (model.vcov) vcov = swap * (*model.vcov) * swap.transpose();
    return CalibrationMatrix::from_parameters(params, std::move(vcov), CalibrationSource::external);
}

ErrorModelMatrix theta_from_external(const ExternalModel& model, Eigen::Index k, bool differential) {
    if (differential) {
        if (model.coef.size() != 4)
            throw DesignError("external differential error model: expected 4 coefficients "
                              "(intercept, exposure, reference, exposure:reference), got " +
                              std::to_string(model.coef.size()));
        const Eigen::MatrixXd t = arm_transform();
        const Eigen::VectorXd th = t * model.coef;
        std::optional<Eigen::MatrixXd> vcov;
        if (model.vcov) vcov = t * (*model.vcov) * t.transpose();
        return ErrorModelMatrix::differential_arms(th(0), th(1), th(2), th(3), std::move(vcov));
    }
    if (model.coef.size() != 2)
        throw DesignError("external error model: expected 2 coefficients (intercept, slope), got " +
                          std::to_string(model.coef.size()));
    return ErrorModelMatrix::non_differential(model.coef(0), model.coef(1), k, model.vcov);
}

ExternalModel fit_external_calibration(const Dataset& ext, const std::string& reference,
                                       const std::string& substitute,
                                       const std::vector<std::string>& covariates) {
    Dataset rows = complete_cases(ext, concat({reference, substitute}, covariates));
    require_rows(rows, covariates.size() + 3, "external calibration");
    const Eigen::Index n = static_cast<Eigen::Index>(rows.n_rows());
    Eigen::MatrixXd x(n, 2 + static_cast<Eigen::Index>(covariates.size()));
    x.col(0).setOnes();
    x.col(1) = rows.column(substitute);
    for (std::size_t j = 0; j < covariates.size(); ++j)
        x.col(2 + static_cast<Eigen::Index>(j)) = rows.column(covariates[j]);
    LinearFit fit = fit_ols(rows.column(reference), x);
    return ExternalModel{fit.coef, fit.vcov};
}

ExternalModel fit_external_error_model(const Dataset& ext, const std::string& reference,
                                       const std::string& substitute,
                                       const std::optional<std::string>& exposure) {
    std::vector<std::string> cols{reference, substitute};
    if (exposure) cols.push_back(*exposure);
    Dataset rows = complete_cases(ext, cols);
    const Eigen::Index n = static_cast<Eigen::Index>(rows.n_rows());
    const Eigen::VectorXd y = rows.column(reference);
    Eigen::MatrixXd x;
    if (exposure) {
        const Eigen::VectorXd xv = rows.column(*exposure);
        check_binary(xv, *exposure);
        x.resize(n, 4);
        x.col(0).setOnes();
        x.col(1) = xv;
        x.col(2) = y;
        x.col(3) = xv.cwiseProduct(y);
    } else {
        x.resize(n, 2);
        x.col(0).setOnes();
        x.col(1) = y;
    }
    LinearFit fit = fit_ols(rows.column(substitute), x);
    return ExternalModel{fit.coef, fit.vcov};
}

} // namespace errcal
