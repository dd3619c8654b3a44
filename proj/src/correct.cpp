#include "errcal/correct.hpp"

#include <string>

#include "errcal/error.hpp"

namespace errcal {

namespace {

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Design (lead, 1, covariates) over all rows of d.
Eigen::MatrixXd lead_design(const Dataset& d, const Eigen::VectorXd& lead,
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

std::vector<std::string> term_names(const MeasurementSpec& spec) {
    return concat({spec.exposure(), "(Intercept)"}, spec.other_covariates());
}

void require_rows(const Dataset& rows, std::size_t needed, const std::string& what) {
    if (rows.n_rows() < needed)
        throw DataError(what + ": " + std::to_string(rows.n_rows()) + " usable rows, need at least " +
                        std::to_string(needed));
}

// Wraps a corrected estimate as a LinearFit so it can be pooled or reported.
LinearFit as_linear_fit(const CorrectedFit& c, Eigen::Index n) {
    LinearFit f;
    f.coef = c.coef;
    f.vcov = *c.vcov_delta;
    f.n = n;
    f.dof = n - c.coef.size();
    f.sigma2 = c.uncorrected.sigma2;
    f.term_names = c.uncorrected.term_names;
    return f;
}

// Replicates-study view of a covariate calibration subset: the first random
// replicate plays the substitute, the rest are its replicates.
MeasurementSpec subset_replicates_spec(const MeasurementSpec& spec) {
    if (spec.replicates.size() < 2)
        throw DesignError("efficient RC in a calibration study needs at least 2 random-error "
                          "replicates for the internal estimate");
    MeasurementSpec s = spec;
    s.calibration = false;
    s.substitute = spec.replicates.front();
    s.replicates.assign(spec.replicates.begin() + 1, spec.replicates.end());
    return s;
}

CorrectedFit pooled(CorrectedFit standard, LinearFit internal) {
    if (!standard.vcov_delta)
        throw NumericalError("efficient correction: the standard estimate has no delta vcov");
    PooledEstimate p = efficient_pool(standard.coef, *standard.vcov_delta, internal.coef, internal.vcov);
    CorrectedFit out = std::move(standard);
    out.kind = CorrectionKind::efficient;
    out.coef = std::move(p.estimate);
    out.vcov_delta = std::move(p.vcov);
    out.vcov_zerovar.reset();
    out.internal_fit = std::move(internal);
    return out;
}

ErrorModelMatrix estimate_outcome_model(const Dataset& rows, const MeasurementSpec& spec) {
    return spec.differential_by ? estimate_theta_differential(rows, spec) : estimate_theta(rows, spec);
}

} // namespace

std::string_view to_string(Method m) {
    switch (m) {
    case Method::standard: return "standard";
    case Method::valregcal: return "valregcal";
    case Method::efficient: return "efficient";
    case Method::mle: return "mle";
    }
    return "unknown";
}

std::string_view to_string(CorrectionKind k) {
    switch (k) {
    case CorrectionKind::standard_rc: return "standard-rc";
    case CorrectionKind::valregcal: return "valregcal";
    case CorrectionKind::standard_mm: return "standard-mm";
    case CorrectionKind::efficient: return "efficient";
    case CorrectionKind::mle: return "mle";
    case CorrectionKind::sensitivity: return "sensitivity";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    if (name == "standard") return Method::standard;
    if (name == "valregcal") return Method::valregcal;
    if (name == "efficient") return Method::efficient;
    if (name == "mle") return Method::mle;
    throw DesignError("unknown method '" + std::string(name) +
                      "' (expected standard, valregcal, efficient or mle)");
}

LinearFit naive_fit(const Dataset& d, const MeasurementSpec& spec) {
    const auto cols = spec.analysis_columns();
    const Dataset rows = complete_cases(d, cols);
    const auto z = spec.other_covariates();
    require_rows(rows, z.size() + 3, "uncorrected model");
    return fit_ols(rows.column(spec.response()), lead_design(rows, rows.column(spec.exposure()), z),
                   term_names(spec));
}

CorrectedFit standard_rc(const LinearFit& fit, const CalibrationMatrix& lam) {
    CorrectedFit out;
    out.uncorrected = fit;
    out.kind = (lam.source == CalibrationSource::external ||
                lam.source == CalibrationSource::random_variance)
                   ? CorrectionKind::sensitivity
                   : CorrectionKind::standard_rc;
    out.coef = apply_calibration(fit.coef, lam);
    out.vcov_zerovar = zerovar_vcov_rc(fit.vcov, lam);
    if (lam.param_vcov) out.vcov_delta = delta_vcov_rc(fit.coef, fit.vcov, lam);
    else out.warnings.push_back("calibration model has no variance-covariance matrix; only "
                                "zero-variance standard errors are available");
    out.lambda = lam;
    return out;
}

CorrectedFit standard_mm(const LinearFit& fit, const ErrorModelMatrix& th) {
    CorrectedFit out;
    out.uncorrected = fit;
    out.kind = CorrectionKind::standard_mm;
    out.coef = apply_error_model(fit.coef, th);
    out.vcov_zerovar = zerovar_vcov_mm(fit.vcov, th);
    if (th.param_vcov) out.vcov_delta = delta_vcov_mm(fit.coef, fit.vcov, th);
    else out.warnings.push_back("measurement error model has no variance-covariance matrix; only "
                                "zero-variance standard errors are available");
    if (th.single_replicate)
        out.warnings.push_back("error model fitted on a single random-error replicate (m = 1)");
    out.theta = th;
    return out;
}

CorrectedFit validation_rc(const Dataset& d, const MeasurementSpec& spec) {
    if (spec.error_in != ErrorIn::covariate || spec.design() != Design::internal)
        throw DesignError("validation RC requires an internal validation study of a covariate");
    return validation_rc(d, spec, estimate_lambda_internal(d, spec), true);
}

CorrectedFit validation_rc(const Dataset& d, const MeasurementSpec& spec,
                           const CalibrationMatrix& lam, bool keep_observed) {
    if (!spec.reference) throw DesignError("validation RC requires a reference column");
    const auto z = spec.other_covariates();
    const Dataset rows = complete_cases(d, spec.analysis_columns());
    const Eigen::MatrixXd x_star = lead_design(rows, rows.column(spec.substitute), z);
    Eigen::VectorXd x_cal = x_star * lam.parameters();
    if (keep_observed) {
        const auto mask = rows.mask(*spec.reference);
        const auto raw = rows.raw(*spec.reference);
        for (std::size_t i = 0; i < rows.n_rows(); ++i)
            if (mask[i]) x_cal(static_cast<Eigen::Index>(i)) = raw[i];
    }
    CorrectedFit out;
    out.uncorrected = naive_fit(rows, spec);
    out.kind = CorrectionKind::valregcal;
    LinearFit refit = fit_ols(rows.column(spec.outcome), lead_design(rows, x_cal, z), term_names(spec));
    out.coef = refit.coef;
    out.vcov_delta = refit.vcov;
    out.lambda = lam;
    out.warnings.push_back("validation RC standard errors come from the refit on calibrated values and "
                           "ignore calibration uncertainty; use the bootstrap for inference");
    return out;
}

LinearFit internal_estimate(const Dataset& d, const MeasurementSpec& spec, const CorrectOptions& opts) {
    const Design design = spec.design();
    const auto z = spec.other_covariates();
    const std::size_t needed = z.size() + 3;
    if (design == Design::internal) {
        // Reference observed: OLS with the error-free variable in place of the substitute.
        auto cols = spec.analysis_columns();
        cols.push_back(*spec.reference);
        const Dataset rows = complete_cases(d, cols);
        require_rows(rows, needed, "internal estimate");
        if (spec.error_in == ErrorIn::covariate)
            return fit_ols(rows.column(spec.outcome),
                           lead_design(rows, rows.column(*spec.reference), z), term_names(spec));
        return fit_ols(rows.column(*spec.reference), lead_design(rows, rows.column(spec.exposure()), z),
                       term_names(spec));
    }
    if (design == Design::calibration) {
        const Dataset rows = complete_cases(d, concat(spec.analysis_columns(), spec.replicates));
        require_rows(rows, needed, "internal estimate");
        if (spec.error_in == ErrorIn::outcome)
            return fit_ols(row_means(rows, spec.replicates),
                           lead_design(rows, rows.column(spec.exposure()), z), term_names(spec));
        const MeasurementSpec sub = subset_replicates_spec(spec);
        const Eigen::Index n = static_cast<Eigen::Index>(rows.n_rows());
        if (opts.internal == InternalEstimator::mle) return as_linear_fit(mle_correct(rows, sub), n);
        CorrectedFit rc = standard_rc(naive_fit(rows, sub), estimate_lambda_replicates(rows, sub));
        return as_linear_fit(rc, n);
    }
    throw DesignError("internal estimate: design '" + std::string(to_string(design)) +
                      "' has no internal subset");
}

PooledEstimate efficient_pool(const Eigen::VectorXd& a, const Eigen::MatrixXd& vcov_a,
                              const Eigen::VectorXd& b, const Eigen::MatrixXd& vcov_b) {
    const Eigen::Index p = a.size();
    if (b.size() != p || vcov_a.rows() != p || vcov_a.cols() != p || vcov_b.rows() != p ||
        vcov_b.cols() != p)
        throw DataError("efficient pooling: estimates and vcovs must share one dimension");
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p, p);
    Eigen::LLT<Eigen::MatrixXd> la(vcov_a), lb(vcov_b);
    if (la.info() != Eigen::Success || lb.info() != Eigen::Success)
        throw NumericalError("efficient pooling: a variance-covariance matrix is singular or not "
                             "positive definite");
    const Eigen::MatrixXd prec_a = la.solve(id);
    const Eigen::MatrixXd prec_b = lb.solve(id);
    Eigen::LLT<Eigen::MatrixXd> lp(prec_a + prec_b);
    if (lp.info() != Eigen::Success)
        throw NumericalError("efficient pooling: pooled precision is not positive definite");
    PooledEstimate out;
    out.vcov = lp.solve(id);
    out.vcov = 0.5 * (out.vcov + out.vcov.transpose()).eval();
    out.estimate = out.vcov * (prec_a * a + prec_b * b);
    return out;
}

CorrectedFit mle_correct(const Dataset& d, const MeasurementSpec& spec) {
    if (spec.error_in != ErrorIn::covariate || spec.design() != Design::replicates)
        throw DesignError("maximum likelihood correction requires a replicates study of a covariate");
    const auto z = spec.other_covariates();
    const Eigen::Index k = static_cast<Eigen::Index>(z.size());
    const Dataset rows = complete_cases(d, spec.analysis_columns());
    require_rows(rows, z.size() + 3, "maximum likelihood");

    // Y | Z on every analysed row.
    const Eigen::Index n = static_cast<Eigen::Index>(rows.n_rows());
    Eigen::MatrixXd zd(n, 1 + k);
    zd.col(0).setOnes();
    for (Eigen::Index j = 0; j < k; ++j) zd.col(1 + j) = rows.column(z[static_cast<std::size_t>(j)]);
    const LinearFit y_given_z = fit_ols(rows.column(spec.outcome), zd);

    // X* | Y, Z on the rows carrying every replicate.
    const Dataset sub = complete_cases(rows, spec.replicates);
    require_rows(sub, z.size() + 4, "maximum likelihood replicate sub-study");
    const auto all_reps = concat({spec.substitute}, spec.replicates);
    const Eigen::Index ns = static_cast<Eigen::Index>(sub.n_rows());
    Eigen::MatrixXd values(ns, static_cast<Eigen::Index>(all_reps.size()));
    for (std::size_t j = 0; j < all_reps.size(); ++j)
        values.col(static_cast<Eigen::Index>(j)) = sub.column(all_reps[j]);
    Eigen::MatrixXd fd(ns, 2 + k);
    fd.col(0).setOnes();
    fd.col(1) = sub.column(spec.outcome);
    for (Eigen::Index j = 0; j < k; ++j) fd.col(2 + j) = sub.column(z[static_cast<std::size_t>(j)]);
    const MixedFit mixed = fit_random_intercepts(values, fd);

    MlParameters p;
    p.delta0 = y_given_z.coef(0);
    p.delta_z = y_given_z.coef.tail(k);
    p.sigma2_y_given_z = y_given_z.sigma2;
    p.kappa0 = mixed.fixed(0);
    p.kappa_y = mixed.fixed(1);
    p.kappa_z = mixed.fixed.tail(k);
    p.sigma2_x_given_yz = mixed.var_between;
    p.tau2 = mixed.var_within;

    MlComponentVcov comp;
    comp.delta = y_given_z.vcov;
    comp.sigma2_y_given_z =
        2.0 * y_given_z.sigma2 * y_given_z.sigma2 / static_cast<double>(y_given_z.dof);
    comp.kappa = mixed.fixed_vcov;
    comp.sigma2_x_given_yz = mixed.var_between_variance;

    CorrectedFit out;
    out.uncorrected = naive_fit(rows, spec);
    out.kind = CorrectionKind::mle;
    out.coef = p.outcome_coefficients();
    out.vcov_delta = delta_vcov_mle(p, comp);
    if (mixed.boundary)
        out.warnings.push_back("random-intercepts fit hit the boundary (between-subject variance 0); "
                               "the delta-method variance is unreliable");
    if (ns < n)
        out.warnings.push_back("mixed model uses the " + std::to_string(ns) +
                               " rows with all replicates; the Y|Z regression uses all " +
                               std::to_string(n) + " rows");
    out.ml = p;
    out.mixed = mixed;
    return out;
}

CorrectedFit sensitivity_external(const LinearFit& fit, const ExternalModel& model,
                                  const MeasurementSpec& spec) {
    const Eigen::Index k = static_cast<Eigen::Index>(spec.n_other());
    CorrectedFit out = spec.error_in == ErrorIn::covariate
                           ? standard_rc(fit, lambda_from_external(model, k))
                           : standard_mm(fit, theta_from_external(model, k, spec.differential_by.has_value()));
    out.kind = CorrectionKind::sensitivity;
    return out;
}

void check_compatibility(const MeasurementSpec& spec, Method method) {
    const Design design = spec.design();
    const bool covariate = spec.error_in == ErrorIn::covariate;
    auto reject = [&](const std::string& why) {
        throw DesignError("method '" + std::string(to_string(method)) + "' is incompatible with a " +
                          std::string(to_string(design)) + " design for " +
                          std::string(to_string(spec.error_in)) + " error: " + why);
    };
    switch (method) {
    case Method::standard:
        if (!covariate && design == Design::replicates)
            reject("outcome correction needs internal, calibration or external information");
        return;
    case Method::valregcal:
        if (!covariate || design != Design::internal)
            reject("validation RC requires internal validation of a covariate");
        return;
    case Method::efficient:
        if (design != Design::internal && design != Design::calibration)
            reject("efficient correction requires an internal validation or calibration study");
        return;
    case Method::mle:
        if (!covariate || design != Design::replicates)
            reject("maximum likelihood requires a replicates study of a covariate");
        return;
    }
}

CorrectedFit correct(const Dataset& d, const MeasurementSpec& spec, Method method,
                     const CorrectOptions& opts) {
    spec.validate();
    check_compatibility(spec, method);
    const Dataset rows = complete_cases(d, spec.analysis_columns());
    const Design design = spec.design();

    if (method == Method::valregcal) return validation_rc(rows, spec);
    if (method == Method::mle) return mle_correct(rows, spec);

    const LinearFit fit = naive_fit(rows, spec);
    if (design == Design::external) return sensitivity_external(fit, *spec.external_model, spec);

    CorrectedFit standard = spec.error_in == ErrorIn::covariate
                                ? standard_rc(fit, estimate_lambda(rows, spec))
                                : standard_mm(fit, estimate_outcome_model(rows, spec));
    if (method == Method::standard) return standard;
    return pooled(std::move(standard), internal_estimate(rows, spec, opts));
}

std::vector<std::optional<FiellerInterval>> fieller_intervals(const CorrectedFit& fit, double alpha) {
    const Eigen::Index p = fit.coef.size();
    std::vector<std::optional<FiellerInterval>> out(static_cast<std::size_t>(p));
    const bool plain = fit.kind == CorrectionKind::standard_rc ||
                       fit.kind == CorrectionKind::standard_mm ||
                       fit.kind == CorrectionKind::sensitivity;
    if (!plain) return out;
    const Eigen::MatrixXd& v = fit.uncorrected.vcov;
    const Eigen::VectorXd& b = fit.uncorrected.coef;
    if (fit.lambda) {
        const double var_den = fit.lambda->param_vcov ? (*fit.lambda->param_vcov)(0, 0) : 0.0;
        out[0] = fieller_interval(b(0), v(0, 0), fit.lambda->slope(), var_den, alpha);
    } else if (fit.theta && !fit.theta->differential) {
        const double var_den = fit.theta->param_vcov ? (*fit.theta->param_vcov)(1, 1) : 0.0;
        const double den = fit.theta->slope();
        out[0] = fieller_interval(b(0), v(0, 0), den, var_den, alpha);
        for (Eigen::Index j = 2; j < p; ++j)
            out[static_cast<std::size_t>(j)] = fieller_interval(b(j), v(j, j), den, var_den, alpha);
    }
    return out;
}

} // namespace errcal
