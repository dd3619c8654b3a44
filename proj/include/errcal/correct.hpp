#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errcal/linmodel.hpp"
#include "errcal/memodel.hpp"
#include "errcal/tabular.hpp"
#include "errcal/uncertainty.hpp"

namespace errcal {

// User-facing method choice; the concrete correction follows from the design.
enum class Method { standard, valregcal, efficient, mle };

enum class CorrectionKind { standard_rc, valregcal, standard_mm, efficient, mle, sensitivity };

std::string_view to_string(Method m);
std::string_view to_string(CorrectionKind k);
/// Throws DesignError on an unknown name.
Method parse_method(std::string_view name);

// Internal (unbiased) estimator used by efficient RC in a covariate calibration
// study: standard RC treating the subset's replicates as a replicates study, or
// ML on the same subset.
enum class InternalEstimator { rc_on_subset, mle };

struct CorrectOptions {
    InternalEstimator internal = InternalEstimator::rc_on_subset;
};

struct CorrectedFit {
    LinearFit uncorrected;
    Eigen::VectorXd coef; // (exposure, intercept, covariates)
    CorrectionKind kind = CorrectionKind::standard_rc;
    std::optional<CalibrationMatrix> lambda;
    std::optional<ErrorModelMatrix> theta;
    // Delta-method (or, for efficient/mle/valregcal, the method's own) vcov.
    std::optional<Eigen::MatrixXd> vcov_delta;
    // Ignores the uncertainty in lambda/theta; RC and MM only.
    std::optional<Eigen::MatrixXd> vcov_zerovar;
    std::optional<LinearFit> internal_fit;
    std::optional<MlParameters> ml;
    std::optional<MixedFit> mixed;
    std::vector<std::string> warnings;
};

/// OLS of the analysed response on (exposure, 1, covariates) over the rows of d.
LinearFit naive_fit(const Dataset& d, const MeasurementSpec& spec);

/// beta* lambda^{-1}, with delta vcov when lambda carries a parameter vcov.
CorrectedFit standard_rc(const LinearFit& fit, const CalibrationMatrix& lam);
/// First 2+k entries of (beta*, 1) theta^{-1}.
CorrectedFit standard_mm(const LinearFit& fit, const ErrorModelMatrix& th);

/// Refit on X_cal (reference where observed, calibrated prediction elsewhere).
CorrectedFit validation_rc(const Dataset& d, const MeasurementSpec& spec);
/// As above with a given calibration matrix; with keep_observed = false the
/// prediction replaces the reference on every row.
CorrectedFit validation_rc(const Dataset& d, const MeasurementSpec& spec,
                           const CalibrationMatrix& lam, bool keep_observed);

/// Unbiased estimate from the internal subset (see InternalEstimator).
LinearFit internal_estimate(const Dataset& d, const MeasurementSpec& spec,
                            const CorrectOptions& opts = {});

struct PooledEstimate {
    Eigen::VectorXd estimate;
    Eigen::MatrixXd vcov;
};

/// Inverse-variance weighted mean; throws NumericalError on a singular vcov.
PooledEstimate efficient_pool(const Eigen::VectorXd& a, const Eigen::MatrixXd& vcov_a,
                              const Eigen::VectorXd& b, const Eigen::MatrixXd& vcov_b);

/// Maximum likelihood for a covariate replicates study.
CorrectedFit mle_correct(const Dataset& d, const MeasurementSpec& spec);

/// Correction with an assumed or externally estimated model.
CorrectedFit sensitivity_external(const LinearFit& fit, const ExternalModel& model,
                                  const MeasurementSpec& spec);

/// Full pipeline: complete cases on the analysis columns, method/design
/// compatibility checks (DesignError), then the matching correction.
CorrectedFit correct(const Dataset& d, const MeasurementSpec& spec, Method method,
                     const CorrectOptions& opts = {});

/// Throws DesignError when the method cannot be used with the spec's design.
void check_compatibility(const MeasurementSpec& spec, Method method);

/// Fieller intervals where the corrected coefficient is a ratio: beta_X for RC,
/// beta_X and beta_Z for non-differential MM. Other entries are empty.
std::vector<std::optional<FiellerInterval>> fieller_intervals(const CorrectedFit& fit, double alpha);

} // namespace errcal
