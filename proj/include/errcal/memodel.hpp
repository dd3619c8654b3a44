#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "errcal/linmodel.hpp"
#include "errcal/tabular.hpp"

namespace errcal {

enum class CalibrationSource { internal, replicates, calibration, external, random_variance };

std::string_view to_string(CalibrationSource s);

// Calibration model matrix. Naive coefficients (in the order exposure,
// intercept, covariates) estimate beta * lambda. The first row holds the
// free parameters (lambda_X*, lambda_0, lambda_Z); the rest is (0 | I).
struct CalibrationMatrix {
    Eigen::MatrixXd lambda;
    std::optional<Eigen::MatrixXd> param_vcov; // over (lambda_X*, lambda_0, lambda_Z)
    CalibrationSource source = CalibrationSource::internal;
    Eigen::Index rows_used = 0;

    static CalibrationMatrix from_parameters(const Eigen::VectorXd& params,
                                             std::optional<Eigen::MatrixXd> param_vcov,
                                             CalibrationSource source);

    Eigen::Index dim() const { return lambda.rows(); }
    Eigen::VectorXd parameters() const { return lambda.row(0).transpose(); }
    double slope() const { return lambda(0, 0); }
    bool invertible() const { return slope() != 0.0; }
    /// Closed-form inverse; throws NumericalError when lambda_X* == 0.
    Eigen::MatrixXd inverse() const;
    /// d(lambda)/d(param_p) for every free parameter.
    std::vector<Eigen::MatrixXd> parameter_derivatives() const;
};

// Outcome measurement error model matrix. (naive coefficients, 1) estimate
// (beta, 1) * theta.
//   non-differential, free parameters (theta_0, theta_1):
//     theta_1 on the first 2+k diagonal entries, 1 last, theta_0 at (last, intercept)
//   differential (univariable, binary exposure), free parameters
//   (theta_00, theta_01, theta_10, theta_11) with theta_{0x} the intercept and
//   theta_{1x} the slope of Y* on Y in exposure arm x:
//     [ theta_11              0         0 ]
//     [ theta_11 - theta_10   theta_10  0 ]
//     [ theta_01 - theta_00   theta_00  1 ]
struct ErrorModelMatrix {
    Eigen::MatrixXd theta;
    std::optional<Eigen::MatrixXd> param_vcov;
    bool differential = false;
    Eigen::Index rows_used = 0;
    bool single_replicate = false; // calibration study with m = 1

    static ErrorModelMatrix non_differential(double theta0, double theta1, Eigen::Index k,
                                             std::optional<Eigen::MatrixXd> param_vcov);
    static ErrorModelMatrix differential_arms(double theta00, double theta01, double theta10,
                                              double theta11,
                                              std::optional<Eigen::MatrixXd> param_vcov);

    Eigen::Index dim() const { return theta.rows(); }
    Eigen::VectorXd parameters() const;
    /// Slope theta_1 for the non-differential model.
    double slope() const { return theta(0, 0); }
    bool invertible() const;
    Eigen::MatrixXd inverse() const;
    std::vector<Eigen::MatrixXd> parameter_derivatives() const;
};

CalibrationMatrix estimate_lambda_internal(const Dataset& d, const MeasurementSpec& spec);
CalibrationMatrix estimate_lambda_replicates(const Dataset& d, const MeasurementSpec& spec);
CalibrationMatrix estimate_lambda_calibration(const Dataset& d, const MeasurementSpec& spec);
CalibrationMatrix lambda_from_random_variance(const Dataset& d, const MeasurementSpec& spec);
/// Dispatches on the spec's design (internal, replicates, calibration).
CalibrationMatrix estimate_lambda(const Dataset& d, const MeasurementSpec& spec);

ErrorModelMatrix estimate_theta(const Dataset& d, const MeasurementSpec& spec);
ErrorModelMatrix estimate_theta_differential(const Dataset& d, const MeasurementSpec& spec);

/// Builds the matrix described by an external (or assumed) model; see
/// ExternalModel for the coefficient order.
CalibrationMatrix lambda_from_external(const ExternalModel& model, Eigen::Index k);
ErrorModelMatrix theta_from_external(const ExternalModel& model, Eigen::Index k, bool differential);

/// Fits the calibration model X ~ 1 + X* + Z on an external validation set.
ExternalModel fit_external_calibration(const Dataset& ext, const std::string& reference,
                                       const std::string& substitute,
                                       const std::vector<std::string>& covariates);
/// Fits Y* ~ 1 + Y (or Y* ~ 1 + X + Y + X:Y when `exposure` is given) on an
/// external validation set.
ExternalModel fit_external_error_model(const Dataset& ext, const std::string& reference,
                                       const std::string& substitute,
                                       const std::optional<std::string>& exposure);

} // namespace errcal
