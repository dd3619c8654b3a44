#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "errcal/linmodel.hpp"
#include "errcal/memodel.hpp"

namespace errcal {

double normal_quantile(double p);
/// Two-sided critical value z_{alpha/2}.
double normal_critical(double alpha);
double student_t_critical(double alpha, double dof);
double student_t_two_sided_p(double t, double dof);

// Jacobian of corrected = g(naive, params) split by argument.
struct CorrectionJacobian {
    Eigen::MatrixXd wrt_naive;  // (2+k) x (2+k)
    Eigen::MatrixXd wrt_params; // (2+k) x n_params
};

/// Corrected coefficients for a calibration matrix: naive * lambda^{-1}.
Eigen::VectorXd apply_calibration(const Eigen::VectorXd& naive, const CalibrationMatrix& lam);
/// Corrected coefficients for an error model matrix: first 2+k of (naive, 1) * theta^{-1}.
Eigen::VectorXd apply_error_model(const Eigen::VectorXd& naive, const ErrorModelMatrix& th);

CorrectionJacobian rc_jacobian(const Eigen::VectorXd& naive, const CalibrationMatrix& lam);
CorrectionJacobian mm_jacobian(const Eigen::VectorXd& naive, const ErrorModelMatrix& th);

/// A' Sigma* A: ignores the uncertainty in lambda.
Eigen::MatrixXd zerovar_vcov_rc(const Eigen::MatrixXd& vcov_naive, const CalibrationMatrix& lam);
/// Multivariate delta method; the naive and calibration estimates are taken
/// as uncorrelated. Throws NumericalError when lam carries no param_vcov.
Eigen::MatrixXd delta_vcov_rc(const Eigen::VectorXd& naive, const Eigen::MatrixXd& vcov_naive,
                              const CalibrationMatrix& lam);

Eigen::MatrixXd zerovar_vcov_mm(const Eigen::MatrixXd& vcov_naive, const ErrorModelMatrix& th);
Eigen::MatrixXd delta_vcov_mm(const Eigen::VectorXd& naive, const Eigen::MatrixXd& vcov_naive,
                              const ErrorModelMatrix& th);

struct FiellerInterval {
    double lower = 0.0;
    double upper = 0.0;
    bool bounded = false;
};

/// Confidence set for numerator / denominator from the roots of the Fieller
/// quadratic. Unbounded exactly when the denominator's Wald interval at the
/// same level contains 0.
FiellerInterval fieller_interval(double numerator, double var_numerator, double denominator,
                                 double var_denominator, double alpha, double covariance = 0.0);

struct WaldInterval {
    double estimate = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// est +/- z_{alpha/2} sqrt(diag(vcov)). Throws NumericalError on a negative
/// variance beyond rounding.
std::vector<WaldInterval> wald_intervals(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov,
                                         double alpha);

// Sampling variances of the components entering the ML back-transformation.
struct MlComponentVcov {
    Eigen::MatrixXd delta;        // (delta0, delta_z), 1+k square
    double sigma2_y_given_z = 0.0;
    Eigen::MatrixXd kappa;        // (kappa0, kappa_y, kappa_z), 2+k square
    double sigma2_x_given_yz = 0.0;

    /// Block-diagonal vcov of the reduced parameter vector (no cross terms).
    Eigen::MatrixXd block() const;
};

/// d beta / d zeta for the reduced parameter vector, rows (beta_X, beta_0, beta_Z).
Eigen::MatrixXd ml_jacobian(const MlParameters& p);
Eigen::MatrixXd delta_vcov_mle(const MlParameters& p, const MlComponentVcov& v);

struct BootSummary {
    std::size_t requested = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::size_t failures = 0;
    Eigen::MatrixXd estimates;  // one row per successful replicate
    Eigen::VectorXd se;         // empty when fewer than 2 successes
    std::optional<Eigen::MatrixXd> ci; // p x 2 percentile bounds, when >= kMinForIntervals successes
    std::vector<std::size_t> stratum_sizes;

    static constexpr std::size_t kMinForIntervals = 20;
    std::size_t successes() const { return static_cast<std::size_t>(estimates.rows()); }
};

/// Linear-interpolation sample quantile (type 7).
double percentile(std::vector<double> values, double prob);

} // namespace errcal
