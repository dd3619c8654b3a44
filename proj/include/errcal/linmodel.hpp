#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace errcal {

struct LinearFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    double sigma2 = 0.0; // RSS / dof
    Eigen::Index dof = 0;
    Eigen::Index n = 0;
    std::vector<std::string> term_names;

    Eigen::VectorXd se() const { return vcov.diagonal().cwiseSqrt(); }
};

/// Least squares via column-pivoted QR. The design must already contain
/// whatever intercept column the caller wants; columns whose R pivot falls
/// below 1e-10 times the largest pivot are reported as dependent.
LinearFit fit_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                  std::vector<std::string> names = {});

// Balanced random-intercepts model
//   values(i, j) = fixed_design.row(i) * fixed + b_i + u_ij,
//   b_i ~ N(0, var_between), u_ij ~ N(0, var_within).
struct MixedFit {
    Eigen::VectorXd fixed;
    Eigen::MatrixXd fixed_vcov;
    double var_between = 0.0;
    double var_within = 0.0;
    double loglik = 0.0;
    bool boundary = false; // var_between estimate hit 0
    Eigen::Index n_subjects = 0;
    Eigen::Index n_replicates = 0;
    // Large-sample sampling variances of the variance components.
    double var_between_variance = 0.0;
    double var_within_variance = 0.0;
};

/// Closed-form maximum likelihood for a balanced design (m >= 2 replicates per
/// subject). Subject means carry the fixed effects and between variance; the
/// within-subject deviations carry the residual variance.
MixedFit fit_random_intercepts(const Eigen::MatrixXd& values, const Eigen::MatrixXd& fixed_design);

/// Gaussian log-likelihood of the balanced random-intercepts model.
double random_intercepts_loglik(const Eigen::MatrixXd& values, const Eigen::MatrixXd& fixed_design,
                                const Eigen::VectorXd& fixed, double var_between, double var_within);

// Parameters of the factorised replicates-study likelihood:
//   Y | Z      ~ N(delta0 + delta_z Z, sigma2_y_given_z)
//   X* | Y, Z  ~ random intercepts with fixed (kappa0, kappa_y, kappa_z).
struct MlParameters {
    double delta0 = 0.0;
    Eigen::VectorXd delta_z;
    double sigma2_y_given_z = 0.0;
    double kappa0 = 0.0;
    double kappa_y = 0.0;
    Eigen::VectorXd kappa_z;
    double sigma2_x_given_yz = 0.0;
    double tau2 = 0.0;

    Eigen::Index k() const { return delta_z.size(); }
    double rho0() const { return kappa0 + kappa_y * delta0; }
    Eigen::VectorXd rho_z() const { return kappa_z + kappa_y * delta_z; }

    /// (delta0, delta_z, sigma2_y|z, kappa0, kappa_y, kappa_z, sigma2_x|yz); tau2 is
    /// not needed for the outcome coefficients and is left out.
    Eigen::VectorXd reduced() const;
    static MlParameters from_reduced(const Eigen::VectorXd& zeta, Eigen::Index k, double tau2 = 0.0);

    /// (beta_X, beta_0, beta_Z) implied by the parameters.
    Eigen::VectorXd outcome_coefficients() const;
};

} // namespace errcal
