#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errcal/tabular.hpp"

namespace errcal {

enum class SimDesign {
    internal_covariate,
    internal_outcome,
    internal_outcome_differential,
    replicates,
    calibration_covariate,
    calibration_outcome,
    external_covariate,
    external_outcome,
};

std::string_view to_string(SimDesign d);
/// Throws DesignError on an unknown name.
SimDesign parse_sim_design(std::string_view name);
const std::vector<SimDesign>& all_sim_designs();

// Generating model (all latent variables Gaussian):
//   Z_j ~ N(z_mean_j, z_var_j) independent
//   X   = gamma' Z + e_X, e_X ~ N(0, var_x_given_z)     (differential: X ~ Bernoulli(p_exposed))
//   Y   = beta_0 + beta_x X + beta_z' Z + e, e ~ N(0, sigma2)
// Covariate error: substitute X* = theta0 + theta1 X + U, replicates X + U_j, U ~ N(0, tau2).
// Outcome error:   substitute Y* = theta0 + theta1 Y + E, replicates Y + E_j, E ~ N(0, tau2);
//                  differential: Y* = theta0x + theta1x Y + E in exposure arm x.
// Replicates design: X*_1..X*_m are all X + U_j (theta ignored).
// The internal subset is the first n_sub rows.
struct Scenario {
    SimDesign design = SimDesign::internal_covariate;
    std::size_t n = 1000;
    std::size_t n_sub = 250;
    std::size_t m = 3;
    std::size_t n_ext = 100;
    double beta_x = 0.5;
    double beta_0 = 0.0;
    Eigen::VectorXd beta_z = Eigen::VectorXd::Constant(1, 2.0);
    double sigma2 = 1.0;
    Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd z_var = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd gamma = Eigen::VectorXd::Constant(1, 0.25);
    double var_x_given_z = 1.0;
    double p_exposed = 0.5;
    double tau2 = 0.25;
    double theta0 = 0.0;
    double theta1 = 1.0;
    double theta00 = 0.0;
    double theta01 = 1.0;
    double theta10 = 0.5;
    double theta11 = 1.5;
    std::uint64_t seed = 1;

    /// Throws DesignError for infeasible or inconsistent settings.
    void validate() const;
    std::size_t k() const { return static_cast<std::size_t>(beta_z.size()); }
    bool outcome_error() const;
    /// Covariate names Z (or Z1..Zk when k > 1).
    std::vector<std::string> z_names() const;

    /// Settings shaped like the package's example datasets for each design.
    static Scenario preset(SimDesign d);
};

void to_json(nlohmann::json& j, const Scenario& s);
/// Missing keys keep the preset values of the given design.
void from_json(const nlohmann::json& j, Scenario& s);

struct GroundTruth {
    Eigen::VectorXd coef; // (beta_x, beta_0, beta_z)
    std::vector<std::string> terms;
    // Slope of E(X | X*, Z) for covariate designs with substitute X*.
    std::optional<double> attenuation;
};

nlohmann::json to_json(const GroundTruth& t);

struct GeneratedStudy {
    Dataset data;
    std::optional<Dataset> external;
    MeasurementSpec spec; // ready-to-use specification (external model fitted)
    GroundTruth truth;
};

/// Deterministic given scenario (including seed).
GeneratedStudy generate(const Scenario& s);

} // namespace errcal
