#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errcal/correct.hpp"
#include "errcal/uncertainty.hpp"

namespace errcal {

inline constexpr int kReportSchemaVersion = 1;

// Everything a `correct` run needs. JSON keys match the field names.
struct RunConfig {
    std::string input;
    std::string na = "NA";
    std::string error_in = "covariate";
    std::string outcome;
    std::vector<std::string> covariates;
    std::string substitute;
    std::optional<std::string> reference;
    std::vector<std::string> replicates;
    // Replicates-vs-calibration discriminator: "replicates" or "calibration".
    // Empty picks replicates for covariate error and calibration for outcome error.
    std::string design;
    std::optional<std::string> differential_by;
    std::vector<double> external_coef;
    std::vector<double> external_vcov; // row-major, empty when absent
    std::optional<std::string> external_input; // CSV to fit the external model on
    std::optional<double> random_variance;
    std::string method = "standard";
    std::string internal_estimator = "rc";
    std::size_t B = 0;
    std::optional<std::uint64_t> seed;
    double alpha = 0.05;
    bool fieller = false;
    bool zerovar = false;
    std::string format = "text";
    int workers = 0;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Unknown keys are rejected with a DesignError.
void from_json(const nlohmann::json& j, RunConfig& c);

/// MeasurementSpec described by the config (external model not yet fitted
/// when external_input is used; see resolve_spec).
MeasurementSpec spec_from_config(const RunConfig& c);
/// spec_from_config plus fitting the external model from external_input.
MeasurementSpec resolve_spec(const RunConfig& c);

/// Seed from the config, else the ERRCAL_SEED environment variable, else 1.
std::uint64_t resolve_seed(const RunConfig& c);

/// Machine-readable report (keys: meta, uncorrected, corrected, intervals,
/// bootstrap when B > 0, warnings). Coefficients are listed intercept first.
nlohmann::json build_report(const RunConfig& c, const MeasurementSpec& spec, const CorrectedFit& fit,
                            const std::optional<BootSummary>& boot, std::size_t rows_in_file);

/// Human-readable rendering of a report produced by build_report.
std::string render_text(const nlohmann::json& report);

/// Executes a correct run and writes the report; returns the exit status.
int run_correct(const RunConfig& c, std::ostream& out, std::ostream& err);

/// Entry point shared by the executable and the tests.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace errcal
