#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace errcal {

// Column-oriented numeric table. Missing cells are tracked by a mask; their
// stored value is NaN but no accessor hands a missing cell out as a number.
class Dataset {
public:
    Dataset() = default;

    /// Appends a column. `observed` may be empty (all observed).
    void add_column(std::string name, std::vector<double> values,
                    std::vector<std::uint8_t> observed = {});

    std::size_t n_rows() const noexcept { return n_rows_; }
    std::size_t n_cols() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    bool has_column(std::string_view name) const;

    bool observed(std::string_view name, std::size_t row) const;
    std::span<const std::uint8_t> mask(std::string_view name) const;
    std::size_t count_observed(std::string_view name) const;

    /// Throws DataError when the cell is missing.
    double at(std::string_view name, std::size_t row) const;

    /// Whole column as a vector; throws DataError if any cell is missing.
    Eigen::VectorXd column(std::string_view name) const;

    /// Raw storage including NaN placeholders; callers must consult mask().
    std::span<const double> raw(std::string_view name) const;

    /// Row gather in the given order (duplicates allowed).
    Dataset take_rows(std::span<const std::size_t> rows) const;

    friend bool operator==(const Dataset& a, const Dataset& b);

private:
    std::size_t index_of(std::string_view name) const;

    std::size_t n_rows_ = 0;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> values_;
    std::vector<std::vector<std::uint8_t>> observed_;
    std::unordered_map<std::string, std::size_t> index_;
};

Dataset read_csv(std::istream& in, std::string_view na_token = "NA");
Dataset load_csv(const std::filesystem::path& path, std::string_view na_token = "NA");
void write_csv(const Dataset& d, std::ostream& out, std::string_view na_token = "NA");
void save_csv(const Dataset& d, const std::filesystem::path& path, std::string_view na_token = "NA");

/// Rows where every listed column is observed, in original order.
Dataset complete_cases(const Dataset& d, std::span<const std::string> cols);

enum class ErrorIn { covariate, outcome };

enum class Design { internal, replicates, calibration, external, random_variance };

std::string_view to_string(ErrorIn e);
std::string_view to_string(Design d);

struct ExternalModel {
    // Coefficients in regression order: intercept first, then the slope on the
    // substitute (or reference, for outcome models), then any further terms.
    Eigen::VectorXd coef;
    std::optional<Eigen::MatrixXd> vcov;
};

struct MeasurementSpec {
    ErrorIn error_in = ErrorIn::covariate;
    std::string substitute;
    std::optional<std::string> reference;
    std::vector<std::string> replicates;
    std::optional<std::string> differential_by;
    std::optional<ExternalModel> external_model;
    std::optional<double> random_variance;
    // Replicate columns belong to a calibration study (systematic substitute,
    // randomly erroneous replicates) rather than a replicates study.
    bool calibration = false;

    /// Covariate error: the outcome Y. Ignored for outcome error, where the
    /// substitute is the analysed outcome.
    std::string outcome;
    /// Outcome error: the first entry is the exposure X, the rest are Z.
    /// Covariate error: all entries are Z.
    std::vector<std::string> covariates;

    Design design() const;
    /// Throws DesignError when an invariant is violated.
    void validate() const;

    /// Columns that must be observed for a row to enter the main analysis.
    std::vector<std::string> analysis_columns() const;
    /// Number of error-free covariates besides the exposure (k).
    std::size_t n_other() const;
    /// Names of the other covariates Z.
    std::vector<std::string> other_covariates() const;
    /// Name of the error-prone or exposure term (first coefficient).
    const std::string& exposure() const;
    /// Outcome column of the naive regression.
    const std::string& response() const;
};

/// True where the row belongs to the internal subset.
std::vector<bool> validation_indicator(const Dataset& d, const MeasurementSpec& spec);

} // namespace errcal
