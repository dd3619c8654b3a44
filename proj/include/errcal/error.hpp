#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace errcal {

// The numeric value doubles as the CLI exit status.
enum class ErrorKind { design = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

    std::string_view kind_name() const noexcept {
        switch (kind_) {
        case ErrorKind::design: return "design";
        case ErrorKind::data: return "data";
        case ErrorKind::numerical: return "numerical";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

// Method/design incompatibility or an invalid MeasurementSpec.
class DesignError : public Error {
public:
    explicit DesignError(const std::string& what) : Error(ErrorKind::design, what) {}
};

// Bad input data: schema problems, missing columns, too few rows.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ParseError : public DataError {
public:
    ParseError(std::size_t row, std::string column, const std::string& what)
        : DataError(what), row_(row), column_(std::move(column)) {}

    /// 1-based data row (the header is row 0).
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

// Singular designs, non-invertible correction matrices, infeasible variances.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

} // namespace errcal
