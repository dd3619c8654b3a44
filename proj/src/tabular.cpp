#include "errcal/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "errcal/error.hpp"

namespace errcal {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

// Splits an RFC-4180 stream into records. Quoted fields may span lines.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields, std::vector<bool>& quoted) {
        fields.clear();
        quoted.clear();
        std::string field;
        bool in_quotes = false;
        bool was_quoted = false;
        bool any = false;
        int c;
        while ((c = in_.get()) != std::char_traits<char>::eof()) {
            any = true;
            char ch = static_cast<char>(c);
            if (in_quotes) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field.push_back(ch);
                }
                continue;
            }
            if (ch == '"' && trim(field).empty()) {
                field.clear();
                in_quotes = true;
                was_quoted = true;
            } else if (ch == ',') {
                fields.push_back(std::move(field));
                quoted.push_back(was_quoted);
                field.clear();
                was_quoted = false;
            } else if (ch == '\r') {
                if (in_.peek() == '\n') in_.get();
                break;
            } else if (ch == '\n') {
                break;
            } else {
                field.push_back(ch);
            }
        }
        if (in_quotes) throw DataError("csv: unterminated quoted field");
        if (!any) return false;
        fields.push_back(std::move(field));
        quoted.push_back(was_quoted);
        return true;
    }

private:
    std::istream& in_;
};

bool parse_number(std::string_view text, double& out) {
    text = trim(text);
    if (text == "TRUE" || text == "true" || text == "True") {
        out = 1.0;
        return true;
    }
    if (text == "FALSE" || text == "false" || text == "False") {
        out = 0.0;
        return true;
    }
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool needs_quoting(std::string_view s) {
    return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void write_field(std::ostream& out, std::string_view s) {
    if (!needs_quoting(s)) {
        out << s;
        return;
    }
    out << '"';
    for (char c : s) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

} // namespace

void Dataset::add_column(std::string name, std::vector<double> values,
                         std::vector<std::uint8_t> observed) {
    if (name.empty()) throw DataError("dataset: column name must be nonempty");
    if (index_.count(name)) throw DataError("dataset: duplicate column '" + name + "'");
    if (!names_.empty() && values.size() != n_rows_)
        throw DataError("dataset: column '" + name + "' has " + std::to_string(values.size()) +
                        " rows, expected " + std::to_string(n_rows_));
    if (observed.empty()) {
        observed.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) observed[i] = !std::isnan(values[i]);
    }
    if (observed.size() != values.size())
        throw DataError("dataset: mask length mismatch for column '" + name + "'");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!observed[i]) values[i] = kMissing;
        else if (!std::isfinite(values[i]))
            throw DataError("dataset: non-finite observed value in column '" + name + "'");
    }
    if (names_.empty()) n_rows_ = values.size();
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(values));
    observed_.push_back(std::move(observed));
}

bool Dataset::has_column(std::string_view name) const {
    return index_.find(std::string(name)) != index_.end();
}

std::size_t Dataset::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw DataError("dataset: unknown column '" + std::string(name) + "'");
    return it->second;
}

bool Dataset::observed(std::string_view name, std::size_t row) const {
    return observed_[index_of(name)].at(row) != 0;
}

std::span<const std::uint8_t> Dataset::mask(std::string_view name) const {
    return observed_[index_of(name)];
}

std::size_t Dataset::count_observed(std::string_view name) const {
    const auto& m = observed_[index_of(name)];
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

double Dataset::at(std::string_view name, std::size_t row) const {
    const std::size_t j = index_of(name);
    if (!observed_[j].at(row))
        throw DataError("dataset: cell (" + std::to_string(row + 1) + ", '" + std::string(name) +
                        "') is missing");
    return values_[j][row];
}

Eigen::VectorXd Dataset::column(std::string_view name) const {
    const std::size_t j = index_of(name);
    const auto& m = observed_[j];
    if (std::find(m.begin(), m.end(), std::uint8_t{0}) != m.end())
        throw DataError("dataset: column '" + std::string(name) + "' has missing cells");
    return Eigen::Map<const Eigen::VectorXd>(values_[j].data(), static_cast<Eigen::Index>(n_rows_));
}

std::span<const double> Dataset::raw(std::string_view name) const {
    return values_[index_of(name)];
}

Dataset Dataset::take_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    out.n_rows_ = rows.size();
    out.names_ = names_;
    out.index_ = index_;
    out.values_.resize(names_.size());
    out.observed_.resize(names_.size());
    for (std::size_t j = 0; j < names_.size(); ++j) {
        auto& v = out.values_[j];
        auto& m = out.observed_[j];
        v.resize(rows.size());
        m.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            v[i] = values_[j][rows[i]];
            m[i] = observed_[j][rows[i]];
        }
    }
    return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
    if (a.n_rows_ != b.n_rows_ || a.names_ != b.names_ || a.observed_ != b.observed_) return false;
    for (std::size_t j = 0; j < a.values_.size(); ++j)
        for (std::size_t i = 0; i < a.n_rows_; ++i)
            if (a.observed_[j][i] && a.values_[j][i] != b.values_[j][i]) return false;
    return true;
}

Dataset read_csv(std::istream& in, std::string_view na_token) {
    CsvReader reader(in);
    std::vector<std::string> header;
    std::vector<bool> quoted;
    if (!reader.next(header, quoted)) throw DataError("csv: missing header row");
    for (std::size_t j = 0; j < header.size(); ++j)
        if (!quoted[j]) header[j] = std::string(trim(header[j]));
    {
        std::vector<std::string> sorted = header;
        std::sort(sorted.begin(), sorted.end());
        auto dup = std::adjacent_find(sorted.begin(), sorted.end());
        if (dup != sorted.end()) throw DataError("csv: duplicate header '" + *dup + "'");
        for (const auto& h : header)
            if (h.empty()) throw DataError("csv: empty header name");
    }

    const std::size_t ncol = header.size();
    std::vector<std::vector<double>> values(ncol);
    std::vector<std::vector<std::uint8_t>> masks(ncol);
    std::vector<std::string> fields;
    std::size_t row = 0;
    while (reader.next(fields, quoted)) {
        if (fields.size() == 1 && fields[0].empty() && !quoted[0]) continue; // blank line
        ++row;
        if (fields.size() != ncol)
            throw ParseError(row, "", "csv: row " + std::to_string(row) + " has " +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(ncol));
        for (std::size_t j = 0; j < ncol; ++j) {
            std::string_view cell = trim(fields[j]);
            if (cell.empty() || cell == na_token) {
                values[j].push_back(kMissing);
                masks[j].push_back(0);
                continue;
            }
            double v;
            if (!parse_number(cell, v))
                throw ParseError(row, header[j],
                                 "csv: malformed numeric cell '" + std::string(cell) + "' at (" +
                                     std::to_string(row) + ", \"" + header[j] + "\")");
            values[j].push_back(v);
            masks[j].push_back(1);
        }
    }

    Dataset d;
    for (std::size_t j = 0; j < ncol; ++j)
        d.add_column(header[j], std::move(values[j]), std::move(masks[j]));
    return d;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view na_token) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("csv: cannot open '" + path.string() + "'");
    return read_csv(in, na_token);
}

void write_csv(const Dataset& d, std::ostream& out, std::string_view na_token) {
    const auto& names = d.names();
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (j) out << ',';
        write_field(out, names[j]);
    }
    out << '\n';
    std::vector<std::span<const double>> cols;
    std::vector<std::span<const std::uint8_t>> masks;
    for (const auto& n : names) {
        cols.push_back(d.raw(n));
        masks.push_back(d.mask(n));
    }
    char buf[64];
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (j) out << ',';
            if (!masks[j][i]) {
                write_field(out, na_token);
                continue;
            }
            // Shortest representation that round-trips exactly.
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), cols[j][i]);
            out.write(buf, ptr - buf);
        }
        out << '\n';
    }
}

void save_csv(const Dataset& d, const std::filesystem::path& path, std::string_view na_token) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("csv: cannot write '" + path.string() + "'");
    write_csv(d, out, na_token);
    if (!out) throw DataError("csv: write failed for '" + path.string() + "'");
}

Dataset complete_cases(const Dataset& d, std::span<const std::string> cols) {
    std::vector<std::span<const std::uint8_t>> masks;
    masks.reserve(cols.size());
    for (const auto& c : cols) masks.push_back(d.mask(c));
    std::vector<std::size_t> keep;
    keep.reserve(d.n_rows());
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        bool ok = true;
        for (const auto& m : masks) ok = ok && m[i];
        if (ok) keep.push_back(i);
    }
    if (keep.size() == d.n_rows()) return d;
    return d.take_rows(keep);
}

std::string_view to_string(ErrorIn e) {
    return e == ErrorIn::covariate ? "covariate" : "outcome";
}

std::string_view to_string(Design d) {
    switch (d) {
    case Design::internal: return "internal";
    case Design::replicates: return "replicates";
    case Design::calibration: return "calibration";
    case Design::external: return "external";
    case Design::random_variance: return "random-variance";
    }
    return "unknown";
}

Design MeasurementSpec::design() const {
    if (reference) return Design::internal;
    if (!replicates.empty()) return calibration ? Design::calibration : Design::replicates;
    if (external_model) return Design::external;
    if (random_variance) return Design::random_variance;
    throw DesignError("measurement spec: no reference, replicates, external model or random variance given");
}

void MeasurementSpec::validate() const {
    if (substitute.empty()) throw DesignError("measurement spec: substitute column is required");
    const int sources = int(reference.has_value()) + int(!replicates.empty()) +
                        int(external_model.has_value()) + int(random_variance.has_value());
    if (sources != 1)
        throw DesignError("measurement spec: exactly one of reference, replicates, external model, "
                          "random variance must be given (got " + std::to_string(sources) + ")");
    if (error_in == ErrorIn::covariate && outcome.empty())
        throw DesignError("measurement spec: outcome column is required for covariate error");
    if (error_in == ErrorIn::outcome && covariates.empty())
        throw DesignError("measurement spec: outcome error needs at least the exposure covariate");
    if (differential_by) {
        if (error_in != ErrorIn::outcome)
            throw DesignError("measurement spec: differential error is only supported for the outcome");
        if (covariates.size() != 1 || covariates.front() != *differential_by)
            throw DesignError("measurement spec: differential error requires a univariable model whose "
                              "only covariate is the binary exposure '" + *differential_by + "'");
    }
    if (random_variance) {
        if (error_in != ErrorIn::covariate)
            throw DesignError("measurement spec: a random error variance applies to covariate error only");
        if (!(*random_variance >= 0.0))
            throw DesignError("measurement spec: random error variance must be nonnegative");
    }
    if (calibration && replicates.empty())
        throw DesignError("measurement spec: a calibration design needs replicate columns");
    if (error_in == ErrorIn::outcome && !replicates.empty() && !calibration)
        throw DesignError("measurement spec: replicates-only outcome designs are not correctable; "
                          "random outcome error does not bias the coefficients");
    if (external_model) {
        const auto& m = *external_model;
        if (m.vcov) {
            if (m.vcov->rows() != m.coef.size() || m.vcov->cols() != m.coef.size())
                throw DesignError("external model: vcov must be square and match coef length");
            if (!m.vcov->isApprox(m.vcov->transpose(), 1e-10))
                throw DesignError("external model: vcov must be symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*m.vcov, Eigen::EigenvaluesOnly);
            const double scale = std::max(1.0, m.vcov->cwiseAbs().maxCoeff());
            if (es.eigenvalues().minCoeff() < -1e-10 * scale)
                throw DesignError("external model: vcov must be positive semidefinite");
        }
    }
    std::vector<std::string> cols = analysis_columns();
    if (reference) cols.push_back(*reference);
    cols.insert(cols.end(), replicates.begin(), replicates.end());
    std::vector<std::string> sorted = cols;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DesignError("measurement spec: a column is used in more than one role");
}

std::vector<std::string> MeasurementSpec::analysis_columns() const {
    std::vector<std::string> cols;
    if (error_in == ErrorIn::covariate) cols.push_back(outcome);
    cols.push_back(substitute);
    cols.insert(cols.end(), covariates.begin(), covariates.end());
    return cols;
}

std::size_t MeasurementSpec::n_other() const {
    return error_in == ErrorIn::covariate ? covariates.size() : covariates.size() - 1;
}

std::vector<std::string> MeasurementSpec::other_covariates() const {
    if (error_in == ErrorIn::covariate) return covariates;
    return {covariates.begin() + 1, covariates.end()};
}

const std::string& MeasurementSpec::exposure() const {
    return error_in == ErrorIn::covariate ? substitute : covariates.front();
}

const std::string& MeasurementSpec::response() const {
    return error_in == ErrorIn::covariate ? outcome : substitute;
}

std::vector<bool> validation_indicator(const Dataset& d, const MeasurementSpec& spec) {
    const Design design = spec.design();
    std::vector<bool> ind(d.n_rows(), false);
    if (design == Design::internal) {
        auto m = d.mask(*spec.reference);
        for (std::size_t i = 0; i < d.n_rows(); ++i) ind[i] = m[i] != 0;
        return ind;
    }
    if (design == Design::replicates || design == Design::calibration) {
        std::vector<std::span<const std::uint8_t>> masks;
        for (const auto& r : spec.replicates) masks.push_back(d.mask(r));
        for (std::size_t i = 0; i < d.n_rows(); ++i) {
            bool ok = true;
            for (const auto& m : masks) ok = ok && m[i];
            ind[i] = ok;
        }
        return ind;
    }
    throw DesignError("no internal subset: design '" + std::string(to_string(design)) +
                      "' carries no validation rows");
}

} // namespace errcal
