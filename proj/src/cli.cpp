#include "errcal/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "errcal/bootstrap.hpp"
#include "errcal/error.hpp"
#include "errcal/simulate.hpp"

namespace errcal {

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> split_numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw DesignError(what + ": '" + item + "' is not a number");
        }
    }
    return out;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json number_array(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(number_array(m.row(i).transpose()));
    return rows;
}

// Display order: intercept first, then the exposure, then the covariates.
std::vector<Eigen::Index> display_order(Eigen::Index p) {
    std::vector<Eigen::Index> order{1, 0};
    for (Eigen::Index j = 2; j < p; ++j) order.push_back(j);
    return order;
}

Eigen::VectorXd reorder(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& order) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(order[i]);
    return out;
}

json interval_block(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov, double alpha,
                    const std::vector<Eigen::Index>& order) {
    const auto w = wald_intervals(coef, vcov, alpha);
    Eigen::VectorXd se(coef.size()), lo(coef.size()), hi(coef.size());
    for (Eigen::Index j = 0; j < coef.size(); ++j) {
        se(j) = w[static_cast<std::size_t>(j)].se;
        lo(j) = w[static_cast<std::size_t>(j)].lower;
        hi(j) = w[static_cast<std::size_t>(j)].upper;
    }
    return json{{"se", number_array(reorder(se, order))},
                {"lower", number_array(reorder(lo, order))},
                {"upper", number_array(reorder(hi, order))}};
}

Design resolve_design_flag(const RunConfig& c, ErrorIn e) {
    if (c.design.empty()) return e == ErrorIn::covariate ? Design::replicates : Design::calibration;
    if (c.design == "replicates") return Design::replicates;
    if (c.design == "calibration") return Design::calibration;
    throw DesignError("design must be 'replicates' or 'calibration', got '" + c.design + "'");
}

InternalEstimator parse_internal(const std::string& s) {
    if (s == "rc") return InternalEstimator::rc_on_subset;
    if (s == "mle") return InternalEstimator::mle;
    throw DesignError("internal_estimator must be 'rc' or 'mle', got '" + s + "'");
}

void write_error(const Error& e, const std::string& format, std::ostream& out, std::ostream& err) {
    json obj{{"kind", std::string(e.kind_name())}, {"message", e.what()}, {"exit_code", e.exit_code()}};
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
        obj["row"] = p->row();
        obj["column"] = p->column();
    }
    if (format == "json") out << json{{"error", obj}}.dump(2) << '\n';
    else err << "errcal: " << e.kind_name() << " error: " << e.what() << '\n';
}

std::string fmt(const json& v, int precision = 8) {
    if (v.is_null()) return "NA";
    std::ostringstream s;
    s << std::setprecision(precision) << v.get<double>();
    return s.str();
}

// Fixed-width table: first column left-aligned labels, the rest right-aligned.
std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto grow = [&](const std::vector<std::string>& r) {
        for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
    };
    grow(header);
    for (const auto& r : rows) grow(r);
    std::ostringstream s;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j == 0) s << std::left << std::setw(static_cast<int>(width[j])) << r[j];
            else s << "  " << std::right << std::setw(static_cast<int>(width[j])) << r[j];
        }
        s << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write '" + p.string() + "'");
    f << content;
    if (!f) throw DataError("failed writing '" + p.string() + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw DataError("config '" + path + "': " + e.what());
    }
}

RunConfig config_for_study(const GeneratedStudy& g, const std::string& csv) {
    RunConfig c;
    const MeasurementSpec& s = g.spec;
    c.input = csv;
    c.error_in = std::string(to_string(s.error_in));
    if (s.error_in == ErrorIn::covariate) c.outcome = s.outcome;
    c.covariates = s.covariates;
    c.substitute = s.substitute;
    c.reference = s.reference;
    c.replicates = s.replicates;
    if (!s.replicates.empty()) c.design = s.calibration ? "calibration" : "replicates";
    c.differential_by = s.differential_by;
    if (s.external_model) {
        const auto& m = *s.external_model;
        c.external_coef.assign(m.coef.data(), m.coef.data() + m.coef.size());
        if (m.vcov)
            for (Eigen::Index i = 0; i < m.vcov->rows(); ++i)
                for (Eigen::Index j = 0; j < m.vcov->cols(); ++j) c.external_vcov.push_back((*m.vcov)(i, j));
    }
    return c;
}

// Path of `target` as seen from the directory holding `sidecar`.
std::string relative_to_sidecar(const std::filesystem::path& target, const std::filesystem::path& sidecar) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::absolute(sidecar).parent_path();
    return fs::absolute(target).lexically_relative(dir).generic_string();
}

int run_simulate(const Scenario& s, const std::string& output, std::string truth_path,
                 std::ostream& out) {
    const GeneratedStudy g = generate(s);
    namespace fs = std::filesystem;
    const fs::path csv(output);
    if (truth_path.empty()) truth_path = output + ".truth.json";
    std::ostringstream data;
    write_csv(g.data, data);
    write_file(csv, data.str());
    json sidecar{{"schema_version", kReportSchemaVersion},
                 {"scenario", s},
                 {"truth", to_json(g.truth)},
                 {"config", config_for_study(g, relative_to_sidecar(csv, truth_path))}};
    if (g.external) {
        fs::path ext = csv;
        ext.replace_filename(csv.stem().string() + "_external" + csv.extension().string());
        std::ostringstream e;
        write_csv(*g.external, e);
        write_file(ext, e.str());
        sidecar["external_csv"] = ext.filename().string();
    }
    write_file(truth_path, sidecar.dump(2) + "\n");
    out << "wrote " << g.data.n_rows() << " rows to " << output << " (ground truth: " << truth_path << ")\n";
    return 0;
}

} // namespace

void to_json(json& j, const RunConfig& c) {
    j = json{{"input", c.input},
             {"na", c.na},
             {"error_in", c.error_in},
             {"outcome", c.outcome},
             {"covariates", c.covariates},
             {"substitute", c.substitute},
             {"replicates", c.replicates},
             {"design", c.design},
             {"external_coef", c.external_coef},
             {"external_vcov", c.external_vcov},
             {"method", c.method},
             {"internal_estimator", c.internal_estimator},
             {"B", c.B},
             {"alpha", c.alpha},
             {"fieller", c.fieller},
             {"zerovar", c.zerovar},
             {"format", c.format},
             {"workers", c.workers}};
    j["reference"] = c.reference ? json(*c.reference) : json(nullptr);
    j["differential_by"] = c.differential_by ? json(*c.differential_by) : json(nullptr);
    j["external_input"] = c.external_input ? json(*c.external_input) : json(nullptr);
    j["random_variance"] = c.random_variance ? json(*c.random_variance) : json(nullptr);
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
}

void from_json(const json& j, RunConfig& c) {
    if (!j.is_object()) throw DesignError("config: expected a JSON object");
    static const std::vector<std::string> known{
        "input", "na", "error_in", "outcome", "covariates", "substitute", "reference", "replicates",
        "design", "differential_by", "external_coef", "external_vcov", "external_input",
        "random_variance", "method", "internal_estimator", "B", "seed", "alpha", "fieller", "zerovar",
        "format", "workers"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw DesignError("config: unknown key '" + key + "'");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(field);
        };
        auto get_opt = [&](const char* key, auto& field) {
            if (j.contains(key) && !j.at(key).is_null())
                field = j.at(key).get<typename std::remove_reference_t<decltype(field)>::value_type>();
        };
        get("input", c.input);
        get("na", c.na);
        get("error_in", c.error_in);
        get("outcome", c.outcome);
        get("covariates", c.covariates);
        get("substitute", c.substitute);
        get_opt("reference", c.reference);
        get("replicates", c.replicates);
        get("design", c.design);
        get_opt("differential_by", c.differential_by);
        get("external_coef", c.external_coef);
        if (j.contains("external_vcov") && j.at("external_vcov").is_array()) {
            c.external_vcov.clear();
            for (const auto& row : j.at("external_vcov")) {
                if (row.is_array())
                    for (const auto& v : row) c.external_vcov.push_back(v.get<double>());
                else c.external_vcov.push_back(row.get<double>());
            }
        }
        get_opt("external_input", c.external_input);
        get_opt("random_variance", c.random_variance);
        get("method", c.method);
        get("internal_estimator", c.internal_estimator);
        get("B", c.B);
        get_opt("seed", c.seed);
        get("alpha", c.alpha);
        get("fieller", c.fieller);
        get("zerovar", c.zerovar);
        get("format", c.format);
        get("workers", c.workers);
    } catch (const json::exception& e) {
        throw DesignError(std::string("config: ") + e.what());
    }
}

MeasurementSpec spec_from_config(const RunConfig& c) {
    MeasurementSpec s;
    if (c.error_in == "covariate") s.error_in = ErrorIn::covariate;
    else if (c.error_in == "outcome") s.error_in = ErrorIn::outcome;
    else throw DesignError("error_in must be 'covariate' or 'outcome', got '" + c.error_in + "'");
    s.substitute = c.substitute;
    s.reference = c.reference;
    s.replicates = c.replicates;
    s.differential_by = c.differential_by;
    s.random_variance = c.random_variance;
    s.outcome = c.outcome;
    s.covariates = c.covariates;
    if (!s.replicates.empty()) s.calibration = resolve_design_flag(c, s.error_in) == Design::calibration;
    if (!c.external_coef.empty()) {
        const auto p = static_cast<Eigen::Index>(c.external_coef.size());
        std::optional<Eigen::MatrixXd> vcov;
        if (!c.external_vcov.empty()) {
            if (static_cast<Eigen::Index>(c.external_vcov.size()) != p * p)
                throw DesignError("external_vcov must hold " + std::to_string(p * p) +
                                  " entries (a square matrix matching external_coef)");
            using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
            vcov.emplace(Eigen::Map<const RowMajor>(c.external_vcov.data(), p, p));
        }
        s.external_model = ExternalModel{Eigen::Map<const Eigen::VectorXd>(c.external_coef.data(), p),
                                         std::move(vcov)};
    } else if (!c.external_vcov.empty()) {
        throw DesignError("external_vcov given without external_coef");
    }
    return s;
}

MeasurementSpec resolve_spec(const RunConfig& c) {
    MeasurementSpec s = spec_from_config(c);
    if (c.external_input) {
        if (s.external_model) throw DesignError("give either external coefficients or an external input, not both");
        if (!s.reference)
            throw DesignError("external input: name the error-free column of the external file with --reference");
        const Dataset ext = load_csv(*c.external_input, c.na);
        const std::string ref = *s.reference;
        s.reference.reset();
        if (s.error_in == ErrorIn::covariate)
            s.external_model = fit_external_calibration(ext, ref, s.substitute, s.other_covariates());
        else
            s.external_model = fit_external_error_model(
                ext, ref, s.substitute,
                s.differential_by ? std::optional<std::string>(*s.differential_by) : std::nullopt);
    }
    s.validate();
    return s;
}

std::uint64_t resolve_seed(const RunConfig& c) {
    if (c.seed) return *c.seed;
    if (const char* env = std::getenv("ERRCAL_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::exception&) {
            throw DesignError(std::string("ERRCAL_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 1;
}

json build_report(const RunConfig& c, const MeasurementSpec& spec, const CorrectedFit& fit,
                  const std::optional<BootSummary>& boot, std::size_t rows_in_file) {
    const LinearFit& u = fit.uncorrected;
    const Eigen::Index p = u.coef.size();
    const auto order = display_order(p);
    const double alpha = c.alpha;

    std::vector<std::string> terms;
    for (auto j : order) terms.push_back(u.term_names[static_cast<std::size_t>(j)]);
    std::vector<std::string> cor_terms = terms;
    if (spec.error_in == ErrorIn::covariate) cor_terms[1] = "cor_" + cor_terms[1];

    json meta{{"schema_version", kReportSchemaVersion},
              {"tool", "errcal"},
              {"method", c.method},
              {"correction", std::string(to_string(fit.kind))},
              {"design", std::string(to_string(spec.design()))},
              {"error_in", std::string(to_string(spec.error_in))},
              {"differential", spec.differential_by.has_value()},
              {"alpha", alpha},
              {"B", c.B},
              {"rows_in_file", rows_in_file},
              {"rows_analysed", u.n}};
    meta["seed"] = c.B > 0 ? json(boot ? boot->seed : 0) : json(nullptr);

    // Uncorrected: OLS summary with t-based intervals.
    const Eigen::VectorXd se = u.se();
    const double tcrit = student_t_critical(alpha, static_cast<double>(u.dof));
    Eigen::VectorXd tval(p), pval(p), lo(p), hi(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        tval(j) = se(j) > 0 ? u.coef(j) / se(j) : std::numeric_limits<double>::quiet_NaN();
        pval(j) = std::isfinite(tval(j)) ? student_t_two_sided_p(tval(j), static_cast<double>(u.dof))
                                         : std::numeric_limits<double>::quiet_NaN();
        lo(j) = u.coef(j) - tcrit * se(j);
        hi(j) = u.coef(j) + tcrit * se(j);
    }
    json uncorrected{{"terms", terms},
                     {"coef", number_array(reorder(u.coef, order))},
                     {"se", number_array(reorder(se, order))},
                     {"t", number_array(reorder(tval, order))},
                     {"p", number_array(reorder(pval, order))},
                     {"lower", number_array(reorder(lo, order))},
                     {"upper", number_array(reorder(hi, order))},
                     {"residual_se", number(std::sqrt(u.sigma2))},
                     {"dof", u.dof}};

    json corrected{{"terms", cor_terms}, {"coef", number_array(reorder(fit.coef, order))}};
    if (fit.lambda) {
        json m{{"name", "Lambda"}, {"source", std::string(to_string(fit.lambda->source))},
               {"values", matrix_json(fit.lambda->lambda)}};
        m["parameter_vcov"] = fit.lambda->param_vcov ? matrix_json(*fit.lambda->param_vcov) : json(nullptr);
        corrected["matrix"] = m;
    } else if (fit.theta) {
        json m{{"name", "Theta"}, {"differential", fit.theta->differential},
               {"values", matrix_json(fit.theta->theta)}};
        m["parameter_vcov"] = fit.theta->param_vcov ? matrix_json(*fit.theta->param_vcov) : json(nullptr);
        corrected["matrix"] = m;
    }
    if (fit.internal_fit) {
        corrected["internal"] = json{{"coef", number_array(reorder(fit.internal_fit->coef, order))},
                                     {"se", number_array(reorder(fit.internal_fit->se(), order))}};
    }
    if (fit.ml) {
        const MlParameters& ml = *fit.ml;
        corrected["ml"] = json{{"delta0", ml.delta0},
                               {"delta_z", number_array(ml.delta_z)},
                               {"sigma2_y_given_z", ml.sigma2_y_given_z},
                               {"kappa0", ml.kappa0},
                               {"kappa_y", ml.kappa_y},
                               {"kappa_z", number_array(ml.kappa_z)},
                               {"sigma2_x_given_yz", ml.sigma2_x_given_yz},
                               {"tau2", ml.tau2},
                               {"boundary", fit.mixed && fit.mixed->boundary}};
    }

    json intervals = json::object();
    // Default variance: the delta method (or the method's own variance);
    // sensitivity runs without a vcov fall back to zero-variance, labelled.
    if (fit.vcov_delta) intervals["delta"] = interval_block(fit.coef, *fit.vcov_delta, alpha, order);
    else intervals["delta"] = nullptr;
    if (c.zerovar || (!fit.vcov_delta && fit.vcov_zerovar)) {
        if (fit.vcov_zerovar) intervals["zerovar"] = interval_block(fit.coef, *fit.vcov_zerovar, alpha, order);
        else intervals["zerovar"] = nullptr;
    }
    if (c.fieller) {
        const auto f = fieller_intervals(fit, alpha);
        json arr = json::array();
        for (auto j : order) {
            const auto& fi = f[static_cast<std::size_t>(j)];
            if (!fi) arr.push_back(nullptr);
            else if (!fi->bounded) arr.push_back(json{{"bounded", false}, {"lower", nullptr}, {"upper", nullptr}});
            else arr.push_back(json{{"bounded", true}, {"lower", number(fi->lower)}, {"upper", number(fi->upper)}});
        }
        intervals["fieller"] = arr;
    }

    json warnings = fit.warnings;
    json report{{"meta", meta}, {"uncorrected", uncorrected}, {"corrected", corrected}, {"intervals", intervals}};
    if (boot) {
        json b{{"B", boot->requested},
               {"seed", boot->seed},
               {"successes", boot->successes()},
               {"failures", boot->failures},
               {"stratum_sizes", boot->stratum_sizes}};
        b["se"] = boot->se.size() ? number_array(reorder(boot->se, order)) : json(nullptr);
        if (boot->ci) {
            b["lower"] = number_array(reorder(boot->ci->col(0), order));
            b["upper"] = number_array(reorder(boot->ci->col(1), order));
        } else {
            b["lower"] = nullptr;
            b["upper"] = nullptr;
            warnings.push_back("bootstrap intervals need at least " +
                               std::to_string(BootSummary::kMinForIntervals) + " successful replicates (got " +
                               std::to_string(boot->successes()) + ")");
        }
        if (boot->failures > 0)
            warnings.push_back(std::to_string(boot->failures) + " bootstrap replicate(s) failed and were skipped");
        report["bootstrap"] = b;
    }
    report["warnings"] = warnings;
    return report;
}

std::string render_text(const json& r) {
    std::ostringstream s;
    const json& meta = r.at("meta");
    const json& unc = r.at("uncorrected");
    const json& cor = r.at("corrected");
    const json& iv = r.at("intervals");
    const double alpha = meta.at("alpha").get<double>();
    const std::string level = fmt(json(100.0 * (1.0 - alpha)), 6) + "%";
    const auto& terms = cor.at("terms");
    const std::size_t p = terms.size();

    s << "Correction: " << meta.at("correction").get<std::string>() << " (method "
      << meta.at("method").get<std::string>() << ", " << meta.at("design").get<std::string>() << " design, "
      << meta.at("error_in").get<std::string>() << " error"
      << (meta.at("differential").get<bool>() ? ", differential" : "") << ")\n\n";

    const bool has_delta = !iv.at("delta").is_null();
    const bool has_zv = iv.contains("zerovar") && !iv.at("zerovar").is_null();
    const bool has_boot = r.contains("bootstrap");
    const bool has_fieller = iv.contains("fieller");

    s << "Coefficients Corrected Model:\n";
    {
        std::vector<std::string> header{"", "Estimate"};
        if (has_delta) header.push_back("SE");
        if (has_zv) header.push_back("SE (zerovar)");
        if (has_boot) header.push_back("SE (btstr)");
        std::vector<std::vector<std::string>> rows;
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<std::string> row{terms[j].get<std::string>(), fmt(cor.at("coef")[j])};
            if (has_delta) row.push_back(fmt(iv.at("delta").at("se")[j]));
            if (has_zv) row.push_back(fmt(iv.at("zerovar").at("se")[j]));
            if (has_boot) {
                const json& bse = r.at("bootstrap").at("se");
                row.push_back(bse.is_null() ? "NA" : fmt(bse[j]));
            }
            rows.push_back(std::move(row));
        }
        s << table(header, rows) << '\n';
    }

    s << level << " Confidence Intervals:\n";
    {
        std::vector<std::string> header{"", "Estimate"};
        auto add_pair = [&](const std::string& label) {
            header.push_back("LCI" + label);
            header.push_back("UCI" + label);
        };
        if (has_delta) add_pair("");
        if (has_zv) add_pair(" (zerovar)");
        if (has_fieller) add_pair(" (fieller)");
        const bool boot_ci = has_boot && !r.at("bootstrap").at("lower").is_null();
        if (boot_ci) add_pair(" (btstr)");
        std::vector<std::vector<std::string>> rows;
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<std::string> row{terms[j].get<std::string>(), fmt(cor.at("coef")[j])};
            if (has_delta) {
                row.push_back(fmt(iv.at("delta").at("lower")[j]));
                row.push_back(fmt(iv.at("delta").at("upper")[j]));
            }
            if (has_zv) {
                row.push_back(fmt(iv.at("zerovar").at("lower")[j]));
                row.push_back(fmt(iv.at("zerovar").at("upper")[j]));
            }
            if (has_fieller) {
                const json& f = iv.at("fieller")[j];
                if (f.is_null()) {
                    row.push_back("NA");
                    row.push_back("NA");
                } else if (!f.at("bounded").get<bool>()) {
                    row.push_back("-Inf");
                    row.push_back("Inf");
                } else {
                    row.push_back(fmt(f.at("lower")));
                    row.push_back(fmt(f.at("upper")));
                }
            }
            if (boot_ci) {
                row.push_back(fmt(r.at("bootstrap").at("lower")[j]));
                row.push_back(fmt(r.at("bootstrap").at("upper")[j]));
            }
            rows.push_back(std::move(row));
        }
        s << table(header, rows);
        if (has_boot) {
            const json& b = r.at("bootstrap");
            s << "Bootstrap: " << b.at("successes").get<std::size_t>() << " of " << b.at("B").get<std::size_t>()
              << " stratified percentile replicates succeeded (seed " << b.at("seed").get<std::uint64_t>() << ")\n";
        }
        s << '\n';
    }

    if (cor.contains("matrix")) {
        const json& m = cor.at("matrix");
        s << "The correction is obtained by the matrix " << m.at("name").get<std::string>() << ":\n";
        for (const auto& row : m.at("values")) {
            for (const auto& v : row) s << "  " << std::setw(14) << fmt(v);
            s << '\n';
        }
        s << '\n';
    }

    s << "Coefficients Uncorrected Model:\n";
    {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t j = 0; j < p; ++j)
            rows.push_back({unc.at("terms")[j].get<std::string>(), fmt(unc.at("coef")[j]), fmt(unc.at("se")[j]),
                            fmt(unc.at("t")[j]), fmt(unc.at("p")[j]), fmt(unc.at("lower")[j]),
                            fmt(unc.at("upper")[j])});
        s << table({"", "Estimate", "Std. Error", "t value", "Pr(>|t|)", "LCI", "UCI"}, rows) << '\n';
        s << "Residual standard error: " << fmt(unc.at("residual_se")) << " on " << unc.at("dof").get<long long>()
          << " degrees of freedom\n";
    }

    const json& w = r.at("warnings");
    if (!w.empty()) {
        s << "\nWarnings:\n";
        for (const auto& msg : w) s << "  - " << msg.get<std::string>() << '\n';
    }
    return s.str();
}

int run_correct(const RunConfig& c, std::ostream& out, std::ostream& err) {
    try {
        if (c.format != "text" && c.format != "json")
            throw DesignError("format must be 'text' or 'json', got '" + c.format + "'");
        if (c.input.empty()) throw DesignError("no input file given (--input)");
        if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw DesignError("alpha must lie in (0, 1)");
        const Method method = parse_method(c.method);
        CorrectOptions opts;
        opts.internal = parse_internal(c.internal_estimator);
        const MeasurementSpec spec = resolve_spec(c);
        check_compatibility(spec, method);
        const Dataset d = load_csv(c.input, c.na);

        const CorrectedFit fit = correct(d, spec, method, opts);
        std::optional<BootSummary> boot;
        if (c.B > 0)
            boot = stratified_bootstrap(d, spec, method, c.B, resolve_seed(c), c.alpha, c.workers, opts);
        const json report = build_report(c, spec, fit, boot, d.n_rows());
        if (c.format == "json") out << report.dump(2) << '\n';
        else out << render_text(report);
        return 0;
    } catch (const Error& e) {
        write_error(e, c.format, out, err);
        return e.exit_code();
    }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Measurement error correction for linear regression"};
    app.require_subcommand(1);

    // correct
    auto* cor = app.add_subcommand("correct", "Correct a linear model for measurement error");
    std::string config_path, covariates, replicates, ext_coef, ext_vcov;
    RunConfig flags;
    std::uint64_t seed = 0;
    cor->add_option("--config", config_path, "JSON run configuration (flags override it)");
    cor->add_option("--input", flags.input, "Study data CSV");
    cor->add_option("--na", flags.na, "Missing-value token");
    cor->add_option("--error-in", flags.error_in, "covariate or outcome");
    cor->add_option("--outcome", flags.outcome, "Outcome column (covariate error)");
    cor->add_option("--covariates", covariates, "Comma-separated covariates (outcome error: exposure first)");
    cor->add_option("--substitute", flags.substitute, "Error-prone column");
    cor->add_option("--reference", flags.reference, "Error-free reference column");
    cor->add_option("--replicates", replicates, "Comma-separated replicate columns");
    cor->add_option("--design", flags.design, "Replicate columns form a 'replicates' or 'calibration' study");
    cor->add_option("--differential-by", flags.differential_by, "Binary exposure for differential outcome error");
    cor->add_option("--external-coef", ext_coef, "Comma-separated external model coefficients (regression order)");
    cor->add_option("--external-vcov", ext_vcov, "Comma-separated row-major vcov of the external coefficients");
    cor->add_option("--external-input", flags.external_input, "External validation CSV to fit the model on");
    cor->add_option("--random-variance", flags.random_variance, "Assumed random error variance of the substitute");
    cor->add_option("--method", flags.method, "standard, valregcal, efficient or mle");
    cor->add_option("--internal-estimator", flags.internal_estimator, "rc or mle (efficient RC, calibration study)");
    cor->add_option("--B", flags.B, "Bootstrap replicates (0 = none)");
    auto* seed_opt = cor->add_option("--seed", seed, "Bootstrap seed (fallback: ERRCAL_SEED)");
    cor->add_option("--alpha", flags.alpha, "Tail probability of the intervals");
    cor->add_flag("--fieller", flags.fieller, "Add Fieller intervals");
    cor->add_flag("--zerovar", flags.zerovar, "Add zero-variance standard errors and intervals");
    cor->add_option("--format", flags.format, "text or json");
    cor->add_option("--workers", flags.workers, "Bootstrap worker threads (0 = default)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a study with known parameters");
    std::string sim_config, sim_design = "internal-covariate", sim_output, sim_truth;
    std::uint64_t sim_seed = 0;
    std::size_t sim_n = 0, sim_nsub = 0, sim_m = 0;
    sim->add_option("--config", sim_config, "JSON scenario");
    auto* sim_design_opt = sim->add_option("--design", sim_design, "Study design");
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "Seed");
    auto* sim_n_opt = sim->add_option("--n", sim_n, "Rows");
    auto* sim_nsub_opt = sim->add_option("--n-sub", sim_nsub, "Rows in the internal subset");
    auto* sim_m_opt = sim->add_option("--m", sim_m, "Replicates");
    sim->add_option("--output", sim_output, "Output CSV")->required();
    sim->add_option("--truth", sim_truth, "Ground-truth JSON (default: <output>.truth.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::design);
    }

    if (cor->parsed()) {
        RunConfig c;
        try {
            if (!config_path.empty()) {
                json j = read_json_file(config_path);
                if (j.contains("config") && j.at("config").is_object()) {
                    // A simulate sidecar: input is relative to the sidecar's directory.
                    json inner = j.at("config");
                    const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
                    if (inner.contains("input") && inner.at("input").is_string())
                        inner["input"] = (base / inner.at("input").get<std::string>()).string();
                    j = inner;
                }
                from_json(j, c);
            }
        } catch (const Error& e) {
            write_error(e, flags.format, out, err);
            return e.exit_code();
        }
        auto was_given = [&](const std::string& name) { return cor->get_option(name)->count() > 0; };
        try {
            if (was_given("--input")) c.input = flags.input;
            if (was_given("--na")) c.na = flags.na;
            if (was_given("--error-in")) c.error_in = flags.error_in;
            if (was_given("--outcome")) c.outcome = flags.outcome;
            if (was_given("--covariates")) c.covariates = split_list(covariates);
            if (was_given("--substitute")) c.substitute = flags.substitute;
            if (was_given("--reference")) c.reference = flags.reference;
            if (was_given("--replicates")) c.replicates = split_list(replicates);
            if (was_given("--design")) c.design = flags.design;
            if (was_given("--differential-by")) c.differential_by = flags.differential_by;
            if (was_given("--external-coef")) c.external_coef = split_numbers(ext_coef, "--external-coef");
            if (was_given("--external-vcov")) c.external_vcov = split_numbers(ext_vcov, "--external-vcov");
            if (was_given("--external-input")) c.external_input = flags.external_input;
            if (was_given("--random-variance")) c.random_variance = flags.random_variance;
            if (was_given("--method")) c.method = flags.method;
            if (was_given("--internal-estimator")) c.internal_estimator = flags.internal_estimator;
            if (was_given("--B")) c.B = flags.B;
            if (seed_opt->count() > 0) c.seed = seed;
            if (was_given("--alpha")) c.alpha = flags.alpha;
            if (was_given("--fieller")) c.fieller = flags.fieller;
            if (was_given("--zerovar")) c.zerovar = flags.zerovar;
            if (was_given("--format")) c.format = flags.format;
            if (was_given("--workers")) c.workers = flags.workers;
        } catch (const Error& e) {
            write_error(e, c.format, out, err);
            return e.exit_code();
        }
        return run_correct(c, out, err);
    }

    try {
        Scenario s = Scenario::preset(parse_sim_design(sim_design));
        if (!sim_config.empty()) {
            const json j = read_json_file(sim_config);
            try {
                from_json(j, s);
            } catch (const json::exception& e) {
                throw DesignError(std::string("scenario: ") + e.what());
            }
            if (sim_design_opt->count() > 0) {
                json merged = j;
                merged["design"] = sim_design;
                from_json(merged, s);
            }
        }
        if (sim_seed_opt->count() > 0) s.seed = sim_seed;
        if (sim_n_opt->count() > 0) {
            // The subset follows n when it spans the whole study, else it is capped at n.
            s.n_sub = s.n_sub == s.n ? sim_n : std::min(s.n_sub, sim_n);
            s.n = sim_n;
        }
        if (sim_nsub_opt->count() > 0) s.n_sub = sim_nsub;
        if (sim_m_opt->count() > 0) s.m = sim_m;
        return run_simulate(s, sim_output, sim_truth, out);
    } catch (const Error& e) {
        write_error(e, "text", out, err);
        return e.exit_code();
    }
}

} // namespace errcal
