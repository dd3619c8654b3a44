#include "errcal/simulate.hpp"

#include <cmath>
#include <random>

#include "errcal/error.hpp"
#include "errcal/memodel.hpp"

namespace errcal {

namespace {

struct DesignName {
    SimDesign design;
    std::string_view name;
};

constexpr DesignName kDesignNames[] = {
    {SimDesign::internal_covariate, "internal-covariate"},
    {SimDesign::internal_outcome, "internal-outcome"},
    {SimDesign::internal_outcome_differential, "internal-outcome-differential"},
    {SimDesign::replicates, "replicates"},
    {SimDesign::calibration_covariate, "calibration-covariate"},
    {SimDesign::calibration_outcome, "calibration-outcome"},
    {SimDesign::external_covariate, "external-covariate"},
    {SimDesign::external_outcome, "external-outcome"},
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// One draw of the error-free variables.
struct Latent {
    Eigen::VectorXd z;
    double x = 0.0;
    double y = 0.0;
};

class Generator {
public:
    explicit Generator(const Scenario& s) : s_(s), rng_(s.seed) {}

    double normal(double var) { return var > 0.0 ? std::sqrt(var) * std_normal_(rng_) : 0.0; }

    Latent latent() {
        Latent l;
        l.z.resize(s_.beta_z.size());
        for (Eigen::Index j = 0; j < l.z.size(); ++j) l.z(j) = s_.z_mean(j) + normal(s_.z_var(j));
        if (s_.design == SimDesign::internal_outcome_differential)
            l.x = std::bernoulli_distribution(s_.p_exposed)(rng_) ? 1.0 : 0.0;
        else
            l.x = s_.gamma.dot(l.z) + normal(s_.var_x_given_z);
        l.y = s_.beta_0 + s_.beta_x * l.x + s_.beta_z.dot(l.z) + normal(s_.sigma2);
        return l;
    }

    // Systematic substitute of the error-prone variable.
    double substitute(const Latent& l) {
        if (s_.design == SimDesign::internal_outcome_differential) {
            const bool exposed = l.x == 1.0;
            return (exposed ? s_.theta01 : s_.theta00) + (exposed ? s_.theta11 : s_.theta10) * l.y +
                   normal(s_.tau2);
        }
        const double truth = s_.outcome_error() ? l.y : l.x;
        return s_.theta0 + s_.theta1 * truth + normal(s_.tau2);
    }

    double replicate(const Latent& l) { return (s_.outcome_error() ? l.y : l.x) + normal(s_.tau2); }

private:
    const Scenario& s_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> std_normal_;
};

// Column builder with an observed mask.
struct Column {
    std::string name;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;

    void push(double v, bool obs = true) {
        values.push_back(v);
        observed.push_back(obs ? 1 : 0);
    }
};

void add(Dataset& d, Column& c) { d.add_column(c.name, std::move(c.values), std::move(c.observed)); }

std::vector<std::string> replicate_names(const std::string& stem, std::size_t m) {
    std::vector<std::string> out;
    for (std::size_t j = 1; j <= m; ++j) out.push_back(stem + "_" + std::to_string(j));
    return out;
}

} // namespace

std::string_view to_string(SimDesign d) {
    for (const auto& e : kDesignNames)
        if (e.design == d) return e.name;
    return "unknown";
}

SimDesign parse_sim_design(std::string_view name) {
    for (const auto& e : kDesignNames)
        if (e.name == name) return e.design;
    throw DesignError("unknown simulation design '" + std::string(name) + "'");
}

const std::vector<SimDesign>& all_sim_designs() {
    static const std::vector<SimDesign> designs = [] {
        std::vector<SimDesign> v;
        for (const auto& e : kDesignNames) v.push_back(e.design);
        return v;
    }();
    return designs;
}

bool Scenario::outcome_error() const {
    return design == SimDesign::internal_outcome || design == SimDesign::internal_outcome_differential ||
           design == SimDesign::calibration_outcome || design == SimDesign::external_outcome;
}

std::vector<std::string> Scenario::z_names() const {
    if (k() == 1) return {"Z"};
    std::vector<std::string> out;
    for (std::size_t j = 1; j <= k(); ++j) out.push_back("Z" + std::to_string(j));
    return out;
}

void Scenario::validate() const {
    auto fail = [](const std::string& why) { throw DesignError("scenario: " + why); };
    if (n < 1) fail("n must be positive");
    if (n_sub > n) fail("n_sub must not exceed n");
    if (m < 1) fail("m must be at least 1");
    if (design == SimDesign::replicates && m < 2) fail("a replicates study needs m >= 2");
    if ((design == SimDesign::external_covariate || design == SimDesign::external_outcome) && n_ext < 3)
        fail("external validation set needs at least 3 rows");
    const Eigen::Index kk = beta_z.size();
    if (z_mean.size() != kk || z_var.size() != kk || gamma.size() != kk)
        fail("beta_z, z_mean, z_var and gamma must have the same length");
    if (design == SimDesign::internal_outcome_differential && kk != 0)
        fail("differential outcome error is univariable (no Z)");
    if (sigma2 < 0.0 || var_x_given_z < 0.0 || tau2 < 0.0 || (z_var.array() < 0.0).any())
        fail("infeasible variances (all variances must be nonnegative)");
    if (!(p_exposed >= 0.0 && p_exposed <= 1.0)) fail("p_exposed must lie in [0, 1]");
}

Scenario Scenario::preset(SimDesign d) {
    Scenario s;
    s.design = d;
    switch (d) {
    case SimDesign::internal_covariate: break;
    case SimDesign::internal_outcome: s.theta1 = 0.5; break;
    case SimDesign::internal_outcome_differential:
        s.beta_z.resize(0);
        s.z_mean.resize(0);
        s.z_var.resize(0);
        s.gamma.resize(0);
        break;
    case SimDesign::replicates:
        s.n_sub = s.n;
        s.beta_z = Eigen::Vector2d(2.0, 1.0);
        s.z_mean = Eigen::VectorXd::Zero(2);
        s.z_var = Eigen::VectorXd::Ones(2);
        s.gamma = Eigen::VectorXd::Constant(2, 0.25);
        break;
    case SimDesign::calibration_covariate:
        s.n_sub = 500;
        s.m = 2;
        s.theta1 = 2.0;
        break;
    case SimDesign::calibration_outcome:
        s.n_sub = 500;
        s.m = 2;
        s.theta1 = 0.5;
        break;
    case SimDesign::external_covariate: break;
    case SimDesign::external_outcome: s.theta1 = 0.5; break;
    }
    return s;
}

void to_json(nlohmann::json& j, const Scenario& s) {
    j = nlohmann::json{{"design", std::string(to_string(s.design))},
                       {"n", s.n},
                       {"n_sub", s.n_sub},
                       {"m", s.m},
                       {"n_ext", s.n_ext},
                       {"beta_x", s.beta_x},
                       {"beta_0", s.beta_0},
                       {"beta_z", to_std(s.beta_z)},
                       {"sigma2", s.sigma2},
                       {"z_mean", to_std(s.z_mean)},
                       {"z_var", to_std(s.z_var)},
                       {"gamma", to_std(s.gamma)},
                       {"var_x_given_z", s.var_x_given_z},
                       {"p_exposed", s.p_exposed},
                       {"tau2", s.tau2},
                       {"theta0", s.theta0},
                       {"theta1", s.theta1},
                       {"theta00", s.theta00},
                       {"theta01", s.theta01},
                       {"theta10", s.theta10},
                       {"theta11", s.theta11},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
    s = Scenario::preset(parse_sim_design(j.value("design", std::string(to_string(s.design)))));
    auto num = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    auto vec = [&](const char* key, Eigen::VectorXd& field) {
        if (j.contains(key)) field = to_eigen(j.at(key).get<std::vector<double>>());
    };
    num("n", s.n);
    num("n_sub", s.n_sub);
    num("m", s.m);
    num("n_ext", s.n_ext);
    num("beta_x", s.beta_x);
    num("beta_0", s.beta_0);
    vec("beta_z", s.beta_z);
    num("sigma2", s.sigma2);
    vec("z_mean", s.z_mean);
    vec("z_var", s.z_var);
    vec("gamma", s.gamma);
    num("var_x_given_z", s.var_x_given_z);
    num("p_exposed", s.p_exposed);
    num("tau2", s.tau2);
    num("theta0", s.theta0);
    num("theta1", s.theta1);
    num("theta00", s.theta00);
    num("theta01", s.theta01);
    num("theta10", s.theta10);
    num("theta11", s.theta11);
    num("seed", s.seed);
}

nlohmann::json to_json(const GroundTruth& t) {
    nlohmann::json j{{"terms", t.terms}, {"coef", to_std(t.coef)}};
    j["attenuation"] = t.attenuation ? nlohmann::json(*t.attenuation) : nlohmann::json(nullptr);
    return j;
}

GeneratedStudy generate(const Scenario& s) {
    s.validate();
    Generator gen(s);
    const auto zn = s.z_names();
    const std::size_t k = s.k();
    const bool outcome = s.outcome_error();
    const std::string reps_stem = outcome ? "Y_star" : "X_star";
    const auto reps = replicate_names(reps_stem, s.m);

    Column y{"Y", {}, {}}, x{"X", {}, {}}, sub{outcome ? "Y_star" : "X_star", {}, {}};
    std::vector<Column> z(k), rep(s.m);
    for (std::size_t j = 0; j < k; ++j) z[j].name = zn[j];
    for (std::size_t j = 0; j < s.m; ++j) rep[j].name = reps[j];

    for (std::size_t i = 0; i < s.n; ++i) {
        const Latent l = gen.latent();
        const bool in_sub = i < s.n_sub;
        for (std::size_t j = 0; j < k; ++j) z[j].push(l.z(static_cast<Eigen::Index>(j)));
        switch (s.design) {
        case SimDesign::internal_covariate:
            y.push(l.y);
            sub.push(gen.substitute(l));
            x.push(l.x, in_sub);
            break;
        case SimDesign::internal_outcome:
        case SimDesign::internal_outcome_differential:
            x.push(l.x);
            sub.push(gen.substitute(l));
            y.push(l.y, in_sub);
            break;
        case SimDesign::replicates:
            y.push(l.y);
            for (std::size_t j = 0; j < s.m; ++j) rep[j].push(gen.replicate(l), j == 0 || in_sub);
            break;
        case SimDesign::calibration_covariate:
            y.push(l.y);
            sub.push(gen.substitute(l));
            for (auto& r : rep) r.push(gen.replicate(l), in_sub);
            break;
        case SimDesign::calibration_outcome:
            x.push(l.x);
            sub.push(gen.substitute(l));
            for (auto& r : rep) r.push(gen.replicate(l), in_sub);
            break;
        case SimDesign::external_covariate:
            y.push(l.y);
            sub.push(gen.substitute(l));
            break;
        case SimDesign::external_outcome:
            x.push(l.x);
            sub.push(gen.substitute(l));
            break;
        }
    }

    GeneratedStudy out;
    MeasurementSpec& spec = out.spec;
    spec.error_in = outcome ? ErrorIn::outcome : ErrorIn::covariate;
    spec.substitute = sub.name;
    spec.outcome = "Y";
    spec.covariates = zn;
    if (outcome) spec.covariates.insert(spec.covariates.begin(), "X");

    Dataset& d = out.data;
    switch (s.design) {
    case SimDesign::internal_covariate:
        add(d, y);
        add(d, sub);
        add(d, x);
        spec.reference = "X";
        break;
    case SimDesign::internal_outcome:
    case SimDesign::internal_outcome_differential:
        add(d, sub);
        add(d, x);
        add(d, y);
        spec.reference = "Y";
        if (s.design == SimDesign::internal_outcome_differential) spec.differential_by = "X";
        break;
    case SimDesign::replicates:
        add(d, y);
        for (auto& r : rep) add(d, r);
        spec.substitute = reps.front();
        spec.replicates.assign(reps.begin() + 1, reps.end());
        break;
    case SimDesign::calibration_covariate:
        add(d, y);
        add(d, sub);
        for (auto& r : rep) add(d, r);
        spec.replicates = reps;
        spec.calibration = true;
        break;
    case SimDesign::calibration_outcome:
        add(d, sub);
        add(d, x);
        for (auto& r : rep) add(d, r);
        spec.replicates = reps;
        spec.calibration = true;
        break;
    case SimDesign::external_covariate:
        add(d, y);
        add(d, sub);
        break;
    case SimDesign::external_outcome:
        add(d, sub);
        add(d, x);
        break;
    }
    for (auto& c : z) add(d, c);

    if (s.design == SimDesign::external_covariate || s.design == SimDesign::external_outcome) {
        Column ex_ref{outcome ? "Y" : "X", {}, {}}, ex_sub{sub.name, {}, {}};
        std::vector<Column> ex_z(k);
        for (std::size_t j = 0; j < k; ++j) ex_z[j].name = zn[j];
        for (std::size_t i = 0; i < s.n_ext; ++i) {
            const Latent l = gen.latent();
            ex_ref.push(outcome ? l.y : l.x);
            ex_sub.push(gen.substitute(l));
            for (std::size_t j = 0; j < k; ++j) ex_z[j].push(l.z(static_cast<Eigen::Index>(j)));
        }
        Dataset ext;
        add(ext, ex_ref);
        add(ext, ex_sub);
        if (!outcome)
            for (auto& c : ex_z) add(ext, c);
        spec.external_model = outcome ? fit_external_error_model(ext, "Y", sub.name, std::nullopt)
                                      : fit_external_calibration(ext, "X", sub.name, zn);
        out.external = std::move(ext);
    }
    spec.validate();

    GroundTruth& t = out.truth;
    t.coef.resize(2 + static_cast<Eigen::Index>(k));
    t.coef(0) = s.beta_x;
    t.coef(1) = s.beta_0;
    t.coef.tail(static_cast<Eigen::Index>(k)) = s.beta_z;
    t.terms = {"X", "(Intercept)"};
    t.terms.insert(t.terms.end(), zn.begin(), zn.end());
    if (!outcome) {
        const double v = s.var_x_given_z;
        const double th1 = s.design == SimDesign::replicates ? 1.0 : s.theta1;
        const double denom = th1 * th1 * v + s.tau2;
        if (denom > 0.0) t.attenuation = th1 * v / denom;
    }
    return out;
}

} // namespace errcal
