// Acceptance suite: one PASS/FAIL line per criterion. Every simulation seed is
// fixed in advance; the exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "errcal/bootstrap.hpp"
#include "errcal/cli.hpp"
#include "errcal/correct.hpp"
#include "errcal/error.hpp"
#include "errcal/simulate.hpp"

using namespace errcal;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Accumulates the zerovar <= delta comparisons made by other criteria (criterion 5).
struct ZerovarLedger {
    std::size_t fits = 0;
    std::size_t violations = 0;
    void record(const CorrectedFit& f) {
        if (!f.vcov_delta || !f.vcov_zerovar) return;
        ++fits;
        for (Eigen::Index j = 0; j < f.coef.size(); ++j)
            if (std::sqrt((*f.vcov_zerovar)(j, j)) > std::sqrt((*f.vcov_delta)(j, j)) * (1.0 + 1e-12)) {
                ++violations;
                break;
            }
    }
};

ZerovarLedger g_zerovar;

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

double relative(double a, double b, double floor = 1e-3) { return std::abs(a - b) / std::max(std::abs(b), floor); }

double max_relative(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, relative(a.reshaped()(i), b.reshaped()(i)));
    return worst;
}

LinearFit fit_with(const Eigen::VectorXd& coef) {
    LinearFit f;
    f.coef = coef;
    f.vcov = 0.01 * Eigen::MatrixXd::Identity(coef.size(), coef.size());
    f.n = 100;
    f.dof = 100 - coef.size();
    return f;
}

Scenario univariable_icvs() {
    Scenario s = Scenario::preset(SimDesign::internal_covariate);
    s.beta_z.resize(0);
    s.z_mean.resize(0);
    s.z_var.resize(0);
    s.gamma.resize(0);
    return s;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> n;
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index k = rep % 4;
        Eigen::VectorXd b(2 + k);
        for (auto& v : b) v = n(rng);
        const LinearFit f = fit_with(b);
        const CalibrationMatrix lam = CalibrationMatrix::from_parameters(
            Eigen::VectorXd::Unit(2 + k, 0), Eigen::MatrixXd::Zero(2 + k, 2 + k), CalibrationSource::internal);
        const CorrectedFit rc = standard_rc(f, lam);
        const CorrectedFit mm = standard_mm(f, ErrorModelMatrix::non_differential(0, 1, k, Eigen::MatrixXd::Zero(2, 2)));
        worst = std::max({worst, (rc.coef - b).cwiseAbs().maxCoeff(), (mm.coef - b).cwiseAbs().maxCoeff(),
                          (*rc.vcov_delta - f.vcov).cwiseAbs().maxCoeff()});
        if (k == 0) {
            const CorrectedFit d = standard_mm(f, ErrorModelMatrix::differential_arms(0, 0, 1, 1, std::nullopt));
            worst = std::max(worst, (d.coef - b).cwiseAbs().maxCoeff());
        }
    }
    return {worst <= 1e-14, "max |corrected - naive| = " + std::to_string(worst) + " over 100 identity fits"};
}

Outcome criterion2() {
    // Scalar law on arbitrary inputs.
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(-2.0, 2.0), l(0.1, 1.5);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const double b = u(rng), lam = l(rng), b0 = u(rng);
        const CorrectedFit c = standard_rc(fit_with(Eigen::Vector2d(b, b0)),
                                           CalibrationMatrix::from_parameters(Eigen::Vector2d(lam, 0.0), std::nullopt,
                                                                              CalibrationSource::external));
        worst = std::max(worst, std::abs(c.coef(0) - b / lam) / std::max(1.0, std::abs(b / lam)));
    }
    // Attenuation of the naive estimate in univariable simulations.
    Scenario s = univariable_icvs();
    std::size_t attenuated = 0;
    std::vector<double> naive;
    double attenuation = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        s.seed = 20000 + seed;
        const GeneratedStudy g = generate(s);
        attenuation = *g.truth.attenuation;
        const LinearFit f = naive_fit(g.data, g.spec);
        naive.push_back(f.coef(0));
        if (f.coef(0) < s.beta_x) ++attenuated;
    }
    const bool pass = worst <= 1e-12 && attenuated >= 195;
    return {pass, "scalar law max rel err " + std::to_string(worst) + "; naive attenuated in " +
                      std::to_string(attenuated) + "/200 runs (mean naive " + fixed(oracle::mean(naive)) +
                      " vs lambda*beta = " + fixed(attenuation * s.beta_x) + ")"};
}

struct DesignRun {
    std::string name;
    SimDesign design;
    Method method;
};

struct DesignSummary {
    Eigen::VectorXd truth;
    std::vector<double> mean;
    std::vector<double> mc_se;
    std::size_t errors = 0;
};

DesignSummary run_design(const DesignRun& r, std::uint64_t seed_base, std::size_t seeds) {
    Scenario s = Scenario::preset(r.design);
    s.n = 1000;
    s.n_sub = 250;
    s.m = 3;
    std::vector<std::vector<double>> est;
    DesignSummary out;
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
        s.seed = seed_base + seed;
        const GeneratedStudy g = generate(s);
        out.truth = g.truth.coef;
        try {
            const CorrectedFit f = correct(g.data, g.spec, r.method);
            g_zerovar.record(f);
            if (est.empty()) est.resize(static_cast<std::size_t>(f.coef.size()));
            for (Eigen::Index j = 0; j < f.coef.size(); ++j) est[static_cast<std::size_t>(j)].push_back(f.coef(j));
        } catch (const Error&) {
            ++out.errors;
        }
    }
    for (const auto& v : est) {
        out.mean.push_back(oracle::mean(v));
        out.mc_se.push_back(std::sqrt(oracle::variance(v) / static_cast<double>(v.size())));
    }
    return out;
}

Outcome criterion3() {
    const std::vector<DesignRun> runs{
        {"icvs/standard", SimDesign::internal_covariate, Method::standard},
        {"iovs/standard", SimDesign::internal_outcome, Method::standard},
        {"iovs_diff/standard", SimDesign::internal_outcome_differential, Method::standard},
        {"rs/standard", SimDesign::replicates, Method::standard},
        {"rs/mle", SimDesign::replicates, Method::mle},
        {"ccs/standard", SimDesign::calibration_covariate, Method::standard},
        {"ecvs/standard", SimDesign::external_covariate, Method::standard},
        {"eovs/standard", SimDesign::external_outcome, Method::standard},
    };
    bool all = true;
    std::ostringstream detail;
    // beta_X and every beta_Z (the intercept is not part of the criterion).
    auto describe = [&](const DesignSummary& d) {
        bool ok = d.errors == 0;
        for (Eigen::Index j = 0; j < d.truth.size(); ++j) {
            if (j == 1) continue;
            const auto u = static_cast<std::size_t>(j);
            const double z = (d.mean[u] - d.truth(j)) / d.mc_se[u];
            ok = ok && std::abs(z) <= 3.0;
            detail << " b" << (j == 0 ? std::string("X") : "Z" + std::to_string(j - 1)) << "=" << fixed(d.mean[u])
                   << " (truth " << fixed(d.truth(j), 2) << ", z=" << fixed(z, 2) << ")";
        }
        if (d.errors) detail << " errors=" << d.errors;
        return ok;
    };
    for (const DesignRun& r : runs) {
        detail << "\n    " << r.name << ":";
        const bool ok = describe(run_design(r, 30000, 200));
        detail << (ok ? " ok" : " OUT OF TOLERANCE");
        if (!ok) {
            // Diagnostic only (does not change the verdict): a fresh, larger seed block
            // separates a Monte Carlo excursion from a systematic bias.
            detail << "\n      follow-up, 4000 fresh seeds:";
            describe(run_design(r, 3000000, 4000));
        }
        all = all && ok;
    }
    return {all, "mean corrected estimates over 200 seeds, within 3 MC SE of truth:" + detail.str()};
}

Outcome criterion4() {
    Scenario s = Scenario::preset(SimDesign::internal_covariate);
    s.seed = 20210120;
    const GeneratedStudy g = generate(s);
    const CorrectedFit f = correct(g.data, g.spec, Method::standard);
    g_zerovar.record(f);
    const BootSummary b = stratified_bootstrap(g.data, g.spec, Method::standard, 999, 4040, 0.05);
    const double delta = std::sqrt((*f.vcov_delta)(0, 0)), boot = b.se(0);
    const double diff = std::abs(boot - delta) / delta;
    return {diff <= 0.15 && b.successes() == 999,
            "delta SE " + fixed(delta, 6) + ", bootstrap SE " + fixed(boot, 6) + " (" + std::to_string(b.successes()) +
                " replicates), relative difference " + fixed(100 * diff, 1) + "%"};
}

Outcome criterion6() {
    // (a) The unbounded flag on arbitrary inputs.
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(-1.0, 1.0), sd(0.01, 0.6);
    const double z = normal_critical(0.05);
    std::size_t mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const double num = u(rng), den = u(rng), s_den = sd(rng), s_num = sd(rng);
        const bool bounded = fieller_interval(num, s_num * s_num, den, s_den * s_den, 0.05).bounded;
        if (bounded == (std::abs(den) <= z * s_den)) ++mismatches;
    }
    // (b) Coverage over 500 seeded internal-validation studies.
    Scenario s = Scenario::preset(SimDesign::internal_covariate);
    const std::size_t reps = 500, B = 999;
    std::size_t cov_delta = 0, cov_fieller = 0, cov_boot = 0, boot_missing = 0, flag_mismatch = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        s.seed = 60000 + r;
        const GeneratedStudy g = generate(s);
        const CorrectedFit f = correct(g.data, g.spec, Method::standard);
        g_zerovar.record(f);
        const double bx = s.beta_x;
        const WaldInterval w = wald_intervals(f.coef, *f.vcov_delta, 0.05)[0];
        if (w.lower <= bx && bx <= w.upper) ++cov_delta;
        const FiellerInterval fi = *fieller_intervals(f, 0.05)[0];
        const double lam = f.lambda->slope(), se_lam = std::sqrt((*f.lambda->param_vcov)(0, 0));
        if (fi.bounded == (std::abs(lam) <= z * se_lam)) ++flag_mismatch;
        if (fi.bounded && fi.lower <= bx && bx <= fi.upper) ++cov_fieller;
        const BootSummary b = stratified_bootstrap(g.data, g.spec, Method::standard, B, 70000 + r, 0.05);
        if (!b.ci) {
            ++boot_missing;
            continue;
        }
        if ((*b.ci)(0, 0) <= bx && bx <= (*b.ci)(0, 1)) ++cov_boot;
    }
    auto pct = [&](std::size_t c) { return 100.0 * static_cast<double>(c) / static_cast<double>(reps); };
    auto in_band = [&](std::size_t c) { return pct(c) >= 93.0 && pct(c) <= 97.0; };
    const bool pass = mismatches == 0 && flag_mismatch == 0 && boot_missing == 0 && in_band(cov_delta) &&
                      in_band(cov_fieller) && in_band(cov_boot);
    return {pass, "flag mismatches " + std::to_string(mismatches) + "/10000 random + " +
                      std::to_string(flag_mismatch) + "/500 simulated; coverage over 500 runs (B=" + std::to_string(B) +
                      "): delta " + fixed(pct(cov_delta), 1) + "%, Fieller " + fixed(pct(cov_fieller), 1) +
                      "%, bootstrap " + fixed(pct(cov_boot), 1) + "%"};
}

Outcome criterion5() {
    // Also check a spread of designs, including outcome error and external models.
    for (SimDesign d : all_sim_designs()) {
        Scenario s = Scenario::preset(d);
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            s.seed = 50000 + seed;
            const GeneratedStudy g = generate(s);
            g_zerovar.record(correct(g.data, g.spec, Method::standard));
        }
    }
    return {g_zerovar.violations == 0 && g_zerovar.fits > 0,
            std::to_string(g_zerovar.violations) + " violations over " + std::to_string(g_zerovar.fits) +
                " fits with both vcovs (criteria 3, 4, 6 plus 20 seeds of every design)"};
}

Outcome criterion7() {
    Scenario s = Scenario::preset(SimDesign::replicates);
    s.seed = 7007;
    const GeneratedStudy g = generate(s);
    const Dataset rows = complete_cases(g.data, std::vector<std::string>{"X_star_1", "X_star_2", "X_star_3"});
    MeasurementSpec perm = g.spec;
    perm.substitute = "X_star_3";
    perm.replicates = {"X_star_1", "X_star_2"};
    const double rc_a = correct(rows, g.spec, Method::standard).coef(0);
    const double rc_b = correct(rows, perm, Method::standard).coef(0);
    const double ml_a = correct(rows, g.spec, Method::mle).coef(0);
    const double ml_b = correct(rows, perm, Method::mle).coef(0);
    // Permuting only the non-substitute replicates leaves the replicate mean (and RC) unchanged too.
    MeasurementSpec swap = g.spec;
    swap.replicates = {"X_star_3", "X_star_2"};
    const double ml_c = correct(rows, swap, Method::mle).coef(0);
    const bool pass = std::abs(rc_a - rc_b) > 1e-6 && std::abs(ml_a - ml_b) <= 1e-10 && std::abs(ml_a - ml_c) <= 1e-10;
    std::ostringstream d;
    d.precision(3);
    d << "standard RC " << fixed(rc_a, 6) << " vs " << fixed(rc_b, 6) << " (diff " << std::scientific
      << std::abs(rc_a - rc_b) << "); ML diff " << std::abs(ml_a - ml_b) << ", " << std::abs(ml_a - ml_c);
    return {pass, d.str()};
}

Outcome criterion8() {
    std::mt19937_64 rng(808);
    std::normal_distribution<double> n;
    double est_err = 0.0, cov_err = 0.0;
    std::size_t diag_violations = 0;
    for (int rep = 0; rep < 200; ++rep) {
        auto spd = [&] {
            Eigen::Matrix3d a;
            for (auto& x : a.reshaped()) x = n(rng);
            return Eigen::Matrix3d(a * a.transpose() + 0.05 * Eigen::Matrix3d::Identity());
        };
        const Eigen::Matrix3d va = spd(), vb = spd();
        const Eigen::Vector3d a(n(rng), n(rng), n(rng)), b(n(rng), n(rng), n(rng));
        const PooledEstimate p = efficient_pool(a, va, b, vb);
        const auto [est, cov] = oracle::stacked_gls(a, va, b, vb);
        est_err = std::max(est_err, (p.estimate - est).cwiseAbs().maxCoeff());
        cov_err = std::max(cov_err, (p.vcov - cov).cwiseAbs().maxCoeff());
        for (int j = 0; j < 3; ++j)
            if (p.vcov(j, j) > std::min(va(j, j), vb(j, j)) * (1.0 + 1e-12)) ++diag_violations;
    }
    return {est_err <= 1e-10 && cov_err <= 1e-10 && diag_violations == 0,
            "200 random instances: max |est - GLS| " + std::to_string(est_err) + ", max |vcov - GLS| " +
                std::to_string(cov_err) + ", diagonal violations " + std::to_string(diag_violations)};
}

Outcome criterion9() {
    std::mt19937_64 rng(909);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.3, 2.0);
    double rc = 0.0, mm = 0.0, diff = 0.0, ml = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index k = rep % 3;
        Eigen::VectorXd naive(2 + k), params(2 + k);
        for (auto& v : naive) v = u(rng);
        for (auto& v : params) v = u(rng);
        params(0) = pos(rng) * (u(rng) < 0 ? -1.0 : 1.0);
        {
            const auto g = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& t) {
                return apply_calibration(b, CalibrationMatrix::from_parameters(t, std::nullopt, CalibrationSource::internal));
            };
            const CorrectionJacobian j =
                rc_jacobian(naive, CalibrationMatrix::from_parameters(params, std::nullopt, CalibrationSource::internal));
            rc = std::max({rc, max_relative(j.wrt_naive, oracle::jacobian([&](const Eigen::VectorXd& b) { return g(b, params); }, naive)),
                           max_relative(j.wrt_params, oracle::jacobian([&](const Eigen::VectorXd& t) { return g(naive, t); }, params))});
        }
        {
            const Eigen::Vector2d th(u(rng), pos(rng));
            const auto g = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& t) {
                return apply_error_model(b, ErrorModelMatrix::non_differential(t(0), t(1), k, std::nullopt));
            };
            const CorrectionJacobian j = mm_jacobian(naive, ErrorModelMatrix::non_differential(th(0), th(1), k, std::nullopt));
            mm = std::max({mm, max_relative(j.wrt_naive, oracle::jacobian([&](const Eigen::VectorXd& b) { return g(b, th); }, naive)),
                           max_relative(j.wrt_params, oracle::jacobian([&](const Eigen::VectorXd& t) { return g(naive, t); }, th))});
        }
        {
            const Eigen::Vector4d th(u(rng), u(rng), pos(rng), pos(rng));
            const Eigen::Vector2d b2 = naive.head(2);
            const auto g = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& t) {
                return apply_error_model(b, ErrorModelMatrix::differential_arms(t(0), t(1), t(2), t(3), std::nullopt));
            };
            const CorrectionJacobian j =
                mm_jacobian(b2, ErrorModelMatrix::differential_arms(th(0), th(1), th(2), th(3), std::nullopt));
            diff = std::max({diff, max_relative(j.wrt_naive, oracle::jacobian([&](const Eigen::VectorXd& b) { return g(b, th); }, b2)),
                             max_relative(j.wrt_params, oracle::jacobian([&](const Eigen::VectorXd& t) { return g(b2, t); }, th))});
        }
        {
            MlParameters p;
            p.delta0 = u(rng);
            p.delta_z = Eigen::VectorXd::NullaryExpr(k, [&] { return u(rng); });
            p.sigma2_y_given_z = pos(rng);
            p.kappa0 = u(rng);
            p.kappa_y = u(rng);
            p.kappa_z = Eigen::VectorXd::NullaryExpr(k, [&] { return u(rng); });
            p.sigma2_x_given_yz = pos(rng);
            const Eigen::MatrixXd fd = oracle::jacobian(
                [&](const Eigen::VectorXd& zeta) { return MlParameters::from_reduced(zeta, k).outcome_coefficients(); },
                p.reduced());
            ml = std::max(ml, max_relative(ml_jacobian(p), fd));
        }
    }
    std::ostringstream d;
    d.precision(2);
    d << std::scientific << "max relative error over 50 points: RC " << rc << ", MM " << mm << ", differential MM "
      << diff << ", ML " << ml;
    return {std::max({rc, mm, diff, ml}) <= 1e-4, d.str()};
}

Outcome criterion10() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(ERRCAL_ACCEPTANCE_TMPDIR);
    fs::create_directories(dir);
    const std::string csv = (dir / "determinism.csv").string();
    auto call = [](std::vector<std::string> args) {
        args.insert(args.begin(), "errcal");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
        return std::make_pair(code, out.str());
    };
    if (call({"simulate", "--design", "internal-covariate", "--seed", "1010", "--output", csv}).first != 0)
        return {false, "simulate failed"};
    bool ok = true;
    std::ostringstream d;
    for (const char* method : {"standard", "efficient", "valregcal"}) {
        std::vector<std::string> args{"correct", "--config", csv + ".truth.json", "--method", method, "--B", "200",
                                      "--seed", "99", "--fieller", "--zerovar", "--format", "json", "--workers"};
        std::vector<std::pair<int, std::string>> runs;
        for (const char* w : {"1", "4", "4", "1"}) {
            auto a = args;
            a.push_back(w);
            runs.push_back(call(a));
        }
        bool same = runs[0].first == 0;
        for (const auto& r : runs) same = same && r == runs[0];
        d << method << (same ? " identical" : " DIFFERENT") << " (" << runs[0].second.size() << " bytes); ";
        ok = ok && same;
    }
    return {ok, d.str() + "workers {1, 4}, two runs each"};
}

} // namespace

int main() {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {6, criterion6},
        {5, criterion5}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10},
    };
    std::vector<std::pair<int, std::string>> lines;
    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failures;
        std::ostringstream line;
        line << "Criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " [" << fixed(secs, 2) << " s] "
             << o.detail;
        lines.emplace_back(id, line.str());
        std::cerr << line.str() << std::endl; // progress while the long criteria run
    }
    // Criterion 5 runs after 6 so it can audit every fit made there; print in numeric order.
    std::sort(lines.begin(), lines.end());
    for (const auto& [id, l] : lines) std::cout << l << '\n';
    std::cout << (failures == 0 ? "All criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
