#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "errcal/cli.hpp"
#include "errcal/error.hpp"

using namespace errcal;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "errcal");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path tmp(const std::string& name) {
    const fs::path dir = fs::path(ERRCAL_TEST_TMPDIR) / "cli";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string simulate(const std::string& design, const std::string& name, std::vector<std::string> extra = {}) {
    const fs::path out = tmp(name + ".csv");
    std::vector<std::string> args{"simulate", "--design", design, "--output", out.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const Run r = run(args);
    REQUIRE(r.code == 0);
    return out.string();
}

nlohmann::json json_run(std::vector<std::string> args) {
    args.insert(args.begin(), "correct");
    args.push_back("--format");
    args.push_back("json");
    const Run r = run(args);
    INFO(r.out << r.err);
    REQUIRE(r.code == 0);
    return nlohmann::json::parse(r.out);
}

} // namespace

TEST_CASE("simulate writes data and a sidecar") {
    const std::string csv = simulate("internal-covariate", "smoke", {"--n", "10", "--seed", "4"});
    const Dataset d = load_csv(csv);
    CHECK(d.n_rows() == 10);
    const nlohmann::json side = nlohmann::json::parse(slurp(csv + ".truth.json"));
    CHECK(side.at("truth").at("coef")[0] == 0.5);
    CHECK(side.at("scenario").at("seed") == 4);
    // Byte-identical on a second run.
    const std::string first = slurp(csv);
    simulate("internal-covariate", "smoke", {"--n", "10", "--seed", "4"});
    CHECK(slurp(csv) == first);
    const Dataset r = load_csv(simulate("replicates", "reps", {"--m", "3", "--n", "50"}));
    for (const char* c : {"X_star_1", "X_star_2", "X_star_3"}) CHECK(r.has_column(c));
}

TEST_CASE("correct from a sidecar config and from flags agree") {
    const std::string csv = simulate("internal-covariate", "icvs");
    const nlohmann::json a = json_run({"--config", csv + ".truth.json"});
    const nlohmann::json b = json_run({"--input", csv, "--outcome", "Y", "--substitute", "X_star", "--reference", "X",
                                       "--covariates", "Z"});
    CHECK(a.at("corrected") == b.at("corrected"));
    CHECK(a.at("meta").at("schema_version") == kReportSchemaVersion);
    for (const char* key : {"meta", "uncorrected", "corrected", "intervals", "warnings"}) CHECK(a.contains(key));
    CHECK_FALSE(a.contains("bootstrap"));
    CHECK(a.at("meta").at("rows_in_file") == 1000);
    // Intercept is listed first for display.
    CHECK(a.at("corrected").at("terms")[0] == "(Intercept)");
    const double bx = a.at("corrected").at("coef")[1];
    const double se = a.at("intervals").at("delta").at("se")[1];
    CHECK(std::abs(bx - 0.5) < 3.0 * se);
}

TEST_CASE("identity sensitivity reproduces the uncorrected fit") {
    const std::string csv = simulate("external-covariate", "ecvs");
    const nlohmann::json j = json_run({"--input", csv, "--outcome", "Y", "--substitute", "X_star", "--covariates", "Z",
                                       "--external-coef", "0,1,0"});
    CHECK(j.at("corrected").at("coef") == j.at("uncorrected").at("coef"));
    CHECK(j.at("intervals").at("delta").is_null());
    CHECK(j.at("intervals").contains("zerovar"));
}

TEST_CASE("exit codes and error objects") {
    const std::string csv = simulate("internal-covariate", "codes", {"--n", "100", "--n-sub", "40"});
    SUBCASE("mle with an internal design") {
        const Run r = run({"correct", "--input", csv, "--outcome", "Y", "--substitute", "X_star", "--reference", "X",
                           "--covariates", "Z", "--method", "mle", "--format", "json"});
        CHECK(r.code == 2);
        const nlohmann::json e = nlohmann::json::parse(r.out).at("error");
        CHECK(e.at("exit_code") == 2);
        CHECK(e.at("message").get<std::string>().find("mle") != std::string::npos);
    }
    SUBCASE("text mode writes to stderr") {
        const Run r = run({"correct", "--input", csv, "--outcome", "Y", "--substitute", "X_star", "--reference", "X",
                           "--method", "mle"});
        CHECK(r.code == 2);
        CHECK(r.out.empty());
        CHECK_FALSE(r.err.empty());
    }
    SUBCASE("unknown column is a data error") {
        const Run r = run({"correct", "--input", csv, "--outcome", "nope", "--substitute", "X_star", "--reference", "X"});
        CHECK(r.code == 3);
    }
    SUBCASE("singular calibration is a numerical error") {
        const Run r = run({"correct", "--input", csv, "--outcome", "Y", "--substitute", "X_star", "--covariates", "Z",
                           "--external-coef", "0,0,0"});
        CHECK(r.code == 4);
    }
    SUBCASE("missing file") {
        CHECK(run({"correct", "--input", tmp("absent.csv").string(), "--outcome", "Y", "--substitute", "X_star",
                   "--reference", "X"})
                  .code == 3);
    }
    SUBCASE("bad flags") {
        CHECK(run({"correct", "--no-such-flag"}).code == 2);
        CHECK(run({}).code == 2);
    }
}

TEST_CASE("reports are deterministic, including across worker counts") {
    const std::string csv = simulate("internal-covariate", "det", {"--n", "400", "--n-sub", "100"});
    const std::vector<std::string> base{"correct", "--input", csv, "--outcome", "Y", "--substitute", "X_star",
                                        "--reference", "X", "--covariates", "Z", "--B", "50", "--seed", "5",
                                        "--fieller", "--zerovar", "--format", "json"};
    auto with_workers = [&](const char* w) {
        auto a = base;
        a.push_back("--workers");
        a.push_back(w);
        return run(a);
    };
    const Run a = with_workers("1"), b = with_workers("4"), c = with_workers("4");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(b.out == c.out);
    const nlohmann::json j = nlohmann::json::parse(a.out);
    CHECK(j.at("bootstrap").at("B") == 50);
    CHECK(j.at("bootstrap").at("stratum_sizes") == nlohmann::json::array({100, 300}));
    CHECK(j.at("intervals").at("fieller").is_array());
}

TEST_CASE("seed falls back to the environment") {
    RunConfig c;
    ::setenv("ERRCAL_SEED", "77", 1);
    CHECK(resolve_seed(c) == 77);
    c.seed = 3;
    CHECK(resolve_seed(c) == 3);
    ::unsetenv("ERRCAL_SEED");
    c.seed.reset();
    CHECK(resolve_seed(c) == 1);
}

TEST_CASE("run configuration JSON") {
    RunConfig c;
    c.input = "x.csv";
    c.outcome = "Y";
    c.substitute = "X_star";
    c.covariates = {"Z"};
    c.external_coef = {0, 0.9, 0.2};
    c.B = 10;
    c.seed = 12;
    nlohmann::json j = c;
    RunConfig back;
    j.get_to(back);
    CHECK(nlohmann::json(back) == j);
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get_to(back), DesignError);
}

TEST_CASE("text report") {
    const std::string csv = simulate("internal-outcome", "iovs_text", {"--n", "300", "--n-sub", "100"});
    const Run r = run({"correct", "--input", csv, "--error-in", "outcome", "--substitute", "Y_star", "--reference", "Y",
                       "--covariates", "X,Z", "--zerovar", "--fieller"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Coefficients Corrected Model") != std::string::npos);
    CHECK(r.out.find("Coefficients Uncorrected Model") != std::string::npos);
    CHECK(r.out.find("Theta") != std::string::npos);
    CHECK(r.out.find("Residual standard error") != std::string::npos);
}
