#include "errcal/bootstrap.hpp"

#include <exception>
#include <optional>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "errcal/error.hpp"

namespace errcal {

namespace {

struct Prepared {
    Dataset rows;
    Strata strata;
};

Prepared prepare(const Dataset& d, const MeasurementSpec& spec, std::size_t B) {
    if (B == 0) throw DesignError("bootstrap: B must be at least 1");
    spec.validate();
    Prepared p;
    p.rows = complete_cases(d, spec.analysis_columns());
    p.strata = make_strata(p.rows, spec);
    return p;
}

std::optional<Eigen::VectorXd> run_replicate(const Prepared& p, const MeasurementSpec& spec,
                                             Method method, const CorrectOptions& opts,
                                             std::uint64_t seed, std::size_t b) {
    const auto idx = bootstrap_rows(p.strata, seed, b);
    try {
        return correct(p.rows.take_rows(idx), spec, method, opts).coef;
    } catch (const Error&) {
        return std::nullopt;
    }
}

BootSummary summarise(std::vector<std::optional<Eigen::VectorXd>>&& draws, const Prepared& p,
                      std::size_t B, std::uint64_t seed, double alpha) {
    BootSummary s;
    s.requested = B;
    s.seed = seed;
    s.alpha = alpha;
    s.stratum_sizes = {p.strata.internal.size(), p.strata.external.size()};
    Eigen::Index dim = 0;
    std::size_t ok = 0;
    for (const auto& r : draws)
        if (r) {
            dim = r->size();
            ++ok;
        }
    s.failures = B - ok;
    s.estimates.resize(static_cast<Eigen::Index>(ok), dim);
    Eigen::Index row = 0;
    for (const auto& r : draws)
        if (r) s.estimates.row(row++) = r->transpose();
    if (ok >= 2) {
        const Eigen::RowVectorXd mean = s.estimates.colwise().mean();
        const Eigen::MatrixXd centered = s.estimates.rowwise() - mean;
        s.se = (centered.colwise().squaredNorm() / static_cast<double>(ok - 1)).cwiseSqrt().transpose();
    }
    if (ok >= BootSummary::kMinForIntervals) {
        Eigen::MatrixXd ci(dim, 2);
        for (Eigen::Index j = 0; j < dim; ++j) {
            std::vector<double> col(s.estimates.col(j).data(), s.estimates.col(j).data() + ok);
            ci(j, 0) = percentile(col, alpha / 2.0);
            ci(j, 1) = percentile(std::move(col), 1.0 - alpha / 2.0);
        }
        s.ci = std::move(ci);
    }
    return s;
}

} // namespace

Strata make_strata(const Dataset& rows, const MeasurementSpec& spec) {
    const std::vector<bool> ind = validation_indicator(rows, spec);
    Strata s;
    for (std::size_t i = 0; i < ind.size(); ++i) (ind[i] ? s.internal : s.external).push_back(i);
    return s;
}

std::vector<std::size_t> bootstrap_rows(const Strata& s, std::uint64_t seed, std::size_t replicate) {
    const auto r = static_cast<std::uint64_t>(replicate);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> out;
    out.reserve(s.internal.size() + s.external.size());
    for (const auto* stratum : {&s.internal, &s.external}) {
        if (stratum->empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, stratum->size() - 1);
        for (std::size_t i = 0; i < stratum->size(); ++i) out.push_back((*stratum)[pick(rng)]);
    }
    return out;
}

BootSummary stratified_bootstrap_serial(const Dataset& d, const MeasurementSpec& spec, Method method,
                                        std::size_t B, std::uint64_t seed, double alpha,
                                        const CorrectOptions& opts) {
    const Prepared p = prepare(d, spec, B);
    std::vector<std::optional<Eigen::VectorXd>> draws(B);
    for (std::size_t b = 0; b < B; ++b) draws[b] = run_replicate(p, spec, method, opts, seed, b);
    return summarise(std::move(draws), p, B, seed, alpha);
}

BootSummary stratified_bootstrap(const Dataset& d, const MeasurementSpec& spec, Method method,
                                 std::size_t B, std::uint64_t seed, double alpha, int workers,
                                 const CorrectOptions& opts) {
    const Prepared p = prepare(d, spec, B);
    std::vector<std::optional<Eigen::VectorXd>> draws(B);
    std::exception_ptr failure;
#ifdef _OPENMP
    const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
#endif
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
        try {
            draws[static_cast<std::size_t>(b)] =
                run_replicate(p, spec, method, opts, seed, static_cast<std::size_t>(b));
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(errcal_bootstrap_failure)
#endif
            if (!failure) failure = std::current_exception();
        }
    }
    (void)workers;
    if (failure) std::rethrow_exception(failure);
    return summarise(std::move(draws), p, B, seed, alpha);
}

} // namespace errcal
