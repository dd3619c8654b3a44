#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "errcal/correct.hpp"
#include "errcal/tabular.hpp"
#include "errcal/uncertainty.hpp"

namespace errcal {

// Row indices of the two strata (internal subset first, then the rest).
struct Strata {
    std::vector<std::size_t> internal;
    std::vector<std::size_t> external;
};

Strata make_strata(const Dataset& rows, const MeasurementSpec& spec);

/// Resampled row indices of one replicate. Each stratum is resampled with
/// replacement keeping its size; the draw depends only on (seed, replicate).
std::vector<std::size_t> bootstrap_rows(const Strata& s, std::uint64_t seed, std::size_t replicate);

/// Stratified percentile bootstrap of the full correction pipeline, run over
/// `workers` OpenMP threads (0 = runtime default). Results do not depend on the
/// worker count. Replicates whose correction fails are counted and skipped.
BootSummary stratified_bootstrap(const Dataset& d, const MeasurementSpec& spec, Method method,
                                 std::size_t B, std::uint64_t seed, double alpha, int workers = 0,
                                 const CorrectOptions& opts = {});

/// Single-threaded reference implementation of stratified_bootstrap.
BootSummary stratified_bootstrap_serial(const Dataset& d, const MeasurementSpec& spec, Method method,
                                        std::size_t B, std::uint64_t seed, double alpha,
                                        const CorrectOptions& opts = {});

} // namespace errcal
