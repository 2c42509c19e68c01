#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qa/encoder.hpp"
#include "qa/pipeline.hpp"
#include "qa/store.hpp"
#include "qa/vector_index.hpp"

namespace qa {

enum class Stage : std::uint8_t { retrieval, rerank, total };

std::string_view to_string(Stage stage) noexcept;
Stage parse_stage(std::string_view text);

/// Points with fewer repetitions are flagged low-confidence.
inline constexpr std::size_t kMinConfidentReps = 30;
inline constexpr std::size_t kWarmupIterations = 10;

struct BenchPoint {
    double x = 0.0;  ///< candidates k, or database size N
    Stage stage = Stage::retrieval;
    double mean_seconds = 0.0;
    double stddev = 0.0;
    std::size_t reps = 0;

    bool low_confidence() const noexcept { return reps < kMinConfidentReps; }
    bool operator==(const BenchPoint&) const = default;
};

struct BenchOptions {
    std::size_t reps = 200;
    std::size_t warmup = kWarmupIterations;
};

/// `partial` is set when a backend failed midway; points then cover every
/// x with at least one measured repetition.
struct BenchResult {
    std::vector<BenchPoint> points;
    bool partial = false;
    std::string error;
};

/// For each k: retrieval (encode + search) and rerank (lookup + rerank) are
/// timed separately, total is timed around both. Each round runs one query
/// at every k; queries are cycled across rounds.
BenchResult bench_candidates(const Pipeline& pipeline, std::span<const std::string> queries,
                             std::span<const std::size_t> ks, const BenchOptions& options = {});

/// Retrieval-stage latency over the first N rows of `full` for each N,
/// interleaved per round like bench_candidates.
BenchResult bench_db_scaling(const VectorIndex& full, const Encoder& encoder, std::span<const std::string> queries,
                             std::span<const std::size_t> sizes, std::size_t k, const BenchOptions& options = {});

/// Completed requests per second with `threads` clients sharing one
/// pipeline, each issuing `requests_per_thread` answers.
double measure_throughput(const Pipeline& pipeline, std::span<const std::string> queries, std::size_t threads,
                          std::size_t requests_per_thread);

/// Deterministic generated q/a records for latency runs. Questions draw
/// from a fixed vocabulary so the reference scorer sees realistic overlap.
std::vector<RawRecord> synthetic_records(std::size_t n, std::uint64_t seed);
std::vector<std::string> synthetic_queries(std::size_t n, std::uint64_t seed);

/// Sorted by (stage, x). Header: x,stage,mean_seconds,stddev,reps.
std::string emit_csv(std::vector<BenchPoint> points);
std::vector<BenchPoint> parse_csv(std::istream& in);
std::string format_table(std::vector<BenchPoint> points);

/// Latencies read off the published candidate-count plot: seconds per
/// stage at k = 1, 50, ..., 500 (A100, 768-d bi-encoder, 6.3M pairs).
std::vector<BenchPoint> reference_candidates_curve();
/// Published retrieval latency against database size (k = 500), x in pairs.
std::vector<BenchPoint> reference_scaling_curve();

/// Least-squares R^2 of y against x.
double linear_fit_r2(std::span<const double> x, std::span<const double> y);

/// Parses sizes such as "20k", "1.5m" or "200000".
std::size_t parse_count(std::string_view text);

}  // namespace qa
