#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace qa {

enum class Split : std::uint8_t { train, dev, test };

std::string_view to_string(Split split) noexcept;
/// Throws ArgumentError on anything but "train", "dev", "test".
Split parse_split(std::string_view text);

/// Candidates per query in the dev and test splits; train may have fewer.
inline constexpr std::size_t kPoolSize = 30;

struct LabeledCandidate {
    std::uint64_t pair_id = 0;
    std::string question;
    std::string answer;
    int label = 0;

    bool operator==(const LabeledCandidate&) const = default;
};

/// One target question and its annotated candidate pool.
struct RankingExample {
    std::string target;
    Split split = Split::train;
    std::vector<LabeledCandidate> candidates;

    bool operator==(const RankingExample&) const = default;
};

nlohmann::json to_json(const RankingExample& example);

/// Throws ValidationError (with `line`) when the example breaks the pool
/// invariants: dev/test pools of exactly kPoolSize, train pools of 1 to
/// kPoolSize, binary labels, non-empty target.
void validate_example(const RankingExample& example, std::size_t line = 0);

/// JSONL, one example per line:
///   {"target": str, "split": "train|dev|test",
///    "candidates": [{"pair_id": int, "question": str, "answer": str, "label": 0|1}, ...]}
std::vector<RankingExample> parse_dataset(std::istream& in);
std::vector<RankingExample> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, std::span<const RankingExample> examples);

// Per-query metrics over labels listed in ranked order.

/// Mean over positive positions i of (positives in the first i) / i; 0 when
/// there are no positives. Throws ArgumentError on an empty list.
double average_precision(std::span<const int> labels);
/// 1 / rank of the first positive; 0 when there is none.
double reciprocal_rank(std::span<const int> labels);
/// 1 iff a positive occurs in the first min(k, size) positions.
int hit_at_k(std::span<const int> labels, std::size_t k);

/// Hit-rate cutoffs reported by default.
inline const std::vector<std::size_t> kDefaultHitKs = {1, 5, 10, 15, 20, 25, 30};

struct MetricsReport {
    double p_at_1 = 0.0;
    double map = 0.0;
    double mrr = 0.0;
    std::map<std::size_t, double> hit_at_k;
    std::size_t n_queries = 0;
    std::size_t n_zero_positive = 0;
};

nlohmann::json to_json(const MetricsReport& report);
/// Aligned plain-text table of the report, one metric per row.
std::string format_table(const MetricsReport& report);

/// Re-sorts every example's candidates by its scores (descending, ties by
/// ascending pair id) and averages per-query metrics over all queries,
/// zero-positive ones included. Throws ArgumentError when a score list does
/// not match its candidate list.
MetricsReport evaluate(std::span<const RankingExample> dataset, std::span<const std::vector<double>> scores,
                       std::span<const std::size_t> hit_ks = kDefaultHitKs);

/// Labels of one example ordered by the given scores.
std::vector<int> ranked_labels(const RankingExample& example, std::span<const double> scores);

/// Scores that keep the stored candidate order (rank i gets -i).
std::vector<std::vector<double>> identity_scores(std::span<const RankingExample> dataset);

/// Score file: one line per example, either a JSON array of numbers or an
/// object {"scores": [...]}.
std::vector<std::vector<double>> load_scores(const std::filesystem::path& path);

}  // namespace qa
