#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qa/eval.hpp"
#include "qa/reranker.hpp"

namespace qa {

inline constexpr std::size_t kTaskSize = 7;
inline constexpr std::size_t kRealPerTask = 5;
inline constexpr double kTaskRewardUsd = 0.15;

/// Where a real triplet came from: the target's position in the provenance
/// list, the retrieved pair, and its retrieval rank (0-based).
struct CandidateRef {
    std::size_t target = 0;
    std::uint64_t pair_id = 0;
    std::size_t rank = 0;

    auto key() const noexcept { return std::pair(target, pair_id); }
    bool operator==(const CandidateRef&) const = default;
};

/// Retrieval output for one held-out target question, in rank order.
struct TargetProvenance {
    std::string target;
    std::vector<Candidate> candidates;
};

nlohmann::json to_json(const TargetProvenance& provenance);
std::vector<TargetProvenance> parse_provenance(std::istream& in);

struct RealTriplet {
    Triplet triplet;
    CandidateRef ref;
};

/// Every (target, candidate) of the provenance as a triplet to annotate.
std::vector<RealTriplet> real_triplets(std::span<const TargetProvenance> provenance);

/// Candidate question/answer available to synthesize negative controls.
struct PoolQuestion {
    std::string question;
    std::string answer;
};

enum class ItemKind : std::uint8_t { real, positive_control, negative_control, padding_control };

std::string_view to_string(ItemKind kind) noexcept;

struct TaskItem {
    Triplet triplet;
    ItemKind kind = ItemKind::real;
    std::optional<CandidateRef> ref;  ///< set for real items only
};

/// Seven triplets: up to five real ones, one positive and one negative
/// control, and extra positive controls padding a short final task.
struct AnnotationTask {
    std::string task_id;
    std::vector<TaskItem> items;
    std::size_t positive_control = 0;
    std::size_t negative_control = 0;
    int expected_positive = 1;
    int expected_negative = 0;
    double reward_usd = kTaskRewardUsd;
};

/// Chunks real triplets five per task in input order. Each task gets a
/// positive control drawn from `positive_controls`, a negative control
/// pairing two pool questions with distinct text, and its items shuffled.
/// Deterministic in `seed`. Throws ArgumentError on empty real triplets,
/// no positive controls, or fewer than two distinct pool questions.
std::vector<AnnotationTask> generate_tasks(std::span<const RealTriplet> real,
                                           std::span<const Triplet> positive_controls,
                                           std::span<const PoolQuestion> question_pool, std::uint64_t seed);

/// Worker-facing task file: triplets only, no kinds or expected labels.
void write_worker_tasks(std::ostream& out, std::span<const AnnotationTask> tasks);
/// Answer key: control positions, expected labels, item kinds, provenance.
void write_answer_key(std::ostream& out, std::span<const AnnotationTask> tasks);
/// Rejoins the two files. Throws ValidationError on a mismatch.
std::vector<AnnotationTask> read_tasks(std::istream& worker_tasks, std::istream& answer_key);

struct Judgment {
    std::string worker_id;
    std::string task_id;
    std::vector<int> labels;  ///< one per task item, in item order
    std::string submitted_at;
};

/// CSV with header `task_id,worker_id,labels[,submitted_at]`. Labels are a
/// run of seven 0/1 digits, optionally separated by spaces or semicolons.
std::vector<Judgment> parse_judgments_csv(std::istream& in);
void write_judgments_csv(std::ostream& out, std::span<const Judgment> judgments);

enum class Verdict : std::uint8_t { accepted, rejected };

std::string_view to_string(Verdict verdict) noexcept;

struct WorkerRecord {
    std::string worker_id;
    std::size_t assigned = 0;
    std::size_t failed = 0;
    bool blacklisted = false;
};

/// True when the worker failed strictly more than 10% of assigned tasks.
bool over_failure_limit(std::size_t assigned, std::size_t failed) noexcept;

class WorkerLedger {
public:
    /// Counts one validated task for the worker and refreshes the flag.
    void record(const std::string& worker_id, bool failed);

    const WorkerRecord* find(const std::string& worker_id) const;
    const std::map<std::string, WorkerRecord>& records() const noexcept { return records_; }

private:
    std::map<std::string, WorkerRecord> records_;
};

/// REJECTED iff either designated control label differs from its expected
/// label. Updates the worker's counts. Throws ArgumentError when the
/// judgment does not match the task's shape or id.
Verdict validate_judgment(const AnnotationTask& task, const Judgment& judgment, WorkerLedger& ledger);

struct ValidatedJudgment {
    Judgment judgment;
    Verdict verdict = Verdict::accepted;
};

/// Validates every judgment against its task (looked up by id).
std::vector<ValidatedJudgment> validate_all(std::span<const AnnotationTask> tasks, std::span<const Judgment> judgments,
                                            WorkerLedger& ledger);

struct JudgmentKey {
    std::string worker_id;
    std::string task_id;

    auto operator<=>(const JudgmentKey&) const = default;
};

struct BlacklistResult {
    std::set<std::string> blacklisted;
    /// Every judgment, accepted or rejected, by a blacklisted worker.
    std::set<JudgmentKey> discarded;
};

BlacklistResult apply_blacklist(const WorkerLedger& ledger, std::span<const ValidatedJudgment> judgments);

enum class FinalLabel : std::uint8_t { negative, positive, needs_tiebreak };

std::string_view to_string(FinalLabel label) noexcept;

/// Majority of the surviving votes; an even split is NEEDS_TIEBREAK.
/// Throws InsufficientDataError when there are no votes.
FinalLabel aggregate_labels(std::span<const int> votes);

struct AggregatedLabel {
    CandidateRef ref;
    std::vector<int> votes;  ///< ordered by worker id
    std::optional<FinalLabel> label;  ///< empty when no vote survived
};

/// Collects votes of accepted, non-discarded judgments for every real item
/// and aggregates them. Ordered by (target, rank).
std::vector<AggregatedLabel> aggregate(std::span<const AnnotationTask> tasks,
                                       std::span<const ValidatedJudgment> judgments, const BlacklistResult& blacklist);

nlohmann::json to_json(const AggregatedLabel& label);
AggregatedLabel aggregated_label_from_json(const nlohmann::json& j);

struct SplitProportions {
    double train = 0.77;
    double dev = 0.10;
    double test = 0.13;
};

/// Parses "train,dev,test" fractions that sum to 1.
SplitProportions parse_split_proportions(std::string_view text);

/// Per-split example counts for n targets by largest remainder.
std::array<std::size_t, 3> split_counts(const SplitProportions& proportions, std::size_t n);

/// One RankingExample per target, candidates in retrieval order, in
/// provenance order. Targets are shuffled under `seed` and dealt into dev
/// and test first; only targets with a full kPoolSize pool are eligible for
/// those splits, the rest go to train. Throws ExportError naming the first
/// candidate without a final label.
std::vector<RankingExample> export_ranking_dataset(std::span<const AggregatedLabel> labels,
                                                   std::span<const TargetProvenance> provenance,
                                                   const SplitProportions& proportions, std::uint64_t seed);

}  // namespace qa
