#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qa/encoder.hpp"

namespace qa {

/// Which texts, in which order, follow the target question in the scorer
/// input. QAQ is the served configuration.
enum class Layout : std::uint8_t { QQ, QA, QQA, QAQ };

std::string_view to_string(Layout layout) noexcept;
/// Accepts "QQ", "QA", "QQA", "QAQ" (case-insensitive). Throws ArgumentError.
Layout parse_layout(std::string_view text);

/// (target question, candidate question, candidate answer).
struct Triplet {
    std::string target;
    std::string question;
    std::string answer;

    bool operator==(const Triplet&) const = default;
};

/// Ordered scorer input. The target is the `query` segment; the others
/// follow in layout order.
struct ScorerInput {
    Layout layout;
    std::vector<Segment> segments;
};

/// QQ: [t, q]   QA: [t, a]   QQA: [t, q, a]   QAQ: [t, a, q].
/// Throws ArgumentError when the target or question is blank, or when the
/// answer is blank for any layout other than QQ.
ScorerInput build_input(Layout layout, std::string_view target, std::string_view question, std::string_view answer);

class Scorer {
public:
    virtual ~Scorer() = default;

    virtual std::string describe() const = 0;

    /// One score per triplet, in input order. Higher means more likely an
    /// equivalent question with a correct answer. Scores are unbounded reals.
    virtual std::vector<double> score_batch(Layout layout, std::span<const Triplet> triplets) const = 0;

    double score(Layout layout, const Triplet& triplet) const;
};

/// Token Jaccard between the target and the union of the layout's other
/// segments; in [0, 1].
double reference_score(const Triplet& triplet, Layout layout);

class ReferenceScorer final : public Scorer {
public:
    std::string describe() const override { return "ref"; }
    std::vector<double> score_batch(Layout layout, std::span<const Triplet> triplets) const override;
};

/// A retrieved pair handed to the reranker.
struct Candidate {
    std::uint64_t pair_id = 0;
    std::string question;
    std::string answer;
};

struct RankedCandidate {
    Triplet triplet;
    std::uint64_t pair_id = 0;
    double score = 0.0;
};

class Reranker {
public:
    Reranker(const Scorer& scorer, Layout layout) : scorer_(&scorer), layout_(layout) {}

    Layout layout() const noexcept { return layout_; }

    /// Scores every candidate and sorts by score descending, ties by
    /// ascending pair id. Throws ArgumentError on an empty candidate list.
    std::vector<RankedCandidate> rerank(std::string_view target, std::span<const Candidate> candidates) const;

private:
    const Scorer* scorer_;
    Layout layout_;
};

struct SelectedAnswer {
    std::string answer;
    std::uint64_t pair_id = 0;
    double score = 0.0;
};

/// Rank-1 answer, or nothing when the list is empty or a threshold is set
/// and the top score is below it.
std::optional<SelectedAnswer> select_answer(std::span<const RankedCandidate> ranked,
                                            std::optional<double> threshold = std::nullopt);

}  // namespace qa
