#include "qa/reranker.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/text.hpp"

namespace qa {

std::string_view to_string(Layout layout) noexcept {
    switch (layout) {
        case Layout::QQ: return "QQ";
        case Layout::QA: return "QA";
        case Layout::QQA: return "QQA";
        case Layout::QAQ: return "QAQ";
    }
    return "?";
}

Layout parse_layout(std::string_view text) {
    const auto upper = [&] {
        std::string s(text);
        for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }();
    if (upper == "QQ") return Layout::QQ;
    if (upper == "QA") return Layout::QA;
    if (upper == "QQA") return Layout::QQA;
    if (upper == "QAQ") return Layout::QAQ;
    throw ArgumentError(fmt::format("unknown layout '{}' (expected QQ, QA, QQA or QAQ)", text));
}

ScorerInput build_input(Layout layout, std::string_view target, std::string_view question, std::string_view answer) {
    if (trim(target).empty()) throw ArgumentError("triplet target must not be empty");
    if (trim(question).empty()) throw ArgumentError("triplet question must not be empty");
    if (layout != Layout::QQ && trim(answer).empty())
        throw ArgumentError(fmt::format("layout {} requires a non-empty answer", to_string(layout)));

    ScorerInput input{layout, {Segment{Role::query, std::string(target)}}};
    const Segment q{Role::question, std::string(question)};
    const Segment a{Role::answer, std::string(answer)};
    switch (layout) {
        case Layout::QQ: input.segments.push_back(q); break;
        case Layout::QA: input.segments.push_back(a); break;
        case Layout::QQA:
            input.segments.push_back(q);
            input.segments.push_back(a);
            break;
        case Layout::QAQ:
            input.segments.push_back(a);
            input.segments.push_back(q);
            break;
    }
    return input;
}

double Scorer::score(Layout layout, const Triplet& triplet) const {
    return score_batch(layout, std::span(&triplet, 1)).at(0);
}

double reference_score(const Triplet& triplet, Layout layout) {
    const auto input = build_input(layout, triplet.target, triplet.question, triplet.answer);
    const auto target_tokens = tokenize(triplet.target);
    const std::set<std::string> target(target_tokens.begin(), target_tokens.end());
    std::set<std::string> rest;
    for (std::size_t i = 1; i < input.segments.size(); ++i) {
        for (auto& token : tokenize(input.segments[i].text)) rest.insert(std::move(token));
    }
    std::size_t shared = 0;
    for (const auto& token : target) shared += rest.count(token);
    const std::size_t joint = target.size() + rest.size() - shared;
    return joint == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(joint);
}

std::vector<double> ReferenceScorer::score_batch(Layout layout, std::span<const Triplet> triplets) const {
    std::vector<double> scores;
    scores.reserve(triplets.size());
    for (const auto& triplet : triplets) scores.push_back(reference_score(triplet, layout));
    return scores;
}

std::vector<RankedCandidate> Reranker::rerank(std::string_view target, std::span<const Candidate> candidates) const {
    if (candidates.empty()) throw ArgumentError("rerank needs at least one candidate");
    std::vector<Triplet> triplets;
    triplets.reserve(candidates.size());
    for (const auto& c : candidates) {
        build_input(layout_, target, c.question, c.answer);
        triplets.push_back(Triplet{std::string(target), c.question, c.answer});
    }
    const auto scores = scorer_->score_batch(layout_, triplets);
    if (scores.size() != triplets.size())
        throw TransportError(fmt::format("scorer returned {} scores for {} triplets", scores.size(), triplets.size()));

    std::vector<RankedCandidate> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        ranked.push_back(RankedCandidate{std::move(triplets[i]), candidates[i].pair_id, scores[i]});
    std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        return a.score > b.score || (a.score == b.score && a.pair_id < b.pair_id);
    });
    return ranked;
}

std::optional<SelectedAnswer> select_answer(std::span<const RankedCandidate> ranked, std::optional<double> threshold) {
    if (ranked.empty()) return std::nullopt;
    const auto& top = ranked.front();
    if (threshold && top.score < *threshold) return std::nullopt;
    return SelectedAnswer{top.triplet.answer, top.pair_id, top.score};
}

}  // namespace qa
