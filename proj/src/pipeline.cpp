#include "qa/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include <fmt/format.h>

#include "qa/errors.hpp"

namespace qa {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point from, Clock::time_point to) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(to - from).count();
}

}  // namespace

json to_json(const AnswerResponse& r) {
    json retrieval = json::array();
    for (const auto& hit : r.retrieval) retrieval.push_back({{"pair_id", hit.pair_id}, {"score", hit.score}});
    json reranked = json::array();
    for (const auto& c : r.reranked)
        reranked.push_back({{"pair_id", c.pair_id}, {"score", c.score}, {"question", c.triplet.question}});
    json j = {{"answer", r.answer ? json(*r.answer) : json(nullptr)},
              {"pair_id", r.pair_id ? json(*r.pair_id) : json(nullptr)},
              {"score", r.score ? json(*r.score) : json(nullptr)},
              {"retrieval", std::move(retrieval)},
              {"reranked", std::move(reranked)},
              {"timing",
               {{"encode_ns", r.timing.encode_ns},
                {"retrieve_ns", r.timing.retrieve_ns},
                {"rerank_ns", r.timing.rerank_ns},
                {"total_ns", r.timing.total_ns}}}};
    return j;
}

Pipeline::Pipeline(const QAStore& store, std::shared_ptr<const VectorIndex> index, const Encoder& encoder,
                   const Scorer& scorer, PipelineConfig config)
    : store_(&store), index_(std::move(index)), encoder_(&encoder), scorer_(&scorer), config_(config) {
    if (!index_) throw ConfigError("pipeline needs an index");
    if (config_.k == 0) throw ConfigError("retrieval depth k must be at least 1");
    if (index_->dim() != encoder_->dim())
        throw ConfigError(fmt::format("index dim {} does not match encoder dim {}", index_->dim(), encoder_->dim()));
}

std::vector<Candidate> Pipeline::candidates_for(std::span<const RetrievalResult> results) const {
    std::vector<Candidate> out;
    out.reserve(results.size());
    for (const auto& hit : results) {
        if (auto pair = store_->find(hit.pair_id))
            out.push_back(Candidate{pair->id, std::move(pair->question), std::move(pair->answer)});
    }
    return out;
}

std::vector<RetrievalResult> Pipeline::retrieve(std::string_view question, std::size_t k) const {
    Embedding query;
    try {
        query = encoder_->encode_query(question);
    } catch (const TransportError& e) {
        throw TransportError(e.detail(), "encode");
    }
    if (index_->empty()) return {};
    auto hits = index_->search(query, k);
    std::erase_if(hits, [&](const RetrievalResult& h) { return !store_->contains(h.pair_id); });
    return hits;
}

std::vector<RankedCandidate> Pipeline::rerank(std::string_view question,
                                              std::span<const RetrievalResult> retrieval) const {
    const auto candidates = candidates_for(retrieval);
    if (candidates.empty()) return {};
    try {
        return Reranker(*scorer_, config_.layout).rerank(question, candidates);
    } catch (const TransportError& e) {
        throw TransportError(e.detail(), "rerank");
    }
}

AnswerResponse Pipeline::answer(std::string_view question) const {
    return answer(question, config_);
}

AnswerResponse Pipeline::answer(std::string_view question, const PipelineConfig& config) const {
    if (config.k == 0) throw ArgumentError("retrieval depth k must be at least 1");
    AnswerResponse response;
    const auto start = Clock::now();

    Embedding query;
    try {
        query = encoder_->encode_query(question);
    } catch (const TransportError& e) {
        throw TransportError(e.detail(), "encode");
    }
    const auto encoded = Clock::now();
    response.timing.encode_ns = elapsed_ns(start, encoded);

    if (!index_->empty()) {
        response.retrieval = index_->search(query, config.k);
        std::erase_if(response.retrieval, [&](const RetrievalResult& h) { return !store_->contains(h.pair_id); });
    }
    const auto candidates = candidates_for(response.retrieval);
    if (candidates.size() != response.retrieval.size()) {
        // A pair was removed between search and lookup.
        std::erase_if(response.retrieval, [&](const RetrievalResult& h) {
            return std::none_of(candidates.begin(), candidates.end(),
                                [&](const Candidate& c) { return c.pair_id == h.pair_id; });
        });
    }
    const auto retrieved = Clock::now();
    response.timing.retrieve_ns = elapsed_ns(encoded, retrieved);

    if (!candidates.empty()) {
        if (config.rerank) {
            try {
                response.reranked = Reranker(*scorer_, config.layout).rerank(question, candidates);
            } catch (const TransportError& e) {
                throw TransportError(e.detail(), "rerank");
            }
        } else {
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                response.reranked.push_back(RankedCandidate{
                    Triplet{std::string(question), candidates[i].question, candidates[i].answer},
                    candidates[i].pair_id, static_cast<double>(response.retrieval[i].score)});
            }
        }
    }
    const auto reranked = Clock::now();
    response.timing.rerank_ns = elapsed_ns(retrieved, reranked);

    if (auto selected = select_answer(response.reranked, config.threshold)) {
        response.answer = std::move(selected->answer);
        response.pair_id = selected->pair_id;
        response.score = selected->score;
    }
    response.timing.total_ns = elapsed_ns(start, Clock::now());
    return response;
}

std::vector<BatchOutcome> Pipeline::answer_batch(std::span<const std::string> questions) const {
    std::vector<BatchOutcome> out;
    out.reserve(questions.size());
    for (const auto& q : questions) {
        BatchOutcome outcome;
        try {
            outcome.response = answer(q);
        } catch (const Error& e) {
            outcome.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
        }
        out.push_back(std::move(outcome));
    }
    return out;
}

}  // namespace qa
