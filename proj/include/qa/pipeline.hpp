#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qa/encoder.hpp"
#include "qa/reranker.hpp"
#include "qa/store.hpp"
#include "qa/vector_index.hpp"

namespace qa {

/// Retrieval depth when serving answers.
inline constexpr std::size_t kServingDepth = 500;
/// Retrieval depth when collecting candidates for annotation.
inline constexpr std::size_t kAnnotationDepth = 30;

struct PipelineConfig {
    std::size_t k = kServingDepth;
    Layout layout = Layout::QAQ;
    std::optional<double> threshold;
    /// false answers with the retrieval rank-1 pair (the "no selector" ablation).
    bool rerank = true;
};

struct StageTiming {
    std::int64_t encode_ns = 0;
    std::int64_t retrieve_ns = 0;
    std::int64_t rerank_ns = 0;
    std::int64_t total_ns = 0;
};

struct AnswerResponse {
    std::optional<std::string> answer;
    std::optional<std::uint64_t> pair_id;
    std::optional<double> score;
    std::vector<RetrievalResult> retrieval;
    std::vector<RankedCandidate> reranked;
    StageTiming timing;
};

nlohmann::json to_json(const AnswerResponse& response);

/// Element of answer_batch: exactly one of response / error is set.
struct BatchOutcome {
    std::optional<AnswerResponse> response;
    std::optional<std::string> error;
};

/// Encode, retrieve top-k, rerank, select. Immutable once built; answer()
/// may be called concurrently.
///
/// Index entries whose pair is no longer in the store (held out by
/// sample_and_remove after the index was built) are dropped from the
/// retrieval list before reranking.
class Pipeline {
public:
    /// Throws ConfigError when the encoder and index dimensions differ.
    Pipeline(const QAStore& store, std::shared_ptr<const VectorIndex> index, const Encoder& encoder,
             const Scorer& scorer, PipelineConfig config = {});

    const PipelineConfig& config() const noexcept { return config_; }

    /// Backend failures surface as TransportError whose stage() is "encode"
    /// or "rerank".
    AnswerResponse answer(std::string_view question) const;
    AnswerResponse answer(std::string_view question, const PipelineConfig& config) const;

    std::vector<BatchOutcome> answer_batch(std::span<const std::string> questions) const;

    /// Encode plus search only; `retrieval` is filtered to live pairs.
    std::vector<RetrievalResult> retrieve(std::string_view question, std::size_t k) const;

    /// Looks up and reranks retrieval results with the configured layout.
    std::vector<RankedCandidate> rerank(std::string_view question, std::span<const RetrievalResult> retrieval) const;

    /// Store lookups for retrieval results, skipping pairs no longer stored.
    std::vector<Candidate> candidates_for(std::span<const RetrievalResult> results) const;

private:
    const QAStore* store_;
    std::shared_ptr<const VectorIndex> index_;
    const Encoder* encoder_;
    const Scorer* scorer_;
    PipelineConfig config_;
};

}  // namespace qa
