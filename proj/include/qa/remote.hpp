#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include "qa/encoder.hpp"
#include "qa/reranker.hpp"

namespace qa {

/// Connection settings shared by the model-server clients.
struct RemoteOptions {
    /// "http://host:port", optionally followed by a path prefix.
    std::string base_url;
    std::chrono::milliseconds timeout{10'000};
    /// Extra attempts after a connection failure or 5xx response.
    int retries = 2;
    /// Upper bound on concurrent HTTP requests issued by one client.
    std::size_t max_in_flight = 4;
    /// Items per request.
    std::size_t batch_size = 64;
};

/// Client for `POST /encode`:
///
///     request   {"mode": "query"|"pair",
///                "items": [{"query": t} | {"question": q, "answer": a}, ...]}
///     response  {"dim": d, "vectors": [[f32, ...], ...]}
///
/// Mixed-mode batches are split per mode and reassembled in input order.
/// Returned vectors are re-normalized; a wrong count or dimension is a
/// transport error, and any failed request fails the whole batch.
class RemoteEncoder final : public Encoder {
public:
    RemoteEncoder(RemoteOptions options, std::size_t dim);
    ~RemoteEncoder() override;

    std::size_t dim() const override { return dim_; }
    std::string describe() const override;
    std::vector<Embedding> encode_batch(std::span<const SegmentedInput> inputs) const override;

private:
    struct Transport;
    std::unique_ptr<Transport> transport_;
    std::size_t dim_;
};

/// Client for `POST /score`:
///
///     request   {"layout": "QAQ", "items": [{"target", "question", "answer"}, ...]}
///     response  {"scores": [f64, ...]}
///
/// Batches are dispatched concurrently up to max_in_flight.
class RemoteScorer final : public Scorer {
public:
    explicit RemoteScorer(RemoteOptions options);
    ~RemoteScorer() override;

    std::string describe() const override;
    std::vector<double> score_batch(Layout layout, std::span<const Triplet> triplets) const override;

private:
    struct Transport;
    std::unique_ptr<Transport> transport_;
};

}  // namespace qa
