#pragma once

#include <memory>
#include <string>

#include "qa/pipeline.hpp"

namespace qa {

/// HTTP front end for a pipeline:
///
///     POST /answer  {"question": str}  ->  AnswerResponse as JSON
///     GET  /health                     ->  {"status": "ok"}
///
/// Requests are served concurrently; the pipeline is shared read-only.
class AnswerService {
public:
    explicit AnswerService(const Pipeline& pipeline);
    ~AnswerService();

    AnswerService(const AnswerService&) = delete;
    AnswerService& operator=(const AnswerService&) = delete;

    /// Binds to `port` (0 picks a free one) and returns the bound port, or
    /// -1 on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    bool listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qa
