#include "qa/remote.hpp"

#include <future>
#include <semaphore>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "qa/errors.hpp"

namespace qa {

using nlohmann::json;

namespace {

struct Endpoint {
    std::string origin;  // scheme://host:port
    std::string prefix;  // path prefix without trailing slash
};

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
        throw ConfigError(fmt::format("backend url '{}' must start with http://", url));
    const auto path = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = url.substr(0, path);
    if (path != std::string::npos) {
        e.prefix = url.substr(path);
        while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    }
    return e;
}

class InFlightGuard {
public:
    explicit InFlightGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
    ~InFlightGuard() { sem_.release(); }
    InFlightGuard(const InFlightGuard&) = delete;
    InFlightGuard& operator=(const InFlightGuard&) = delete;

private:
    std::counting_semaphore<>& sem_;
};

}  // namespace

/// One HTTP endpoint plus the in-flight limit. Each request opens its own
/// client so concurrent calls never share connection state.
struct HttpTransport {
    HttpTransport(RemoteOptions opts, std::string stage)
        : options(std::move(opts)),
          endpoint(parse_endpoint(options.base_url)),
          in_flight(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))),
          stage(std::move(stage)) {
        if (options.batch_size == 0) throw ConfigError("remote batch size must be at least 1");
    }

    json post(const std::string& path, const json& body) {
        InFlightGuard guard(in_flight);
        const auto payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= options.retries; ++attempt) {
            httplib::Client client(endpoint.origin);
            const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
            const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - seconds);
            client.set_connection_timeout(seconds.count(), micros.count());
            client.set_read_timeout(seconds.count(), micros.count());
            client.set_write_timeout(seconds.count(), micros.count());
            auto result = client.Post(endpoint.prefix + path, payload, "application/json");
            if (!result) {
                last_error = fmt::format("{}{}: {}", endpoint.origin, path, httplib::to_string(result.error()));
                continue;
            }
            if (result->status >= 500) {
                last_error = fmt::format("{}{} answered HTTP {}", endpoint.origin, path, result->status);
                continue;
            }
            if (result->status != 200)
                throw TransportError(
                    fmt::format("{}{} answered HTTP {}: {}", endpoint.origin, path, result->status, result->body),
                    stage);
            auto parsed = json::parse(result->body, nullptr, false);
            if (parsed.is_discarded() || !parsed.is_object())
                throw TransportError(fmt::format("{}{} returned a non-JSON body", endpoint.origin, path), stage);
            return parsed;
        }
        throw TransportError(
            fmt::format("{} (after {} attempt{})", last_error, options.retries + 1, options.retries == 0 ? "" : "s"),
            stage);
    }

    RemoteOptions options;
    Endpoint endpoint;
    std::counting_semaphore<> in_flight;
    std::string stage;
};

struct RemoteEncoder::Transport : HttpTransport {
    using HttpTransport::HttpTransport;
};

struct RemoteScorer::Transport : HttpTransport {
    using HttpTransport::HttpTransport;
};

RemoteEncoder::RemoteEncoder(RemoteOptions options, std::size_t dim)
    : transport_(std::make_unique<Transport>(std::move(options), "encode")), dim_(dim) {
    if (dim_ == 0) throw ConfigError("remote encoder dimension must be positive");
}

RemoteEncoder::~RemoteEncoder() = default;

std::string RemoteEncoder::describe() const {
    return "remote:" + transport_->options.base_url;
}

std::vector<Embedding> RemoteEncoder::encode_batch(std::span<const SegmentedInput> inputs) const {
    std::vector<Embedding> out(inputs.size());
    for (const InputMode mode : {InputMode::query, InputMode::pair}) {
        std::vector<std::size_t> positions;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].mode() == mode) positions.push_back(i);
        }
        const std::size_t batch = transport_->options.batch_size;
        for (std::size_t begin = 0; begin < positions.size(); begin += batch) {
            const std::size_t end = std::min(begin + batch, positions.size());
            json items = json::array();
            for (std::size_t p = begin; p < end; ++p) {
                const auto segments = inputs[positions[p]].segments();
                if (mode == InputMode::query)
                    items.push_back({{"query", segments[0].text}});
                else
                    items.push_back({{"question", segments[0].text}, {"answer", segments[1].text}});
            }
            const json response =
                transport_->post("/encode", {{"mode", std::string(to_string(mode))}, {"items", std::move(items)}});

            const auto vectors = response.find("vectors");
            if (vectors == response.end() || !vectors->is_array() || vectors->size() != end - begin)
                throw TransportError(fmt::format("/encode returned {} vectors for {} items",
                                                 vectors == response.end() ? 0 : vectors->size(), end - begin),
                                     "encode");
            if (response.value("dim", dim_) != dim_)
                throw TransportError(
                    fmt::format("/encode reports dim {}, expected {}", response.value("dim", 0), dim_), "encode");
            for (std::size_t p = begin; p < end; ++p) {
                const auto& v = (*vectors)[p - begin];
                Embedding e;
                try {
                    e.values = v.get<std::vector<float>>();
                } catch (const json::exception&) {
                    throw TransportError("/encode returned a non-numeric vector", "encode");
                }
                if (e.values.size() != dim_)
                    throw TransportError(fmt::format("/encode vector has dim {}, expected {}", e.values.size(), dim_),
                                         "encode");
                try {
                    l2_normalize(e.values);
                } catch (const ArgumentError&) {
                    throw TransportError("/encode returned a zero vector", "encode");
                }
                out[positions[p]] = std::move(e);
            }
        }
    }
    return out;
}

RemoteScorer::RemoteScorer(RemoteOptions options)
    : transport_(std::make_unique<Transport>(std::move(options), "rerank")) {}

RemoteScorer::~RemoteScorer() = default;

std::string RemoteScorer::describe() const {
    return "remote:" + transport_->options.base_url;
}

std::vector<double> RemoteScorer::score_batch(Layout layout, std::span<const Triplet> triplets) const {
    const std::size_t batch = transport_->options.batch_size;
    std::vector<std::future<std::vector<double>>> pending;
    for (std::size_t begin = 0; begin < triplets.size(); begin += batch) {
        const std::size_t end = std::min(begin + batch, triplets.size());
        json items = json::array();
        for (std::size_t i = begin; i < end; ++i)
            items.push_back(
                {{"target", triplets[i].target}, {"question", triplets[i].question}, {"answer", triplets[i].answer}});
        json body = {{"layout", std::string(to_string(layout))}, {"items", std::move(items)}};
        const std::size_t expected = end - begin;
        pending.push_back(std::async(std::launch::async, [this, body = std::move(body), expected] {
            const json response = transport_->post("/score", body);
            const auto scores = response.find("scores");
            if (scores == response.end() || !scores->is_array() || scores->size() != expected)
                throw TransportError(fmt::format("/score returned {} scores for {} items",
                                                 scores == response.end() ? 0 : scores->size(), expected),
                                     "rerank");
            try {
                return scores->get<std::vector<double>>();
            } catch (const json::exception&) {
                throw TransportError("/score returned a non-numeric score", "rerank");
            }
        }));
    }
    std::vector<double> out;
    out.reserve(triplets.size());
    // Drain every future before rethrowing so no request outlives the call.
    std::exception_ptr failure;
    for (auto& f : pending) {
        try {
            auto part = f.get();
            out.insert(out.end(), part.begin(), part.end());
        } catch (...) {
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace qa
