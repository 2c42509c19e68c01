#include "qa/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include "qa/errors.hpp"

namespace qa {

using nlohmann::json;

struct AnswerService::Impl {
    const Pipeline* pipeline;
    httplib::Server server;
};

AnswerService::AnswerService(const Pipeline& pipeline) : impl_(std::make_unique<Impl>()) {
    impl_->pipeline = &pipeline;
    auto* impl = impl_.get();

    impl->server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });

    impl->server.Post("/answer", [impl](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("question") || !body["question"].is_string()) {
            res.status = 400;
            res.set_content(json{{"error", {{"kind", "argument"}, {"message", "expected {\"question\": str}"}}}}.dump(),
                            "application/json");
            return;
        }
        try {
            res.set_content(to_json(impl->pipeline->answer(body["question"].get<std::string>())).dump(),
                            "application/json");
        } catch (const Error& e) {
            res.status = e.kind() == ErrorKind::argument ? 400 : 502;
            json err = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
            if (const auto* t = dynamic_cast<const TransportError*>(&e)) err["stage"] = t->stage();
            res.set_content(json{{"error", std::move(err)}}.dump(), "application/json");
        }
    });
}

AnswerService::~AnswerService() {
    stop();
}

int AnswerService::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AnswerService::listen() {
    return impl_->server.listen_after_bind();
}

void AnswerService::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace qa
