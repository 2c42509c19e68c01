#include "qa/config.hpp"

#include <istream>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/remote.hpp"
#include "qa/text.hpp"

namespace qa {

namespace {

template <typename T>
T parse_number(const std::string& text, const std::string& key, const std::string& origin) {
    try {
        std::size_t used = 0;
        T value{};
        if constexpr (std::is_same_v<T, double>)
            value = std::stod(text, &used);
        else
            value = static_cast<T>(std::stoull(text, &used));
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        if constexpr (!std::is_same_v<T, double>) {
            if (!text.empty() && text.front() == '-') throw std::invalid_argument("negative");
        }
        return value;
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("{}: '{}' is not a valid value for {}", origin, text, key));
    }
}

}  // namespace

KeyValues parse_config_file(std::istream& in) {
    KeyValues out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
        const auto body = trim(text);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(fmt::format("config line {}: expected key = value", line));
        const auto key = std::string(trim(body.substr(0, eq)));
        if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", line));
        out[key] = std::string(trim(body.substr(eq + 1)));
    }
    return out;
}

KeyValues environment_settings(const std::function<std::optional<std::string>(const std::string&)>& getenv) {
    KeyValues out;
    auto take = [&](const char* var, const char* key, const char* prefix = "") {
        if (auto value = getenv(var); value && !value->empty()) out[key] = prefix + *value;
    };
    take("QA_STORE", "store");
    take("QA_INDEX", "index");
    take("QA_ENCODER_URL", "encoder", "remote:");
    take("QA_SCORER_URL", "scorer", "remote:");
    take("QA_DIM", "dim");
    take("QA_SEED", "seed");
    return out;
}

void apply_settings(EngineConfig& config, const KeyValues& settings, const std::string& origin) {
    for (const auto& [key, value] : settings) {
        if (key == "store") {
            config.store = value;
        } else if (key == "index") {
            config.index = value;
        } else if (key == "encoder") {
            config.encoder = value;
        } else if (key == "scorer") {
            config.scorer = value;
        } else if (key == "dim") {
            config.dim = parse_number<std::size_t>(value, key, origin);
        } else if (key == "k") {
            config.k = parse_number<std::size_t>(value, key, origin);
            if (config.k == 0) throw ConfigError(fmt::format("{}: k must be at least 1", origin));
        } else if (key == "layout") {
            try {
                config.layout = parse_layout(value);
            } catch (const ArgumentError& e) {
                throw ConfigError(fmt::format("{}: {}", origin, e.what()));
            }
        } else if (key == "threshold") {
            if (value.empty() || value == "none")
                config.threshold.reset();
            else
                config.threshold = parse_number<double>(value, key, origin);
        } else if (key == "seed") {
            config.seed = parse_number<std::uint64_t>(value, key, origin);
        } else {
            throw ConfigError(fmt::format("{}: unknown setting '{}'", origin, key));
        }
    }
}

EngineConfig resolve_config(const KeyValues& file, const KeyValues& environment, const KeyValues& flags) {
    EngineConfig config;
    apply_settings(config, file, "config file");
    apply_settings(config, environment, "environment");
    apply_settings(config, flags, "flags");
    return config;
}

std::unique_ptr<Encoder> make_encoder(const std::string& spec, std::size_t dim) {
    if (spec.empty() || spec == "ref") return std::make_unique<ReferenceEncoder>(dim, 0);
    if (spec.rfind("ref:", 0) == 0) {
        const auto seed = parse_number<std::uint64_t>(spec.substr(4), "encoder seed", "encoder");
        return std::make_unique<ReferenceEncoder>(dim, seed);
    }
    if (spec.rfind("remote:", 0) == 0) {
        RemoteOptions options;
        options.base_url = spec.substr(7);
        return std::make_unique<RemoteEncoder>(std::move(options), dim);
    }
    throw ConfigError(fmt::format("unknown encoder '{}' (expected ref, ref:<seed> or remote:<url>)", spec));
}

std::unique_ptr<Scorer> make_scorer(const std::string& spec) {
    if (spec.empty() || spec == "ref") return std::make_unique<ReferenceScorer>();
    if (spec.rfind("remote:", 0) == 0) {
        RemoteOptions options;
        options.base_url = spec.substr(7);
        return std::make_unique<RemoteScorer>(std::move(options));
    }
    throw ConfigError(fmt::format("unknown scorer '{}' (expected ref or remote:<url>)", spec));
}

}  // namespace qa
