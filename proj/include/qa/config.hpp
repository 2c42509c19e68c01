#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "qa/encoder.hpp"
#include "qa/reranker.hpp"

namespace qa {

using KeyValues = std::map<std::string, std::string>;

/// Settings shared by every subcommand. Resolved from, highest first:
/// command-line flags, QA_* environment variables, the config file, then
/// these defaults.
///
/// Config file keys (one `key = value` per line, `#` comments):
///   store, index, encoder, scorer, dim, k, layout, threshold, seed
struct EngineConfig {
    std::filesystem::path store = "qa-store";
    std::optional<std::filesystem::path> index;
    /// "ref", "ref:<seed>" or "remote:<url>". Empty means: whatever the
    /// index was built with, else "ref".
    std::string encoder;
    /// "ref" or "remote:<url>".
    std::string scorer = "ref";
    std::optional<std::size_t> dim;
    std::size_t k = 500;
    Layout layout = Layout::QAQ;
    std::optional<double> threshold;
    std::optional<std::uint64_t> seed;

    std::filesystem::path index_path() const { return index ? *index : store / "vectors.idx"; }
};

/// Parses `key = value` lines. Throws ConfigError naming the line on
/// anything else.
KeyValues parse_config_file(std::istream& in);

/// Maps QA_STORE, QA_INDEX, QA_ENCODER_URL, QA_SCORER_URL, QA_DIM and
/// QA_SEED onto config keys.
KeyValues environment_settings(const std::function<std::optional<std::string>(const std::string&)>& getenv);

/// Applies key/value settings on top of `config`. Throws ConfigError on an
/// unknown key or a malformed value; `origin` names the layer in messages.
void apply_settings(EngineConfig& config, const KeyValues& settings, const std::string& origin);

EngineConfig resolve_config(const KeyValues& file, const KeyValues& environment, const KeyValues& flags);

/// Throws ConfigError for an unrecognized spec.
std::unique_ptr<Encoder> make_encoder(const std::string& spec, std::size_t dim);
std::unique_ptr<Scorer> make_scorer(const std::string& spec);

}  // namespace qa
