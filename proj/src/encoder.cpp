#include "qa/encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/text.hpp"

namespace qa {

namespace {

// Hash salts. Query and question share one salt (see header).
constexpr std::uint64_t kQuestionChannel = 0x5155455354494f4eULL;
constexpr std::uint64_t kAnswerChannel = 0x414e5357455253ULL;
constexpr std::uint64_t kModeChannel = 0x4d4f4445ULL;

std::uint64_t channel_salt(Role role) noexcept {
    return role == Role::answer ? kAnswerChannel : kQuestionChannel;
}

void add_trigrams(std::vector<double>& acc, std::string_view text, std::uint64_t seed, std::uint64_t salt,
                  double weight) {
    if (trim(text).empty()) return;
    const std::string padded = " " + normalize_text(text) + " ";
    const std::uint64_t channel_seed = mix64(seed ^ salt);
    const std::size_t dim = acc.size();
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const auto h = stable_hash(std::string_view(padded).substr(i, 3), channel_seed);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        acc[h % dim] += sign * weight;
    }
}

}  // namespace

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::query: return "query";
        case Role::question: return "question";
        case Role::answer: return "answer";
    }
    return "?";
}

std::string_view to_string(InputMode mode) noexcept {
    return mode == InputMode::query ? "query" : "pair";
}

SegmentedInput SegmentedInput::query(std::string text) {
    if (trim(text).empty()) throw ArgumentError("query text must not be empty");
    return SegmentedInput(InputMode::query, {Segment{Role::query, std::move(text)}});
}

SegmentedInput SegmentedInput::pair(std::string question, std::string answer) {
    if (trim(question).empty()) throw ArgumentError("pair question must not be empty");
    return SegmentedInput(InputMode::pair,
                          {Segment{Role::question, std::move(question)}, Segment{Role::answer, std::move(answer)}});
}

void l2_normalize(std::vector<float>& values) {
    double sum = 0.0;
    for (float v : values) sum += static_cast<double>(v) * v;
    if (sum == 0.0) throw ArgumentError("cannot normalize a zero vector");
    const double norm = std::sqrt(sum);
    for (float& v : values) v = static_cast<float>(v / norm);
}

Embedding Encoder::encode_query(std::string_view text) const {
    const SegmentedInput input = SegmentedInput::query(std::string(text));
    return std::move(encode_batch(std::span(&input, 1)).at(0));
}

Embedding Encoder::encode_pair(std::string_view question, std::string_view answer) const {
    const SegmentedInput input = SegmentedInput::pair(std::string(question), std::string(answer));
    return std::move(encode_batch(std::span(&input, 1)).at(0));
}

Embedding reference_encode(const SegmentedInput& input, std::size_t dim, std::uint64_t seed,
                           ReferenceWeights weights) {
    if (dim < 8) throw ArgumentError(fmt::format("reference encoder needs dim >= 8, got {}", dim));

    std::vector<double> acc(dim, 0.0);
    for (const auto& segment : input.segments()) {
        const double weight = segment.role == Role::answer ? weights.answer : 1.0;
        add_trigrams(acc, segment.text, seed, channel_salt(segment.role), weight);
    }
    const auto mode_hash = stable_hash(to_string(input.mode()), mix64(seed ^ kModeChannel));
    acc[mode_hash % dim] += ((mode_hash >> 63) ? -1.0 : 1.0) * weights.mode;

    double sum = 0.0;
    for (double v : acc) sum += v * v;
    if (sum == 0.0) {
        acc[mode_hash % dim] = 1.0;
        sum = 1.0;
    }
    const double norm = std::sqrt(sum);

    Embedding out;
    out.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
    return out;
}

ReferenceEncoder::ReferenceEncoder(std::size_t dim, std::uint64_t seed, ReferenceWeights weights)
    : dim_(dim), seed_(seed), weights_(weights) {
    if (dim_ < 8) throw ArgumentError(fmt::format("reference encoder needs dim >= 8, got {}", dim_));
}

std::string ReferenceEncoder::describe() const {
    return fmt::format("ref:{}", seed_);
}

std::vector<Embedding> ReferenceEncoder::encode_batch(std::span<const SegmentedInput> inputs) const {
    std::vector<Embedding> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) out.push_back(reference_encode(input, dim_, seed_, weights_));
    return out;
}

}  // namespace qa
