#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qa {

enum class Role : std::uint8_t { query, question, answer };
enum class InputMode : std::uint8_t { query, pair };

std::string_view to_string(Role role) noexcept;
std::string_view to_string(InputMode mode) noexcept;

struct Segment {
    Role role;
    std::string text;

    bool operator==(const Segment&) const = default;
};

/// Role-tagged encoder input. Special tokens are left to the backend; a
/// query is one `query` segment, a stored pair is `question` then `answer`.
class SegmentedInput {
public:
    /// Throws ArgumentError when the text is blank.
    static SegmentedInput query(std::string text);
    /// Throws ArgumentError when the question is blank. The answer may be empty.
    static SegmentedInput pair(std::string question, std::string answer);

    InputMode mode() const noexcept { return mode_; }
    std::span<const Segment> segments() const noexcept { return segments_; }

    bool operator==(const SegmentedInput&) const = default;

private:
    SegmentedInput(InputMode mode, std::vector<Segment> segments)
        : mode_(mode), segments_(std::move(segments)) {}

    InputMode mode_;
    std::vector<Segment> segments_;
};

/// Unit-norm dense vector.
struct Embedding {
    std::vector<float> values;

    std::size_t dim() const noexcept { return values.size(); }
    std::span<const float> view() const noexcept { return values; }

    bool operator==(const Embedding&) const = default;
};

inline constexpr std::size_t kDefaultDim = 768;

/// Scales `values` to unit L2 norm in double precision. Throws
/// ArgumentError on an all-zero vector.
void l2_normalize(std::vector<float>& values);

class Encoder {
public:
    virtual ~Encoder() = default;

    virtual std::size_t dim() const = 0;

    /// Identifies the backend and its parameters; stored next to an index so
    /// queries are encoded by the same model the index was built with.
    virtual std::string describe() const = 0;

    /// Output order matches input order. Either every input is encoded or
    /// the call throws; there are no partial results.
    virtual std::vector<Embedding> encode_batch(std::span<const SegmentedInput> inputs) const = 0;

    Embedding encode_query(std::string_view text) const;
    Embedding encode_pair(std::string_view question, std::string_view answer) const;
};

/// Weights of the reference encoder's secondary channels relative to the
/// question channel (see reference_encode).
struct ReferenceWeights {
    double answer = 1e-4;
    double mode = 1e-4;
};

/// Deterministic stand-in for a neural bi-encoder.
///
/// Each segment is lowercased, whitespace-collapsed and padded with one
/// space on each side; its byte trigrams are hashed with a seeded stable
/// hash into `dim` buckets with a hash-derived sign. Query and question
/// segments share one hash salt (the question channel), so a stored
/// question and the same text asked as a query land on the same buckets.
/// Answer trigrams use their own salt and enter at `weights.answer`; a
/// single mode-salted bucket enters at `weights.mode`. Both secondary
/// channels keep pair order and mode significant while leaving the cosine
/// between a query and its verbatim stored pair within 1e-6 of 1.
///
/// Throws ArgumentError when dim < 8.
Embedding reference_encode(const SegmentedInput& input, std::size_t dim, std::uint64_t seed,
                           ReferenceWeights weights = {});

class ReferenceEncoder final : public Encoder {
public:
    explicit ReferenceEncoder(std::size_t dim = kDefaultDim, std::uint64_t seed = 0, ReferenceWeights weights = {});

    std::size_t dim() const override { return dim_; }
    std::string describe() const override;
    std::vector<Embedding> encode_batch(std::span<const SegmentedInput> inputs) const override;

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    ReferenceWeights weights_;
};

}  // namespace qa
