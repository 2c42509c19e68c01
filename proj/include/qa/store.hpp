#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace qa {

/// A stored question with its answer; the unit of retrieval.
struct QAPair {
    std::uint64_t id = 0;
    std::string question;
    std::string answer;
    std::string source;
    std::optional<double> quality_score;
    std::int64_t ingested_at = 0;  ///< unix seconds

    bool operator==(const QAPair&) const = default;
};

nlohmann::json to_json(const QAPair& pair);

/// One line of an ingest file before validation. Absent keys stay empty;
/// `malformed` marks lines that were not a JSON object at all.
struct RawRecord {
    std::optional<std::string> question;
    std::optional<std::string> answer;
    std::optional<std::string> source;
    std::optional<double> score;
    bool malformed = false;
};

RawRecord parse_record(std::string_view line);

struct SourceConfig {
    std::string name;
    double keep_fraction = 1.0;
    bool requires_score = false;

    /// Throws ConfigError when keep_fraction is outside (0, 1] or is below 1
    /// for a source that carries no score.
    void validate() const;
};

struct IngestReport {
    std::size_t read = 0;
    std::size_t kept = 0;
    std::size_t dropped_filter = 0;
    std::size_t dropped_duplicate = 0;
    std::size_t dropped_invalid = 0;

    bool balanced() const noexcept {
        return read == kept + dropped_filter + dropped_duplicate + dropped_invalid;
    }
};

nlohmann::json to_json(const IngestReport& report);

/// Number of records the quality filter retains out of `valid` records.
std::size_t filter_keep_count(double keep_fraction, std::size_t valid) noexcept;

/// Question/answer store with source-aware ingestion.
///
/// Either purely in memory or backed by a directory:
///
///     <dir>/segments/0000.jsonl   one segment per mutation (append-only)
///     <dir>/index                 id -> segment:offset, rebuilt on open
///
/// Segment lines are either a pair record or `{"remove": <id>}`. Replaying
/// every segment in order reproduces the store, so the index file is a
/// derived artifact.
///
/// Single writer, many readers: ingest and sample_and_remove take the
/// exclusive lock, every read takes the shared lock and copies out.
class QAStore {
public:
    QAStore();
    explicit QAStore(std::filesystem::path dir);

    QAStore(const QAStore&) = delete;
    QAStore& operator=(const QAStore&) = delete;

    IngestReport ingest(std::span<const RawRecord> records, const SourceConfig& config);
    IngestReport ingest_jsonl(std::istream& in, const SourceConfig& config);

    QAPair get_pair(std::uint64_t id) const;
    std::optional<QAPair> find(std::uint64_t id) const;
    bool contains(std::uint64_t id) const;

    /// Uniform sample of n live pairs, returned in id order. Does not mutate.
    std::vector<QAPair> sample(std::size_t n, std::uint64_t seed) const;
    std::vector<QAPair> sample_and_remove(std::size_t n, std::uint64_t seed);

    /// Live pairs in id order, optionally restricted to one source label.
    std::vector<QAPair> pairs(const std::optional<std::string>& source = std::nullopt) const;
    void export_pairs(std::ostream& out, const std::optional<std::string>& source = std::nullopt) const;

    std::size_t size() const;
    std::vector<std::string> sources() const;
    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    struct Location {
        std::size_t segment = 0;
        std::uint64_t offset = 0;
    };

    void replay();
    void write_segment(const std::string& content);
    void write_index() const;
    std::vector<QAPair> sample_locked(std::size_t n, std::uint64_t seed) const;
    void check_source_locked(const std::optional<std::string>& source) const;

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::uint64_t, QAPair> pairs_;
    std::map<std::uint64_t, Location> locations_;
    std::unordered_set<std::string> keys_;
    std::vector<std::string> sources_;
    std::uint64_t next_id_ = 0;
    std::size_t segment_count_ = 0;
};

}  // namespace qa
