#include "qa/store.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/random.hpp"
#include "qa/text.hpp"

namespace qa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dedup_key(std::string_view question, std::string_view answer) {
    std::string key = normalize_text(question);
    key.push_back('\x1f');
    key += normalize_text(answer);
    return key;
}

std::int64_t now_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

QAPair pair_from_json(const json& j) {
    QAPair pair;
    pair.id = j.at("id").get<std::uint64_t>();
    pair.question = j.at("question").get<std::string>();
    pair.answer = j.at("answer").get<std::string>();
    pair.source = j.at("source").get<std::string>();
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) pair.quality_score = it->get<double>();
    pair.ingested_at = j.value("ingested_at", std::int64_t{0});
    return pair;
}

bool record_valid(const RawRecord& r) {
    if (r.malformed || !r.question || !r.answer) return false;
    if (trim(*r.question).empty()) return false;
    if (r.score && (!std::isfinite(*r.score) || *r.score < 0.0 || *r.score > 1.0)) return false;
    return true;
}

fs::path segment_path(const fs::path& dir, std::size_t n) {
    return dir / "segments" / fmt::format("{:04}.jsonl", n);
}

}  // namespace

json to_json(const QAPair& pair) {
    json j = {{"id", pair.id},
              {"question", pair.question},
              {"answer", pair.answer},
              {"source", pair.source}};
    if (pair.quality_score) j["score"] = *pair.quality_score;
    j["ingested_at"] = pair.ingested_at;
    return j;
}

json to_json(const IngestReport& report) {
    return {{"read", report.read},
            {"kept", report.kept},
            {"dropped_filter", report.dropped_filter},
            {"dropped_duplicate", report.dropped_duplicate},
            {"dropped_invalid", report.dropped_invalid}};
}

RawRecord parse_record(std::string_view line) {
    RawRecord record;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        record.malformed = true;
        return record;
    }
    auto text_field = [&](const char* key) -> std::optional<std::string> {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) return std::nullopt;
        return it->get<std::string>();
    };
    record.question = text_field("question");
    record.answer = text_field("answer");
    record.source = text_field("source");
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
        if (it->is_number())
            record.score = it->get<double>();
        else
            record.malformed = true;
    }
    return record;
}

void SourceConfig::validate() const {
    if (name.empty()) throw ConfigError("source name must not be empty");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ConfigError(fmt::format("keep fraction {} for source '{}' is outside (0, 1]", keep_fraction, name));
    if (keep_fraction < 1.0 && !requires_score)
        throw ConfigError(fmt::format("source '{}' filters by score but does not require one", name));
}

std::size_t filter_keep_count(double keep_fraction, std::size_t valid) noexcept {
    if (keep_fraction >= 1.0) return valid;
    // The epsilon absorbs products such as 0.1 * 30 = 3.0000000000000004.
    const double raw = keep_fraction * static_cast<double>(valid) - 1e-9;
    const auto count = static_cast<std::size_t>(std::max(0.0, std::ceil(raw)));
    return std::min(count, valid);
}

QAStore::QAStore() = default;

QAStore::QAStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(*dir_ / "segments");
    replay();
    write_index();
}

void QAStore::replay() {
    std::vector<std::pair<std::size_t, fs::path>> segments;
    for (const auto& entry : fs::directory_iterator(*dir_ / "segments")) {
        if (entry.path().extension() != ".jsonl") continue;
        const auto stem = entry.path().stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) continue;
        segments.emplace_back(std::stoull(stem), entry.path());
    }
    std::sort(segments.begin(), segments.end());

    for (const auto& [number, path] : segments) {
        std::ifstream in(path, std::ios::binary);
        std::string line;
        std::uint64_t offset = 0;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto line_offset = offset;
            offset += line.size() + 1;
            if (trim(line).empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object())
                throw FormatError(fmt::format("{}:{}: unreadable segment line", path.string(), line_no));
            if (auto it = j.find("segment"); it != j.end()) {
                if (auto src = it->find("source"); src != it->end()) {
                    const auto name = src->get<std::string>();
                    if (std::find(sources_.begin(), sources_.end(), name) == sources_.end())
                        sources_.push_back(name);
                }
                continue;
            }
            if (auto it = j.find("remove"); it != j.end()) {
                const auto id = it->get<std::uint64_t>();
                pairs_.erase(id);
                locations_.erase(id);
                continue;
            }
            QAPair pair = pair_from_json(j);
            keys_.insert(dedup_key(pair.question, pair.answer));
            if (std::find(sources_.begin(), sources_.end(), pair.source) == sources_.end())
                sources_.push_back(pair.source);
            next_id_ = std::max(next_id_, pair.id + 1);
            locations_[pair.id] = Location{number, line_offset};
            pairs_.emplace(pair.id, std::move(pair));
        }
        segment_count_ = std::max(segment_count_, number + 1);
    }
}

void QAStore::write_segment(const std::string& content) {
    const auto path = segment_path(*dir_, segment_count_);
    const auto tmp = fs::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.flush();
        if (!out) throw FormatError("failed to write segment " + tmp.string());
    }
    fs::rename(tmp, path);
    ++segment_count_;
}

void QAStore::write_index() const {
    if (!dir_) return;
    const auto path = *dir_ / "index";
    const auto tmp = fs::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << fmt::format("# qa-store index v1 next_id={} segments={} live={}\n", next_id_, segment_count_,
                           pairs_.size());
        for (const auto& [id, loc] : locations_) out << id << '\t' << loc.segment << '\t' << loc.offset << '\n';
        if (!out) throw FormatError("failed to write store index " + tmp.string());
    }
    fs::rename(tmp, path);
}

IngestReport QAStore::ingest(std::span<const RawRecord> records, const SourceConfig& config) {
    config.validate();

    IngestReport report;
    report.read = records.size();

    std::vector<std::size_t> valid;
    valid.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (record_valid(records[i]))
            valid.push_back(i);
        else
            ++report.dropped_invalid;
    }
    if (config.requires_score) {
        for (auto i : valid) {
            if (!records[i].score)
                throw ConfigError(fmt::format("source '{}' requires a score but record {} has none; batch rejected",
                                              config.name, i + 1));
        }
    }

    std::vector<std::size_t> survivors = valid;
    if (config.keep_fraction < 1.0) {
        std::stable_sort(survivors.begin(), survivors.end(),
                         [&](std::size_t a, std::size_t b) { return *records[a].score > *records[b].score; });
        survivors.resize(filter_keep_count(config.keep_fraction, valid.size()));
        std::sort(survivors.begin(), survivors.end());
    }
    report.dropped_filter = valid.size() - survivors.size();

    std::unique_lock lock(mutex_);
    if (std::find(sources_.begin(), sources_.end(), config.name) == sources_.end())
        sources_.push_back(config.name);

    const auto timestamp = now_seconds();
    std::vector<QAPair> accepted;
    std::unordered_set<std::string> batch_keys;
    for (auto i : survivors) {
        const auto& r = records[i];
        auto key = dedup_key(*r.question, *r.answer);
        if (keys_.count(key) || !batch_keys.insert(key).second) {
            ++report.dropped_duplicate;
            continue;
        }
        QAPair pair;
        pair.id = next_id_ + accepted.size();
        pair.question = *r.question;
        pair.answer = *r.answer;
        pair.source = (r.source && !r.source->empty()) ? *r.source : config.name;
        pair.quality_score = r.score;
        pair.ingested_at = timestamp;
        accepted.push_back(std::move(pair));
    }
    report.kept = accepted.size();

    std::vector<std::uint64_t> offsets;
    if (dir_) {
        std::string content;
        content += json{{"segment", {{"kind", "ingest"}, {"source", config.name}, {"keep_fraction", config.keep_fraction}}}}
                       .dump();
        content.push_back('\n');
        for (const auto& pair : accepted) {
            offsets.push_back(content.size());
            content += to_json(pair).dump();
            content.push_back('\n');
        }
        write_segment(content);
    }

    for (std::size_t i = 0; i < accepted.size(); ++i) {
        auto& pair = accepted[i];
        keys_.insert(dedup_key(pair.question, pair.answer));
        if (std::find(sources_.begin(), sources_.end(), pair.source) == sources_.end())
            sources_.push_back(pair.source);
        if (dir_) locations_[pair.id] = Location{segment_count_ - 1, offsets[i]};
        pairs_.emplace(pair.id, std::move(pair));
    }
    next_id_ += accepted.size();
    write_index();
    return report;
}

IngestReport QAStore::ingest_jsonl(std::istream& in, const SourceConfig& config) {
    std::vector<RawRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        records.push_back(parse_record(line));
    }
    return ingest(records, config);
}

QAPair QAStore::get_pair(std::uint64_t id) const {
    auto pair = find(id);
    if (!pair) throw NotFoundError(fmt::format("no pair with id {}", id));
    return *std::move(pair);
}

std::optional<QAPair> QAStore::find(std::uint64_t id) const {
    std::shared_lock lock(mutex_);
    auto it = pairs_.find(id);
    if (it == pairs_.end()) return std::nullopt;
    return it->second;
}

bool QAStore::contains(std::uint64_t id) const {
    std::shared_lock lock(mutex_);
    return pairs_.count(id) != 0;
}

std::vector<QAPair> QAStore::sample_locked(std::size_t n, std::uint64_t seed) const {
    if (n > pairs_.size())
        throw ArgumentError(fmt::format("cannot sample {} pairs from a store of {}", n, pairs_.size()));
    std::vector<std::uint64_t> ids;
    ids.reserve(pairs_.size());
    for (const auto& [id, pair] : pairs_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    // Partial Fisher-Yates: the first n slots end up a uniform sample.
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());

    std::vector<QAPair> out;
    out.reserve(n);
    for (auto id : ids) out.push_back(pairs_.at(id));
    return out;
}

std::vector<QAPair> QAStore::sample(std::size_t n, std::uint64_t seed) const {
    std::shared_lock lock(mutex_);
    return sample_locked(n, seed);
}

std::vector<QAPair> QAStore::sample_and_remove(std::size_t n, std::uint64_t seed) {
    std::unique_lock lock(mutex_);
    auto sampled = sample_locked(n, seed);
    if (dir_ && !sampled.empty()) {
        std::string content =
            json{{"segment", {{"kind", "remove"}, {"n", n}, {"seed", seed}}}}.dump() + "\n";
        for (const auto& pair : sampled) content += json{{"remove", pair.id}}.dump() + "\n";
        write_segment(content);
    }
    // Removed pairs keep their dedup keys: re-ingesting a removed pair is
    // treated as a duplicate so a held-out question cannot leak back in.
    for (const auto& pair : sampled) {
        pairs_.erase(pair.id);
        locations_.erase(pair.id);
    }
    write_index();
    return sampled;
}

void QAStore::check_source_locked(const std::optional<std::string>& source) const {
    if (source && std::find(sources_.begin(), sources_.end(), *source) == sources_.end())
        throw ArgumentError(fmt::format("unknown source label '{}'", *source));
}

std::vector<QAPair> QAStore::pairs(const std::optional<std::string>& source) const {
    std::shared_lock lock(mutex_);
    check_source_locked(source);
    std::vector<QAPair> out;
    out.reserve(pairs_.size());
    for (const auto& [id, pair] : pairs_) {
        if (!source || pair.source == *source) out.push_back(pair);
    }
    std::sort(out.begin(), out.end(), [](const QAPair& a, const QAPair& b) { return a.id < b.id; });
    return out;
}

void QAStore::export_pairs(std::ostream& out, const std::optional<std::string>& source) const {
    for (const auto& pair : pairs(source)) out << to_json(pair).dump() << '\n';
}

std::size_t QAStore::size() const {
    std::shared_lock lock(mutex_);
    return pairs_.size();
}

std::vector<std::string> QAStore::sources() const {
    std::shared_lock lock(mutex_);
    return sources_;
}

}  // namespace qa
