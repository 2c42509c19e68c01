#include "qa/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/random.hpp"
#include "qa/text.hpp"

namespace qa {

using nlohmann::json;

namespace {

std::string strip_quotes(std::string_view field) {
    field = trim(field);
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
    return std::string(field);
}

ItemKind parse_item_kind(std::string_view text) {
    if (text == "real") return ItemKind::real;
    if (text == "positive_control") return ItemKind::positive_control;
    if (text == "negative_control") return ItemKind::negative_control;
    if (text == "padding_control") return ItemKind::padding_control;
    throw ValidationError(fmt::format("unknown item kind '{}'", text));
}

FinalLabel parse_final_label(std::string_view text) {
    if (text == "0") return FinalLabel::negative;
    if (text == "1") return FinalLabel::positive;
    if (text == "needs_tiebreak") return FinalLabel::needs_tiebreak;
    throw ValidationError(fmt::format("unknown final label '{}'", text));
}

}  // namespace

std::string_view to_string(ItemKind kind) noexcept {
    switch (kind) {
        case ItemKind::real: return "real";
        case ItemKind::positive_control: return "positive_control";
        case ItemKind::negative_control: return "negative_control";
        case ItemKind::padding_control: return "padding_control";
    }
    return "?";
}

std::string_view to_string(Verdict verdict) noexcept {
    return verdict == Verdict::accepted ? "accepted" : "rejected";
}

std::string_view to_string(FinalLabel label) noexcept {
    switch (label) {
        case FinalLabel::negative: return "0";
        case FinalLabel::positive: return "1";
        case FinalLabel::needs_tiebreak: return "needs_tiebreak";
    }
    return "?";
}

json to_json(const TargetProvenance& provenance) {
    json candidates = json::array();
    for (const auto& c : provenance.candidates)
        candidates.push_back({{"pair_id", c.pair_id}, {"question", c.question}, {"answer", c.answer}});
    return {{"target", provenance.target}, {"candidates", std::move(candidates)}};
}

std::vector<TargetProvenance> parse_provenance(std::istream& in) {
    std::vector<TargetProvenance> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        try {
            const json j = json::parse(text);
            TargetProvenance p;
            p.target = j.at("target").get<std::string>();
            for (const auto& c : j.at("candidates"))
                p.candidates.push_back(Candidate{c.at("pair_id").get<std::uint64_t>(),
                                                 c.at("question").get<std::string>(),
                                                 c.at("answer").get<std::string>()});
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ValidationError(fmt::format("provenance: {}", e.what()), line);
        }
    }
    return out;
}

std::vector<RealTriplet> real_triplets(std::span<const TargetProvenance> provenance) {
    std::vector<RealTriplet> out;
    for (std::size_t t = 0; t < provenance.size(); ++t) {
        const auto& p = provenance[t];
        for (std::size_t r = 0; r < p.candidates.size(); ++r) {
            const auto& c = p.candidates[r];
            out.push_back(RealTriplet{Triplet{p.target, c.question, c.answer}, CandidateRef{t, c.pair_id, r}});
        }
    }
    return out;
}

std::vector<AnnotationTask> generate_tasks(std::span<const RealTriplet> real,
                                           std::span<const Triplet> positive_controls,
                                           std::span<const PoolQuestion> question_pool, std::uint64_t seed) {
    if (real.empty()) throw ArgumentError("no real triplets to annotate");
    if (positive_controls.empty()) throw ArgumentError("at least one positive control triplet is required");

    // Negative controls need two questions with different text.
    std::vector<std::size_t> pool;
    {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < question_pool.size(); ++i) {
            if (trim(question_pool[i].question).empty()) continue;
            if (seen.insert(normalize_text(question_pool[i].question)).second) pool.push_back(i);
        }
    }
    if (pool.size() < 2) throw ArgumentError("question pool needs at least two distinct questions");

    Rng rng(seed);
    auto draw_positive = [&] {
        return positive_controls[static_cast<std::size_t>(rng.uniform_index(positive_controls.size()))];
    };

    std::vector<AnnotationTask> tasks;
    for (std::size_t begin = 0; begin < real.size(); begin += kRealPerTask) {
        const std::size_t end = std::min(begin + kRealPerTask, real.size());
        AnnotationTask task;
        task.task_id = fmt::format("task-{:06}", tasks.size());

        for (std::size_t i = begin; i < end; ++i)
            task.items.push_back(TaskItem{real[i].triplet, ItemKind::real, real[i].ref});
        task.items.push_back(TaskItem{draw_positive(), ItemKind::positive_control, std::nullopt});

        const auto a = static_cast<std::size_t>(rng.uniform_index(pool.size()));
        auto b = static_cast<std::size_t>(rng.uniform_index(pool.size() - 1));
        if (b >= a) ++b;
        const auto& first = question_pool[pool[a]];
        const auto& second = question_pool[pool[b]];
        task.items.push_back(
            TaskItem{Triplet{first.question, second.question, second.answer}, ItemKind::negative_control, std::nullopt});

        while (task.items.size() < kTaskSize)
            task.items.push_back(TaskItem{draw_positive(), ItemKind::padding_control, std::nullopt});

        rng.shuffle(std::span(task.items));
        for (std::size_t i = 0; i < task.items.size(); ++i) {
            if (task.items[i].kind == ItemKind::positive_control) task.positive_control = i;
            if (task.items[i].kind == ItemKind::negative_control) task.negative_control = i;
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

void write_worker_tasks(std::ostream& out, std::span<const AnnotationTask> tasks) {
    for (const auto& task : tasks) {
        json items = json::array();
        for (const auto& item : task.items)
            items.push_back({{"target", item.triplet.target},
                             {"question", item.triplet.question},
                             {"answer", item.triplet.answer}});
        out << json{{"task_id", task.task_id}, {"reward_usd", task.reward_usd}, {"items", std::move(items)}}.dump()
            << '\n';
    }
}

void write_answer_key(std::ostream& out, std::span<const AnnotationTask> tasks) {
    for (const auto& task : tasks) {
        json items = json::array();
        for (const auto& item : task.items) {
            json entry = {{"kind", std::string(to_string(item.kind))}};
            if (item.ref) {
                entry["target"] = item.ref->target;
                entry["pair_id"] = item.ref->pair_id;
                entry["rank"] = item.ref->rank;
            }
            items.push_back(std::move(entry));
        }
        out << json{{"task_id", task.task_id},
                    {"positive_control", task.positive_control},
                    {"negative_control", task.negative_control},
                    {"expected_labels", {{"positive", task.expected_positive}, {"negative", task.expected_negative}}},
                    {"items", std::move(items)}}
                   .dump()
            << '\n';
    }
}

std::vector<AnnotationTask> read_tasks(std::istream& worker_tasks, std::istream& answer_key) {
    std::vector<AnnotationTask> tasks;
    std::string task_line;
    std::string key_line;
    std::size_t line = 0;
    while (std::getline(worker_tasks, task_line)) {
        ++line;
        if (trim(task_line).empty()) continue;
        do {
            if (!std::getline(answer_key, key_line))
                throw ValidationError("answer key has fewer tasks than the task file", line);
        } while (trim(key_line).empty());
        try {
            const json t = json::parse(task_line);
            const json k = json::parse(key_line);
            AnnotationTask task;
            task.task_id = t.at("task_id").get<std::string>();
            if (k.at("task_id").get<std::string>() != task.task_id)
                throw ValidationError(fmt::format("answer key task '{}' does not match task '{}'",
                                                  k.at("task_id").get<std::string>(), task.task_id),
                                      line);
            task.reward_usd = t.value("reward_usd", kTaskRewardUsd);
            task.positive_control = k.at("positive_control").get<std::size_t>();
            task.negative_control = k.at("negative_control").get<std::size_t>();
            task.expected_positive = k.at("expected_labels").at("positive").get<int>();
            task.expected_negative = k.at("expected_labels").at("negative").get<int>();
            const auto& items = t.at("items");
            const auto& keys = k.at("items");
            if (items.size() != keys.size() || items.size() != kTaskSize)
                throw ValidationError(fmt::format("task '{}' must have {} items", task.task_id, kTaskSize), line);
            for (std::size_t i = 0; i < items.size(); ++i) {
                TaskItem item;
                item.triplet = Triplet{items[i].at("target").get<std::string>(),
                                       items[i].at("question").get<std::string>(),
                                       items[i].at("answer").get<std::string>()};
                item.kind = parse_item_kind(keys[i].at("kind").get<std::string>());
                if (item.kind == ItemKind::real)
                    item.ref = CandidateRef{keys[i].at("target").get<std::size_t>(),
                                            keys[i].at("pair_id").get<std::uint64_t>(),
                                            keys[i].at("rank").get<std::size_t>()};
                task.items.push_back(std::move(item));
            }
            tasks.push_back(std::move(task));
        } catch (const json::exception& e) {
            throw ValidationError(fmt::format("task file: {}", e.what()), line);
        }
    }
    while (std::getline(answer_key, key_line)) {
        if (!trim(key_line).empty()) throw ValidationError("answer key has more tasks than the task file", line);
    }
    return tasks;
}

std::vector<Judgment> parse_judgments_csv(std::istream& in) {
    std::vector<Judgment> out;
    std::string text;
    std::size_t line = 0;
    bool header = true;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        const auto fields = split(text, ',');
        if (header) {
            header = false;
            if (fields.size() < 3 || strip_quotes(fields[0]) != "task_id" || strip_quotes(fields[1]) != "worker_id" ||
                strip_quotes(fields[2]) != "labels")
                throw ValidationError("judgment CSV header must be task_id,worker_id,labels[,submitted_at]", line);
            continue;
        }
        if (fields.size() < 3 || fields.size() > 4)
            throw ValidationError(fmt::format("expected 3 or 4 fields, got {}", fields.size()), line);
        Judgment j;
        j.task_id = strip_quotes(fields[0]);
        j.worker_id = strip_quotes(fields[1]);
        for (char c : strip_quotes(fields[2])) {
            if (c == '0' || c == '1')
                j.labels.push_back(c - '0');
            else if (c != ' ' && c != ';')
                throw ValidationError(fmt::format("label character '{}' is not 0 or 1", c), line);
        }
        if (j.labels.size() != kTaskSize)
            throw ValidationError(fmt::format("expected {} labels, got {}", kTaskSize, j.labels.size()), line);
        if (fields.size() == 4) j.submitted_at = strip_quotes(fields[3]);
        if (j.task_id.empty() || j.worker_id.empty()) throw ValidationError("empty task_id or worker_id", line);
        out.push_back(std::move(j));
    }
    return out;
}

void write_judgments_csv(std::ostream& out, std::span<const Judgment> judgments) {
    out << "task_id,worker_id,labels,submitted_at\n";
    for (const auto& j : judgments) {
        out << j.task_id << ',' << j.worker_id << ',';
        for (int label : j.labels) out << label;
        out << ',' << j.submitted_at << '\n';
    }
}

bool over_failure_limit(std::size_t assigned, std::size_t failed) noexcept {
    // failed / assigned > 1/10, in integers.
    return failed * 10 > assigned;
}

void WorkerLedger::record(const std::string& worker_id, bool failed) {
    auto& r = records_[worker_id];
    r.worker_id = worker_id;
    ++r.assigned;
    if (failed) ++r.failed;
    r.blacklisted = over_failure_limit(r.assigned, r.failed);
}

const WorkerRecord* WorkerLedger::find(const std::string& worker_id) const {
    auto it = records_.find(worker_id);
    return it == records_.end() ? nullptr : &it->second;
}

Verdict validate_judgment(const AnnotationTask& task, const Judgment& judgment, WorkerLedger& ledger) {
    if (judgment.task_id != task.task_id)
        throw ArgumentError(fmt::format("judgment for '{}' validated against task '{}'", judgment.task_id, task.task_id));
    if (judgment.labels.size() != task.items.size())
        throw ArgumentError(fmt::format("judgment by '{}' on '{}' has {} labels, task has {} items", judgment.worker_id,
                                        task.task_id, judgment.labels.size(), task.items.size()));
    for (int label : judgment.labels) {
        if (label != 0 && label != 1) throw ArgumentError(fmt::format("label {} is not binary", label));
    }
    const bool failed = judgment.labels[task.positive_control] != task.expected_positive ||
                        judgment.labels[task.negative_control] != task.expected_negative;
    ledger.record(judgment.worker_id, failed);
    return failed ? Verdict::rejected : Verdict::accepted;
}

std::vector<ValidatedJudgment> validate_all(std::span<const AnnotationTask> tasks, std::span<const Judgment> judgments,
                                            WorkerLedger& ledger) {
    std::map<std::string, const AnnotationTask*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;
    std::vector<ValidatedJudgment> out;
    out.reserve(judgments.size());
    for (const auto& j : judgments) {
        auto it = by_id.find(j.task_id);
        if (it == by_id.end()) throw ArgumentError(fmt::format("judgment references unknown task '{}'", j.task_id));
        out.push_back(ValidatedJudgment{j, validate_judgment(*it->second, j, ledger)});
    }
    return out;
}

BlacklistResult apply_blacklist(const WorkerLedger& ledger, std::span<const ValidatedJudgment> judgments) {
    BlacklistResult result;
    for (const auto& [id, record] : ledger.records()) {
        if (over_failure_limit(record.assigned, record.failed)) result.blacklisted.insert(id);
    }
    for (const auto& v : judgments) {
        if (result.blacklisted.count(v.judgment.worker_id))
            result.discarded.insert(JudgmentKey{v.judgment.worker_id, v.judgment.task_id});
    }
    return result;
}

FinalLabel aggregate_labels(std::span<const int> votes) {
    if (votes.empty()) throw InsufficientDataError("no surviving votes to aggregate");
    std::size_t positive = 0;
    for (int v : votes) {
        if (v != 0 && v != 1) throw ArgumentError(fmt::format("vote {} is not binary", v));
        positive += static_cast<std::size_t>(v);
    }
    const std::size_t negative = votes.size() - positive;
    if (positive == negative) return FinalLabel::needs_tiebreak;
    return positive > negative ? FinalLabel::positive : FinalLabel::negative;
}

std::vector<AggregatedLabel> aggregate(std::span<const AnnotationTask> tasks,
                                       std::span<const ValidatedJudgment> judgments, const BlacklistResult& blacklist) {
    std::map<std::string, const AnnotationTask*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;

    // (target, pair_id) -> rank, worker -> vote
    std::map<std::pair<std::size_t, std::uint64_t>, std::pair<CandidateRef, std::map<std::string, int>>> votes;
    for (const auto& t : tasks) {
        for (const auto& item : t.items) {
            if (item.kind == ItemKind::real) votes.try_emplace(item.ref->key(), *item.ref, std::map<std::string, int>{});
        }
    }
    for (const auto& v : judgments) {
        if (v.verdict != Verdict::accepted) continue;
        if (blacklist.discarded.count(JudgmentKey{v.judgment.worker_id, v.judgment.task_id})) continue;
        if (blacklist.blacklisted.count(v.judgment.worker_id)) continue;
        auto it = by_id.find(v.judgment.task_id);
        if (it == by_id.end()) continue;
        const auto& task = *it->second;
        for (std::size_t i = 0; i < task.items.size(); ++i) {
            if (task.items[i].kind != ItemKind::real) continue;
            votes.at(task.items[i].ref->key()).second[v.judgment.worker_id] = v.judgment.labels[i];
        }
    }

    std::vector<AggregatedLabel> out;
    out.reserve(votes.size());
    for (auto& [key, entry] : votes) {
        AggregatedLabel label;
        label.ref = entry.first;
        for (const auto& [worker, vote] : entry.second) label.votes.push_back(vote);
        if (!label.votes.empty()) label.label = aggregate_labels(label.votes);
        out.push_back(std::move(label));
    }
    std::sort(out.begin(), out.end(), [](const AggregatedLabel& a, const AggregatedLabel& b) {
        return std::pair(a.ref.target, a.ref.rank) < std::pair(b.ref.target, b.ref.rank);
    });
    return out;
}

json to_json(const AggregatedLabel& label) {
    return {{"target", label.ref.target},
            {"pair_id", label.ref.pair_id},
            {"rank", label.ref.rank},
            {"votes", label.votes},
            {"label", label.label ? json(std::string(to_string(*label.label))) : json(nullptr)}};
}

AggregatedLabel aggregated_label_from_json(const json& j) {
    AggregatedLabel label;
    label.ref = CandidateRef{j.at("target").get<std::size_t>(), j.at("pair_id").get<std::uint64_t>(),
                             j.at("rank").get<std::size_t>()};
    label.votes = j.at("votes").get<std::vector<int>>();
    if (!j.at("label").is_null()) label.label = parse_final_label(j.at("label").get<std::string>());
    return label;
}

SplitProportions parse_split_proportions(std::string_view text) {
    const auto parts = split(text, ',');
    if (parts.size() != 3) throw ArgumentError(fmt::format("splits '{}' must be three fractions train,dev,test", text));
    double values[3];
    for (std::size_t i = 0; i < 3; ++i) {
        try {
            std::size_t used = 0;
            values[i] = std::stod(parts[i], &used);
            if (used != parts[i].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ArgumentError(fmt::format("split fraction '{}' is not a number", parts[i]));
        }
        if (values[i] < 0.0) throw ArgumentError("split fractions must be non-negative");
    }
    if (std::abs(values[0] + values[1] + values[2] - 1.0) > 1e-6)
        throw ArgumentError(fmt::format("split fractions '{}' do not sum to 1", text));
    return SplitProportions{values[0], values[1], values[2]};
}

std::array<std::size_t, 3> split_counts(const SplitProportions& p, std::size_t n) {
    const double shares[3] = {p.train * static_cast<double>(n), p.dev * static_cast<double>(n),
                              p.test * static_cast<double>(n)};
    std::array<std::size_t, 3> counts{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        counts[i] = static_cast<std::size_t>(std::floor(shares[i] + 1e-9));
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return shares[a] - static_cast<double>(counts[a]) > shares[b] - static_cast<double>(counts[b]);
    });
    for (std::size_t i = 0; assigned < n; i = (i + 1) % 3, ++assigned) ++counts[order[i]];
    return counts;
}

std::vector<RankingExample> export_ranking_dataset(std::span<const AggregatedLabel> labels,
                                                   std::span<const TargetProvenance> provenance,
                                                   const SplitProportions& proportions, std::uint64_t seed) {
    std::map<std::pair<std::size_t, std::uint64_t>, const AggregatedLabel*> by_key;
    for (const auto& l : labels) by_key[l.ref.key()] = &l;

    std::vector<RankingExample> examples(provenance.size());
    for (std::size_t t = 0; t < provenance.size(); ++t) {
        examples[t].target = provenance[t].target;
        for (const auto& c : provenance[t].candidates) {
            auto it = by_key.find({t, c.pair_id});
            if (it == by_key.end() || !it->second->label)
                throw ExportError(fmt::format("target {} candidate {} has no label", t, c.pair_id));
            if (*it->second->label == FinalLabel::needs_tiebreak)
                throw ExportError(fmt::format("target {} candidate {} still needs a tie-break vote", t, c.pair_id));
            examples[t].candidates.push_back(LabeledCandidate{c.pair_id, c.question, c.answer,
                                                              *it->second->label == FinalLabel::positive ? 1 : 0});
        }
    }

    const auto counts = split_counts(proportions, provenance.size());
    std::vector<std::size_t> order(provenance.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span(order));

    std::size_t dev_left = counts[1];
    std::size_t test_left = counts[2];
    for (auto t : order) {
        auto& ex = examples[t];
        ex.split = Split::train;
        if (ex.candidates.size() != kPoolSize) continue;
        if (dev_left > 0) {
            ex.split = Split::dev;
            --dev_left;
        } else if (test_left > 0) {
            ex.split = Split::test;
            --test_left;
        }
    }
    for (std::size_t t = 0; t < examples.size(); ++t) {
        try {
            validate_example(examples[t]);
        } catch (const ValidationError& e) {
            throw ExportError(fmt::format("target {}: {}", t, e.what()));
        }
    }
    return examples;
}

}  // namespace qa
