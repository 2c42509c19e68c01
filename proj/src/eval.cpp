#include "qa/eval.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/text.hpp"

namespace qa {

using nlohmann::json;

std::string_view to_string(Split split) noexcept {
    switch (split) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "dev") return Split::dev;
    if (text == "test") return Split::test;
    throw ArgumentError(fmt::format("unknown split '{}'", text));
}

json to_json(const RankingExample& example) {
    json candidates = json::array();
    for (const auto& c : example.candidates)
        candidates.push_back(
            {{"pair_id", c.pair_id}, {"question", c.question}, {"answer", c.answer}, {"label", c.label}});
    return {{"target", example.target},
            {"split", std::string(to_string(example.split))},
            {"candidates", std::move(candidates)}};
}

void validate_example(const RankingExample& example, std::size_t line) {
    if (trim(example.target).empty()) throw ValidationError("target must not be empty", line);
    const auto n = example.candidates.size();
    if (example.split == Split::train) {
        if (n == 0 || n > kPoolSize)
            throw ValidationError(fmt::format("train example has {} candidates, expected 1..{}", n, kPoolSize), line);
    } else if (n != kPoolSize) {
        throw ValidationError(fmt::format("{} example has {} candidates, expected exactly {}",
                                          to_string(example.split), n, kPoolSize),
                              line);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int label = example.candidates[i].label;
        if (label != 0 && label != 1)
            throw ValidationError(fmt::format("candidate {} has label {}, expected 0 or 1", i, label), line);
    }
}

std::vector<RankingExample> parse_dataset(std::istream& in) {
    std::vector<RankingExample> examples;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        const json j = json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ValidationError("not a JSON object", line);
        RankingExample ex;
        try {
            ex.target = j.at("target").get<std::string>();
            ex.split = parse_split(j.at("split").get<std::string>());
            for (const auto& c : j.at("candidates")) {
                LabeledCandidate cand;
                cand.pair_id = c.at("pair_id").get<std::uint64_t>();
                cand.question = c.at("question").get<std::string>();
                cand.answer = c.at("answer").get<std::string>();
                const auto& label = c.at("label");
                if (!label.is_number_integer()) throw ValidationError("label must be an integer", line);
                cand.label = label.get<int>();
                ex.candidates.push_back(std::move(cand));
            }
        } catch (const json::exception& e) {
            throw ValidationError(fmt::format("schema error: {}", e.what()), line);
        } catch (const ArgumentError& e) {
            throw ValidationError(e.what(), line);
        }
        validate_example(ex, line);
        examples.push_back(std::move(ex));
    }
    return examples;
}

std::vector<RankingExample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError(fmt::format("dataset {} not found", path.string()));
    return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const RankingExample> examples) {
    for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

double average_precision(std::span<const int> labels) {
    if (labels.empty()) throw ArgumentError("average precision of an empty ranking");
    double sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            ++positives;
            sum += static_cast<double>(positives) / static_cast<double>(i + 1);
        }
    }
    return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

double reciprocal_rank(std::span<const int> labels) {
    if (labels.empty()) throw ArgumentError("reciprocal rank of an empty ranking");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

int hit_at_k(std::span<const int> labels, std::size_t k) {
    if (k == 0) throw ArgumentError("hit@k needs k >= 1");
    const auto end = labels.begin() + static_cast<std::ptrdiff_t>(std::min(k, labels.size()));
    return std::find(labels.begin(), end, 1) != end ? 1 : 0;
}

std::vector<int> ranked_labels(const RankingExample& example, std::span<const double> scores) {
    const auto& cands = example.candidates;
    if (scores.size() != cands.size())
        throw ArgumentError(fmt::format("example '{}' has {} candidates but {} scores", example.target, cands.size(),
                                        scores.size()));
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && cands[a].pair_id < cands[b].pair_id);
    });
    std::vector<int> labels;
    labels.reserve(order.size());
    for (auto i : order) labels.push_back(cands[i].label);
    return labels;
}

MetricsReport evaluate(std::span<const RankingExample> dataset, std::span<const std::vector<double>> scores,
                       std::span<const std::size_t> hit_ks) {
    if (scores.size() != dataset.size())
        throw ArgumentError(fmt::format("{} score lists for {} examples", scores.size(), dataset.size()));

    std::vector<std::size_t> ks(hit_ks.begin(), hit_ks.end());
    if (std::find(ks.begin(), ks.end(), 1) == ks.end()) ks.push_back(1);

    MetricsReport report;
    report.n_queries = dataset.size();
    for (auto k : ks) report.hit_at_k[k] = 0.0;

    for (std::size_t e = 0; e < dataset.size(); ++e) {
        const auto labels = ranked_labels(dataset[e], scores[e]);
        if (labels.empty()) {
            ++report.n_zero_positive;
            continue;
        }
        if (std::find(labels.begin(), labels.end(), 1) == labels.end()) ++report.n_zero_positive;
        report.map += average_precision(labels);
        report.mrr += reciprocal_rank(labels);
        for (auto k : ks) report.hit_at_k[k] += hit_at_k(labels, k);
    }
    if (report.n_queries > 0) {
        const auto n = static_cast<double>(report.n_queries);
        report.map /= n;
        report.mrr /= n;
        for (auto& [k, v] : report.hit_at_k) v /= n;
    }
    report.p_at_1 = report.hit_at_k.at(1);
    return report;
}

std::vector<std::vector<double>> identity_scores(std::span<const RankingExample> dataset) {
    std::vector<std::vector<double>> out;
    out.reserve(dataset.size());
    for (const auto& ex : dataset) {
        std::vector<double> s(ex.candidates.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = -static_cast<double>(i);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::vector<double>> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError(fmt::format("score file {} not found", path.string()));
    std::vector<std::vector<double>> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        json j = json::parse(text, nullptr, false);
        if (j.is_object() && j.contains("scores")) j = j["scores"];
        if (!j.is_array()) throw ValidationError("expected a JSON array of scores", line);
        try {
            out.push_back(j.get<std::vector<double>>());
        } catch (const json::exception&) {
            throw ValidationError("scores must be numbers", line);
        }
    }
    return out;
}

json to_json(const MetricsReport& report) {
    json hits = json::object();
    for (const auto& [k, v] : report.hit_at_k) hits[std::to_string(k)] = v;
    return {{"p_at_1", report.p_at_1},
            {"map", report.map},
            {"mrr", report.mrr},
            {"hit_at_k", std::move(hits)},
            {"n_queries", report.n_queries},
            {"n_zero_positive", report.n_zero_positive}};
}

std::string format_table(const MetricsReport& report) {
    std::string out;
    out += fmt::format("{:<12} {:>8}\n", "metric", "value");
    out += fmt::format("{:<12} {:>8.2f}\n", "P@1", 100.0 * report.p_at_1);
    out += fmt::format("{:<12} {:>8.2f}\n", "MAP", 100.0 * report.map);
    out += fmt::format("{:<12} {:>8.2f}\n", "MRR", 100.0 * report.mrr);
    for (const auto& [k, v] : report.hit_at_k) out += fmt::format("{:<12} {:>8.2f}\n", fmt::format("Hit@{}", k), 100.0 * v);
    out += fmt::format("{:<12} {:>8}\n", "queries", report.n_queries);
    out += fmt::format("{:<12} {:>8}\n", "no positive", report.n_zero_positive);
    return out;
}

}  // namespace qa
