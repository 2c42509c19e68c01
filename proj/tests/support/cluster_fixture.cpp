#include "cluster_fixture.hpp"

#include <set>
#include <unordered_map>

#include "qa/random.hpp"

namespace qa::testing {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};

class WordSource {
public:
    explicit WordSource(std::uint64_t seed) : rng_(seed) {}

    /// A fresh pseudo-word of three syllables, never repeated.
    std::string next() {
        for (;;) {
            std::string w;
            for (int s = 0; s < 3; ++s) {
                w += kOnsets[rng_.uniform_index(std::size(kOnsets))];
                w += kVowels[rng_.uniform_index(std::size(kVowels))];
            }
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> take(std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(next());
        return out;
    }

private:
    Rng rng_;
    std::set<std::string> used_;
};

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

const std::string& pick(Rng& rng, const std::vector<std::string>& from) {
    return from[rng.uniform_index(from.size())];
}

}  // namespace

std::size_t ClusterFixture::cluster_of_answer(const std::string& answer) const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (*records[i].answer == answer) return record_cluster[i];
    }
    return kClusters;
}

ClusterFixture make_cluster_fixture(std::uint64_t seed) {
    WordSource words(seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<std::vector<std::string>> topics;
    std::vector<std::vector<std::string>> answers;
    for (std::size_t c = 0; c < ClusterFixture::kClusters; ++c) {
        topics.push_back(words.take(4));
        answers.push_back(words.take(3));
    }
    const auto stored_filler = words.take(300);
    const auto query_filler = words.take(60);

    ClusterFixture f;
    std::size_t serial = 0;
    auto add = [&](std::vector<std::string> question, std::vector<std::string> answer, std::size_t cluster) {
        answer.push_back("n" + std::to_string(serial++));
        f.records.push_back(RawRecord{join(question), join(answer), std::nullopt, std::nullopt, false});
        f.record_cluster.push_back(cluster);
    };

    for (std::size_t c = 0; c < ClusterFixture::kClusters; ++c) {
        for (std::size_t m = 0; m < ClusterFixture::kMembersPerCluster; ++m) {
            auto q = topics[c];
            q.push_back(pick(rng, stored_filler));
            q.push_back(pick(rng, stored_filler));
            rng.shuffle(std::span(q));
            add(q, answers[c], c);
        }
        // Confusers: half the topic, an unrelated answer.
        for (std::size_t m = 0; m < 10; ++m) {
            std::vector<std::string> q = {topics[c][m % 4], topics[c][(m + 1) % 4]};
            for (int i = 0; i < 4; ++i) q.push_back(pick(rng, stored_filler));
            rng.shuffle(std::span(q));
            add(q, {pick(rng, stored_filler), pick(rng, stored_filler), pick(rng, stored_filler)},
                ClusterFixture::kClusters);
        }
    }
    while (f.records.size() < ClusterFixture::kPairs) {
        std::vector<std::string> q;
        for (int i = 0; i < 6; ++i) q.push_back(pick(rng, stored_filler));
        add(q, {pick(rng, stored_filler), pick(rng, stored_filler), pick(rng, stored_filler)},
            ClusterFixture::kClusters);
    }

    for (std::size_t c = 0; c < ClusterFixture::kClusters; ++c) {
        for (std::size_t i = 0; i < ClusterFixture::kQueriesPerCluster; ++i) {
            auto q = topics[c];
            q.push_back(pick(rng, query_filler));
            q.push_back(pick(rng, query_filler));
            rng.shuffle(std::span(q));
            f.queries.push_back(ClusterFixture::Query{join(q), c});
        }
    }
    return f;
}

std::vector<std::size_t> brute_force_best(const ClusterFixture& fixture, Layout layout) {
    std::vector<std::size_t> out;
    for (const auto& query : fixture.queries) {
        std::size_t best = 0;
        double best_score = -1.0;
        for (std::size_t i = 0; i < fixture.records.size(); ++i) {
            const auto& r = fixture.records[i];
            const double s = reference_score(Triplet{query.text, *r.question, *r.answer}, layout);
            if (s > best_score) {
                best_score = s;
                best = i;
            }
        }
        out.push_back(best);
    }
    return out;
}

void ingest_fixture(QAStore& store, const ClusterFixture& fixture) {
    store.ingest(fixture.records, SourceConfig{"fixture", 1.0, false});
}

}  // namespace qa::testing
