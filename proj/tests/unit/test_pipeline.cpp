#include <gtest/gtest.h>

#include <thread>

#include "cluster_fixture.hpp"
#include "qa/errors.hpp"
#include "qa/pipeline.hpp"

namespace {

using qa::Layout;
using qa::Pipeline;
using qa::PipelineConfig;
using qa::testing::ClusterFixture;

constexpr std::size_t kDim = 256;

/// Store, encoder, scorer and index wired together for one test.
struct Rig {
    qa::QAStore store;
    qa::ReferenceEncoder encoder{kDim};
    qa::ReferenceScorer scorer;
    std::shared_ptr<const qa::VectorIndex> index;

    void build() { index = std::make_shared<const qa::VectorIndex>(qa::build_index(store.pairs(), encoder)); }
    Pipeline pipeline(PipelineConfig config = {}) const { return Pipeline(store, index, encoder, scorer, config); }
};

std::vector<qa::RawRecord> records(std::initializer_list<std::pair<const char*, const char*>> qa) {
    std::vector<qa::RawRecord> out;
    for (const auto& [q, a] : qa) {
        qa::RawRecord r;
        r.question = q;
        r.answer = a;
        out.push_back(r);
    }
    return out;
}

const auto kSmall = records({{"who wrote hamlet", "William Shakespeare"},
                             {"when did the second world war end", "1945"},
                             {"how many legs does a spider have", "eight"},
                             {"what is the capital of peru", "Lima"},
                             {"who painted the mona lisa", "Leonardo da Vinci"}});

class ThrowingEncoder final : public qa::Encoder {
public:
    std::size_t dim() const override { return kDim; }
    std::string describe() const override { return "throwing"; }
    std::vector<qa::Embedding> encode_batch(std::span<const qa::SegmentedInput>) const override {
        throw qa::TransportError("connection refused");
    }
};

class ThrowingScorer final : public qa::Scorer {
public:
    std::string describe() const override { return "throwing"; }
    std::vector<double> score_batch(Layout, std::span<const qa::Triplet>) const override {
        throw qa::TransportError("connection refused");
    }
};

struct FixtureRig {
    ClusterFixture fixture = qa::testing::make_cluster_fixture();
    Rig rig;
    FixtureRig() {
        qa::testing::ingest_fixture(rig.store, fixture);
        rig.build();
    }
    /// Fraction of paraphrase queries answered from the query's cluster.
    double accuracy(const PipelineConfig& config) const {
        const auto p = rig.pipeline(config);
        std::size_t correct = 0;
        for (const auto& q : fixture.queries) {
            const auto r = p.answer(q.text);
            if (r.answer && fixture.cluster_of_answer(*r.answer) == q.cluster) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(fixture.queries.size());
    }
};

const FixtureRig& fixture_rig() {
    static const FixtureRig rig;
    return rig;
}

// ---------------------------------------------------------------- examples

TEST(Pipeline, ExactQuestionIsAnswered) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto p = rig.pipeline();
    for (const auto& r : kSmall) {
        const auto response = p.answer(*r.question);
        ASSERT_TRUE(response.answer);
        EXPECT_EQ(*response.answer, *r.answer);
        EXPECT_EQ(response.retrieval.size(), 5U);
        EXPECT_EQ(response.reranked.size(), 5U);
        EXPECT_EQ(response.reranked[0].pair_id, *response.pair_id);
        EXPECT_EQ(rig.store.get_pair(*response.pair_id).answer, *r.answer);
    }
}

TEST(Pipeline, DepthOneAnswersWithRetrievalTop) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto p = rig.pipeline({.k = 1});
    const auto r = p.answer("which spider has how many legs");
    ASSERT_EQ(r.retrieval.size(), 1U);
    ASSERT_EQ(r.reranked.size(), 1U);
    EXPECT_EQ(*r.pair_id, r.retrieval[0].pair_id);
    EXPECT_EQ(*r.answer, rig.store.get_pair(r.retrieval[0].pair_id).answer);
}

TEST(Pipeline, EmptyIndexGivesNoAnswer) {
    Rig rig;
    rig.build();
    const auto r = rig.pipeline().answer("anything at all");
    EXPECT_FALSE(r.answer);
    EXPECT_FALSE(r.pair_id);
    EXPECT_TRUE(r.retrieval.empty());
    EXPECT_TRUE(r.reranked.empty());
}

TEST(Pipeline, FewerPairsThanK) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto r = rig.pipeline({.k = 500}).answer("who wrote hamlet");
    EXPECT_EQ(r.retrieval.size(), 5U);
    EXPECT_EQ(*r.answer, "William Shakespeare");
}

TEST(Pipeline, ThresholdSuppressesWeakAnswers) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    EXPECT_FALSE(rig.pipeline({.threshold = 0.5}).answer("name an eight legged animal").answer);
    EXPECT_TRUE(rig.pipeline({.threshold = 0.5}).answer("who wrote hamlet").answer);
}

TEST(Pipeline, ConfigErrors) {
    Rig rig;
    rig.build();
    EXPECT_THROW(rig.pipeline({.k = 0}), qa::ConfigError);
    const qa::ReferenceEncoder other(64);
    EXPECT_THROW(Pipeline(rig.store, rig.index, other, rig.scorer), qa::ConfigError);
    EXPECT_THROW(Pipeline(rig.store, nullptr, rig.encoder, rig.scorer), qa::ConfigError);
}

TEST(Pipeline, BlankQuestionIsArgumentError) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    EXPECT_THROW(rig.pipeline().answer("   "), qa::ArgumentError);
}

TEST(Pipeline, TransportFailuresNameTheStage) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const ThrowingEncoder bad_encoder;
    const ThrowingScorer bad_scorer;
    try {
        Pipeline(rig.store, rig.index, bad_encoder, rig.scorer).answer("who wrote hamlet");
        FAIL();
    } catch (const qa::TransportError& e) {
        EXPECT_EQ(e.stage(), "encode");
    }
    try {
        Pipeline(rig.store, rig.index, rig.encoder, bad_scorer).answer("who wrote hamlet");
        FAIL();
    } catch (const qa::TransportError& e) {
        EXPECT_EQ(e.stage(), "rerank");
    }
    // Without reranking the scorer is never called.
    EXPECT_NO_THROW(Pipeline(rig.store, rig.index, rig.encoder, bad_scorer, {.rerank = false}).answer("hamlet"));
}

TEST(Pipeline, RemovedPairsAreNotRetrieved) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto removed = rig.store.sample_and_remove(2, 11);
    const auto p = rig.pipeline();
    for (const auto& pair : removed) {
        const auto r = p.answer(pair.question);
        EXPECT_EQ(r.retrieval.size(), 3U);
        for (const auto& hit : r.retrieval) EXPECT_NE(hit.pair_id, pair.id);
        ASSERT_TRUE(r.answer);
        EXPECT_NE(*r.pair_id, pair.id);
    }
}

TEST(Pipeline, TimingsAreConsistent) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto r = rig.pipeline().answer("who wrote hamlet");
    EXPECT_GE(r.timing.encode_ns, 0);
    EXPECT_GE(r.timing.retrieve_ns, 0);
    EXPECT_GE(r.timing.rerank_ns, 0);
    EXPECT_GE(r.timing.total_ns, r.timing.encode_ns + r.timing.retrieve_ns + r.timing.rerank_ns);
}

TEST(Pipeline, JsonShape) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto j = qa::to_json(rig.pipeline({.k = 2}).answer("who wrote hamlet"));
    EXPECT_EQ(j.at("answer"), "William Shakespeare");
    EXPECT_EQ(j.at("retrieval").size(), 2U);
    EXPECT_EQ(j.at("reranked").size(), 2U);
    for (const char* key : {"encode_ns", "retrieve_ns", "rerank_ns", "total_ns"}) EXPECT_TRUE(j.at("timing").contains(key));
    Rig empty;
    empty.build();
    EXPECT_TRUE(qa::to_json(empty.pipeline().answer("x")).at("answer").is_null());
}

// ---------------------------------------------------------------- batch

TEST(PipelineBatch, OneFailureAmongFive) {
    Rig rig;
    rig.store.ingest(kSmall, {"faq"});
    rig.build();
    const auto p = rig.pipeline();
    const std::vector<std::string> qs = {"who wrote hamlet", "capital of peru", " ", "spider legs", "mona lisa"};
    const auto out = p.answer_batch(qs);
    ASSERT_EQ(out.size(), 5U);
    std::size_t answers = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NE(out[i].response.has_value(), out[i].error.has_value());
        if (out[i].response) {
            ++answers;
            EXPECT_EQ(out[i].response->answer, p.answer(qs[i]).answer);
        }
    }
    EXPECT_EQ(answers, 4U);
    EXPECT_TRUE(out[2].error);
}

TEST(PipelineBatch, ReproducesSingleCallsOnFixture) {
    const auto& f = fixture_rig();
    const auto p = f.rig.pipeline({.k = 30});
    std::vector<std::string> qs;
    for (const auto& q : f.fixture.queries) qs.push_back(q.text);
    const auto batch = p.answer_batch(qs);
    ASSERT_EQ(batch.size(), qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto single = p.answer(qs[i]);
        ASSERT_TRUE(batch[i].response);
        EXPECT_EQ(batch[i].response->answer, single.answer);
        EXPECT_EQ(batch[i].response->pair_id, single.pair_id);
    }
    const auto one = p.answer_batch(std::span(qs.data(), 1));
    EXPECT_EQ(one.at(0).response->pair_id, p.answer(qs[0]).pair_id);
}

// ---------------------------------------------------------------- fixture properties

TEST(PipelineFixture, OracleConfirmsConstruction) {
    const auto& f = fixture_rig().fixture;
    ASSERT_EQ(f.records.size(), ClusterFixture::kPairs);
    ASSERT_EQ(f.queries.size(), ClusterFixture::kClusters * ClusterFixture::kQueriesPerCluster);
    const auto best = qa::testing::brute_force_best(f, Layout::QAQ);
    for (std::size_t i = 0; i < f.queries.size(); ++i) EXPECT_EQ(f.record_cluster[best[i]], f.queries[i].cluster);
}

TEST(PipelineFixture, ParaphrasesAnsweredInCluster) {
    EXPECT_GE(fixture_rig().accuracy({.k = 30}), 0.95);
}

TEST(PipelineFixture, LargerPoolsDoNotHurt) {
    const auto& f = fixture_rig();
    EXPECT_GE(f.accuracy({.k = 30}), f.accuracy({.k = 1}));
}

TEST(PipelineFixture, SelectedPairIsRetrievedAndRerankIsPermutation) {
    const auto& f = fixture_rig();
    const auto p = f.rig.pipeline({.k = 30});
    for (const auto& q : f.fixture.queries) {
        const auto r = p.answer(q.text);
        std::vector<std::uint64_t> a, b;
        for (const auto& h : r.retrieval) a.push_back(h.pair_id);
        for (const auto& c : r.reranked) b.push_back(c.pair_id);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
        EXPECT_TRUE(std::binary_search(a.begin(), a.end(), *r.pair_id));
    }
}

TEST(PipelineFixture, NoRerankEqualsRetrievalTopOne) {
    const auto& f = fixture_rig();
    const auto p = f.rig.pipeline({.k = 30, .rerank = false});
    for (const auto& q : f.fixture.queries) {
        const auto r = p.answer(q.text);
        const auto top = f.rig.pipeline({.k = 30}).retrieve(q.text, 1);
        EXPECT_EQ(*r.pair_id, top.at(0).pair_id);
        EXPECT_EQ(*r.pair_id, r.retrieval.at(0).pair_id);
    }
}

TEST(PipelineFixture, ConcurrentAnswersMatchSequential) {
    const auto& f = fixture_rig();
    const auto p = f.rig.pipeline({.k = 30});
    std::vector<std::optional<std::uint64_t>> expected;
    for (const auto& q : f.fixture.queries) expected.push_back(p.answer(q.text).pair_id);
    std::atomic<int> mismatches{0};
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (std::size_t i = t; i < f.fixture.queries.size(); i += 4)
                if (p.answer(f.fixture.queries[i].text).pair_id != expected[i]) ++mismatches;
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(mismatches.load(), 0);
}

}  // namespace
