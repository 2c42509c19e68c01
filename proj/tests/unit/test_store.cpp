#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <sstream>
#include <thread>

#include "qa/errors.hpp"
#include "qa/random.hpp"
#include "qa/store.hpp"
#include "temp_dir.hpp"

namespace {

using qa::RawRecord;
using qa::SourceConfig;

RawRecord rec(std::string q, std::string a, std::optional<double> score = std::nullopt) {
    RawRecord r;
    r.question = std::move(q);
    r.answer = std::move(a);
    r.score = score;
    return r;
}

const SourceConfig kLabeled{"faq", 1.0, false};

std::vector<RawRecord> distinct_records(std::size_t n, const std::string& prefix = "q") {
    std::vector<RawRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(rec(prefix + std::to_string(i), "a" + std::to_string(i)));
    return out;
}

std::string jsonl(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

// ---------------------------------------------------------------- ingest

TEST(StoreIngest, TenPercentKeepsOnlyTheTopScore) {
    qa::QAStore store;
    std::vector<RawRecord> batch;
    for (int i = 1; i <= 10; ++i) batch.push_back(rec("q" + std::to_string(i), "a", i / 10.0));
    const auto report = store.ingest(batch, SourceConfig{"web", 0.10, true});
    EXPECT_EQ(report.kept, 1U);
    EXPECT_EQ(report.dropped_filter, 9U);
    ASSERT_EQ(store.size(), 1U);
    EXPECT_EQ(store.get_pair(0).question, "q10");
    EXPECT_DOUBLE_EQ(*store.get_pair(0).quality_score, 1.0);
}

TEST(StoreIngest, IdentityFilterKeepsAllDistinct) {
    qa::QAStore store;
    const auto report = store.ingest(distinct_records(3), kLabeled);
    EXPECT_EQ(report.read, 3U);
    EXPECT_EQ(report.kept, 3U);
    EXPECT_EQ(report.dropped_filter, 0U);
    EXPECT_EQ(report.dropped_duplicate, 0U);
    EXPECT_EQ(report.dropped_invalid, 0U);
}

TEST(StoreIngest, DuplicateWithinBatch) {
    qa::QAStore store;
    const auto report = store.ingest(std::vector{rec("Same q", "same a"), rec("same   Q ", "SAME a")}, kLabeled);
    EXPECT_EQ(report.kept, 1U);
    EXPECT_EQ(report.dropped_duplicate, 1U);
}

TEST(StoreIngest, SameQuestionDifferentAnswerIsKept) {
    qa::QAStore store;
    const auto report = store.ingest(std::vector{rec("q", "first"), rec("q", "second")}, kLabeled);
    EXPECT_EQ(report.kept, 2U);
}

TEST(StoreIngest, MalformedRecordsAreCountedNotFatal) {
    qa::QAStore store;
    std::istringstream in(jsonl({
        R"({"question": "ok", "answer": "fine"})",
        R"(not json at all)",
        R"({"question": "   ", "answer": "blank question"})",
        R"({"answer": "no question"})",
        R"({"question": "bad score", "answer": "x", "score": "high"})",
        R"({"question": "out of range", "answer": "x", "score": 1.5})",
        R"([1, 2, 3])",
        R"({"question": "also ok", "answer": ""})",
    }));
    const auto report = store.ingest_jsonl(in, kLabeled);
    EXPECT_EQ(report.read, 8U);
    EXPECT_EQ(report.kept, 2U);
    EXPECT_EQ(report.dropped_invalid, 6U);
    EXPECT_TRUE(report.balanced());
}

TEST(StoreIngest, MissingRequiredScoreRejectsTheBatch) {
    qa::QAStore store;
    const std::vector batch{rec("a", "x", 0.5), rec("b", "y")};
    EXPECT_THROW(store.ingest(batch, SourceConfig{"forum", 0.5, true}), qa::ConfigError);
    EXPECT_EQ(store.size(), 0U);
}

TEST(StoreIngest, SourceConfigInvariants) {
    EXPECT_THROW((SourceConfig{"web", 0.0, true}.validate()), qa::ConfigError);
    EXPECT_THROW((SourceConfig{"web", 1.5, true}.validate()), qa::ConfigError);
    EXPECT_THROW((SourceConfig{"faq", 0.5, false}.validate()), qa::ConfigError);
    EXPECT_THROW((SourceConfig{"", 1.0, false}.validate()), qa::ConfigError);
    EXPECT_NO_THROW((SourceConfig{"web", 0.1, true}.validate()));
    EXPECT_NO_THROW((SourceConfig{"web", 1.0, true}.validate()));
}

TEST(StoreIngest, ReplayingABatchKeepsNothing) {
    qa::QAStore store;
    const auto batch = distinct_records(20);
    EXPECT_EQ(store.ingest(batch, kLabeled).kept, 20U);
    const auto second = store.ingest(batch, kLabeled);
    EXPECT_EQ(second.kept, 0U);
    EXPECT_EQ(second.dropped_duplicate, 20U);
}

TEST(StoreIngest, FilterTiesBreakByRecordOrder) {
    qa::QAStore store;
    // Four records tie at the top score; 50% keeps two of them, the first two.
    std::vector batch{rec("a", "x", 0.9), rec("b", "x", 0.9), rec("c", "x", 0.9), rec("d", "x", 0.9)};
    store.ingest(batch, SourceConfig{"web", 0.5, true});
    const auto kept = store.pairs();
    ASSERT_EQ(kept.size(), 2U);
    EXPECT_EQ(kept[0].question, "a");
    EXPECT_EQ(kept[1].question, "b");
}

TEST(StoreIngest, KeepCountIsCeilingOfFraction) {
    EXPECT_EQ(qa::filter_keep_count(0.10, 10), 1U);
    EXPECT_EQ(qa::filter_keep_count(0.10, 30), 3U);  // 0.1 * 30 is 3.0000000000000004 in binary
    EXPECT_EQ(qa::filter_keep_count(0.10, 11), 2U);
    EXPECT_EQ(qa::filter_keep_count(0.50, 7), 4U);
    EXPECT_EQ(qa::filter_keep_count(1.0, 7), 7U);
    EXPECT_EQ(qa::filter_keep_count(0.10, 0), 0U);
}

TEST(StoreIngest, ReportBalancesOnRandomBatches) {
    qa::Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        qa::QAStore store;
        std::vector<RawRecord> batch;
        const auto n = 1 + rng.uniform_index(40);
        for (std::size_t i = 0; i < n; ++i) {
            switch (rng.uniform_index(6)) {
                case 0: batch.push_back(RawRecord{}); break;
                case 1: batch.push_back(rec("dup", "dup", rng.uniform_real())); break;
                default:
                    batch.push_back(rec("q" + std::to_string(rng.uniform_index(30)), "a", rng.uniform_real()));
            }
        }
        const double fractions[] = {0.1, 0.5, 1.0};
        const auto report = store.ingest(batch, SourceConfig{"web", fractions[trial % 3], true});
        EXPECT_TRUE(report.balanced()) << "trial " << trial;
        EXPECT_EQ(report.kept, store.size());
    }
}

// ---------------------------------------------------------------- get_pair

TEST(StoreGet, FirstIngestGetsIdZero) {
    qa::QAStore store;
    store.ingest(std::vector{rec("what is up", "the sky")}, kLabeled);
    const auto p = store.get_pair(0);
    EXPECT_EQ(p.id, 0U);
    EXPECT_EQ(p.question, "what is up");
    EXPECT_EQ(p.answer, "the sky");
    EXPECT_EQ(p.source, "faq");
    EXPECT_FALSE(p.quality_score);
}

TEST(StoreGet, UnknownIdIsNotFound) {
    qa::QAStore store;
    EXPECT_THROW(store.get_pair(999), qa::NotFoundError);
    EXPECT_FALSE(store.find(999));
}

TEST(StoreGet, IdsFollowIngestionOrderAcrossBatches) {
    qa::QAStore store;
    store.ingest(std::vector{rec("first", "1")}, kLabeled);
    store.ingest(std::vector{rec("second", "2")}, kLabeled);
    EXPECT_EQ(store.get_pair(1).question, "second");
}

// ---------------------------------------------------------------- sample

TEST(StoreSample, ExhaustiveSampleEmptiesTheStore) {
    qa::QAStore store;
    store.ingest(distinct_records(5), kLabeled);
    const auto taken = store.sample_and_remove(5, 1);
    EXPECT_EQ(taken.size(), 5U);
    EXPECT_EQ(store.size(), 0U);
}

TEST(StoreSample, SameSeedSameSampleOnIdenticalStores) {
    qa::QAStore a;
    qa::QAStore b;
    a.ingest(distinct_records(1000), kLabeled);
    b.ingest(distinct_records(1000), kLabeled);
    const auto sa = a.sample_and_remove(10, 7);
    const auto sb = b.sample_and_remove(10, 7);
    ASSERT_EQ(sa.size(), 10U);
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].id, sb[i].id);
    EXPECT_NE(a.sample(10, 7).front().id, a.sample(10, 8).front().id);
}

TEST(StoreSample, TooManyIsAnArgumentError) {
    qa::QAStore store;
    store.ingest(distinct_records(3), kLabeled);
    EXPECT_THROW(store.sample_and_remove(4, 0), qa::ArgumentError);
    EXPECT_EQ(store.size(), 3U);
}

TEST(StoreSample, RemovedUnionRemainingIsTheOriginal) {
    qa::QAStore store;
    store.ingest(distinct_records(200), kLabeled);
    const auto before = store.pairs();
    const auto removed = store.sample_and_remove(37, 99);
    const auto after = store.pairs();
    EXPECT_EQ(after.size(), before.size() - 37);
    std::map<std::uint64_t, qa::QAPair> joined;
    for (const auto& p : removed) joined.emplace(p.id, p);
    for (const auto& p : after) EXPECT_TRUE(joined.emplace(p.id, p).second) << "id " << p.id << " in both";
    ASSERT_EQ(joined.size(), before.size());
    for (const auto& p : before) EXPECT_EQ(joined.at(p.id), p);
    for (const auto& p : removed) EXPECT_FALSE(store.contains(p.id));
}

TEST(StoreSample, RemovedPairsCannotBeReingested) {
    qa::QAStore store;
    store.ingest(distinct_records(5), kLabeled);
    const auto removed = store.sample_and_remove(1, 3);
    const auto report = store.ingest(std::vector{rec(removed[0].question, removed[0].answer)}, kLabeled);
    EXPECT_EQ(report.dropped_duplicate, 1U);
}

TEST(StoreSample, SampleIsUniformOverIds) {
    qa::QAStore store;
    store.ingest(distinct_records(10), kLabeled);
    std::vector<int> hits(10, 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        for (const auto& p : store.sample(3, seed)) ++hits[p.id];
    }
    // Expected 600 per id; a 5-sigma band is about +-100.
    for (int h : hits) EXPECT_NEAR(h, 600, 110);
}

// ---------------------------------------------------------------- export

TEST(StoreExport, EmptyStoreEmitsNothing) {
    qa::QAStore store;
    std::ostringstream out;
    store.export_pairs(out);
    EXPECT_EQ(out.str(), "");
}

TEST(StoreExport, LinesInIdOrder) {
    qa::QAStore store;
    store.ingest(distinct_records(3), kLabeled);
    std::ostringstream out;
    store.export_pairs(out);
    std::istringstream in(out.str());
    std::string line;
    std::vector<std::uint64_t> ids;
    while (std::getline(in, line)) ids.push_back(nlohmann::json::parse(line).at("id").get<std::uint64_t>());
    EXPECT_EQ(ids, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(StoreExport, SourceFilter) {
    qa::QAStore store;
    store.ingest(distinct_records(3, "faq"), kLabeled);
    store.ingest(distinct_records(2, "forum"), SourceConfig{"forum", 1.0, false});
    const auto forum = store.pairs("forum");
    ASSERT_EQ(forum.size(), 2U);
    EXPECT_EQ(forum[0].question, "forum0");
    EXPECT_EQ(forum[1].question, "forum1");
    EXPECT_THROW(store.pairs("nosuch"), qa::ArgumentError);
}

TEST(StoreExport, RoundTripIntoAFreshStore) {
    qa::QAStore store;
    store.ingest(distinct_records(4, "faq"), kLabeled);
    store.ingest(std::vector{rec("w1", "x", 0.9), rec("w2", "y", 0.2)}, SourceConfig{"web", 1.0, true});
    store.sample_and_remove(1, 5);
    std::ostringstream out;
    store.export_pairs(out);

    qa::QAStore fresh;
    std::istringstream in(out.str());
    fresh.ingest_jsonl(in, SourceConfig{"import", 1.0, false});
    auto content = [](const qa::QAStore& s) {
        std::multiset<std::tuple<std::string, std::string, std::string>> m;
        for (const auto& p : s.pairs()) m.emplace(p.question, p.answer, p.source);
        return m;
    };
    EXPECT_EQ(content(fresh), content(store));
}

// ---------------------------------------------------------------- persistence

TEST(StorePersistence, ReopenReplaysSegments) {
    qa::testing::TempDir dir;
    std::vector<qa::QAPair> expected;
    {
        qa::QAStore store(dir.path());
        store.ingest(distinct_records(10), kLabeled);
        store.ingest(std::vector{rec("web q", "web a", 0.7)}, SourceConfig{"web", 1.0, true});
        store.sample_and_remove(3, 11);
        expected = store.pairs();
    }
    qa::QAStore reopened(dir.path());
    EXPECT_EQ(reopened.pairs(), expected);
    EXPECT_TRUE(std::filesystem::exists(dir / "segments/0000.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "segments/0002.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "index"));

    // Ids continue after the highest ever assigned, removed ones included.
    reopened.ingest(std::vector{rec("new", "one")}, kLabeled);
    EXPECT_EQ(reopened.pairs().back().id, 11U);
    // Dedup keys survive a reopen.
    EXPECT_EQ(reopened.ingest(distinct_records(10), kLabeled).kept, 0U);
}

TEST(StorePersistence, IndexFileMapsIdsToSegmentOffsets) {
    qa::testing::TempDir dir;
    {
        qa::QAStore store(dir.path());
        store.ingest(distinct_records(3), kLabeled);
    }
    std::ifstream index(dir / "index");
    std::string header;
    std::getline(index, header);
    EXPECT_EQ(header.rfind("# qa-store index v1", 0), 0U);
    std::ifstream segment(dir / "segments/0000.jsonl", std::ios::binary);
    const std::string content((std::istreambuf_iterator<char>(segment)), std::istreambuf_iterator<char>());
    std::uint64_t id = 0;
    std::size_t seg = 0;
    std::uint64_t offset = 0;
    int rows = 0;
    while (index >> id >> seg >> offset) {
        ++rows;
        EXPECT_EQ(seg, 0U);
        const auto line = content.substr(offset, content.find('\n', offset) - offset);
        EXPECT_EQ(nlohmann::json::parse(line).at("id").get<std::uint64_t>(), id);
    }
    EXPECT_EQ(rows, 3);
}

TEST(StorePersistence, CorruptSegmentIsAFormatError) {
    qa::testing::TempDir dir;
    { qa::QAStore store(dir.path()); }
    std::ofstream(dir / "segments/0000.jsonl") << "{\"segment\":{}}\nnot json\n";
    EXPECT_THROW(qa::QAStore{dir.path()}, qa::FormatError);
}

// ---------------------------------------------------------------- concurrency

TEST(StoreConcurrency, ReadersSeeConsistentSnapshotsDuringIngest) {
    qa::QAStore store;
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 3; ++t) {
        readers.emplace_back([&] {
            while (!done) {
                const auto pairs = store.pairs();
                // Batches are 10 records; a snapshot never shows a partial batch.
                if (pairs.size() % 10 != 0) ++bad;
                for (std::size_t i = 1; i < pairs.size(); ++i) {
                    if (pairs[i].id <= pairs[i - 1].id) ++bad;
                }
            }
        });
    }
    for (int b = 0; b < 50; ++b) store.ingest(distinct_records(10, "b" + std::to_string(b) + "-"), kLabeled);
    done = true;
    for (auto& r : readers) r.join();
    EXPECT_EQ(bad.load(), 0);
    EXPECT_EQ(store.size(), 500U);
}

}  // namespace
