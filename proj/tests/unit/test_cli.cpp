#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "cluster_fixture.hpp"
#include "qa/bench.hpp"
#include "qa/errors.hpp"
#include "qa/eval.hpp"
#include "temp_dir.hpp"

namespace {

using nlohmann::json;

struct Result {
    int code = 0;
    std::string out;
    std::string err;

    json error() const {
        std::istringstream in(err);
        std::string line;
        json last;
        while (std::getline(in, line)) {
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.contains("error")) last = j["error"];
        }
        return last;
    }
    std::vector<std::string> lines() const {
        std::vector<std::string> out_lines;
        std::istringstream in(out);
        for (std::string line; std::getline(in, line);) out_lines.push_back(line);
        return out_lines;
    }
};

class CliTest : public ::testing::Test {
protected:
    Result run(std::vector<std::string> args) {
        std::ostringstream out, err;
        const qa::cli::Getenv getenv = [this](const std::string& name) -> std::optional<std::string> {
            auto it = env.find(name);
            if (it == env.end()) return std::nullopt;
            return it->second;
        };
        Result r;
        r.code = qa::cli::run(args, out, err, getenv);
        r.out = out.str();
        r.err = err.str();
        return r;
    }

    std::string store() const { return (dir / "store").string(); }

    void write(const std::string& name, const std::string& content) {
        std::ofstream(dir / name) << content;
    }

    void ingest_small() {
        write("small.jsonl",
              R"({"question": "who wrote hamlet", "answer": "William Shakespeare"})" "\n"
              R"({"question": "what is the capital of peru", "answer": "Lima"})" "\n"
              R"({"question": "how many legs does a spider have", "answer": "eight"})" "\n");
        ASSERT_EQ(run({"--store", store(), "ingest", "--source", "faq", (dir / "small.jsonl").string()}).code, 0);
    }

    qa::testing::TempDir dir;
    std::map<std::string, std::string> env;
};

TEST_F(CliTest, HelpAndUsage) {
    const auto help = run({"--help"});
    EXPECT_EQ(help.code, 0);
    for (const char* cmd : {"ingest", "index", "answer", "serve", "eval", "annotate", "bench"})
        EXPECT_NE(help.out.find(cmd), std::string::npos) << cmd;

    const auto bogus = run({"frobnicate"});
    EXPECT_EQ(bogus.code, 2);
    EXPECT_EQ(bogus.error().at("kind"), "usage");
    EXPECT_NE(bogus.err.find("qa --help"), std::string::npos);

    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"ingest", "x.jsonl"}).code, 2);  // --source is required
    const auto bad_k = run({"answer", "--k", "many", "q"});
    EXPECT_EQ(bad_k.code, 1);
    EXPECT_EQ(bad_k.error().at("kind"), "config");
}

TEST_F(CliTest, AnswerWithoutIndexNamesTheStage) {
    ingest_small();
    const auto r = run({"--store", store(), "answer", "who wrote hamlet"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.error().at("kind"), "not_found");
    EXPECT_EQ(r.error().at("stage"), "index");
}

TEST_F(CliTest, IngestReportsCounts) {
    write("mixed.jsonl",
          R"({"question": "a?", "answer": "x"})" "\n"
          "garbage\n"
          R"({"question": "a?", "answer": "x"})" "\n"
          R"({"question": "", "answer": "y"})" "\n");
    const auto r = run({"--store", store(), "ingest", "--source", "faq", (dir / "mixed.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(r.out);
    EXPECT_EQ(report.at("read"), 4);
    EXPECT_EQ(report.at("kept"), 1);
    EXPECT_EQ(report.at("dropped_duplicate"), 1);
    EXPECT_EQ(report.at("dropped_invalid"), 2);

    const auto bad_keep = run({"--store", store(), "ingest", "--source", "s", "--keep", "0.5",
                               (dir / "mixed.jsonl").string()});
    EXPECT_EQ(bad_keep.code, 1);
    EXPECT_EQ(bad_keep.error().at("kind"), "config");
}

TEST_F(CliTest, IngestBuildAnswer) {
    ingest_small();
    const auto build = run({"--store", store(), "--dim", "64", "index", "build"});
    ASSERT_EQ(build.code, 0) << build.err;
    EXPECT_EQ(json::parse(build.out).at("count"), 3);

    const auto r = run({"--store", store(), "answer", "who wrote hamlet"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = r.lines();
    ASSERT_EQ(lines.size(), 2U);
    EXPECT_EQ(lines[0], "William Shakespeare");
    EXPECT_EQ(json::parse(lines[1]).at("answer"), "William Shakespeare");

    const auto search = run({"--store", store(), "index", "search", "--query", "capital of peru", "--k", "2"});
    ASSERT_EQ(search.code, 0) << search.err;
    ASSERT_EQ(search.lines().size(), 2U);
    EXPECT_EQ(json::parse(search.lines()[0]).at("question"), "what is the capital of peru");

    // The index remembers its encoder; a conflicting dim is a config error.
    const auto conflict = run({"--store", store(), "--dim", "32", "answer", "x"});
    EXPECT_EQ(conflict.code, 1);
    EXPECT_EQ(conflict.error().at("kind"), "config");
}

TEST_F(CliTest, StoreFromEnvironmentAndConfigFile) {
    env["QA_STORE"] = store();
    ingest_small();  // also passes --store explicitly
    ASSERT_EQ(run({"index", "build"}).code, 0);
    EXPECT_EQ(run({"answer", "capital of peru"}).lines().at(0), "Lima");

    // Layers: file < environment < flags.
    write("qa.conf", "# engine settings\nstore = " + (dir / "elsewhere").string() + "\n");
    const auto conf = (dir / "qa.conf").string();
    EXPECT_EQ(run({"--config", conf, "answer", "capital of peru"}).lines().at(0), "Lima");
    env.clear();
    const auto from_file = run({"--config", conf, "answer", "capital of peru"});
    EXPECT_EQ(from_file.code, 1);
    EXPECT_EQ(from_file.error().at("kind"), "not_found");
    EXPECT_EQ(run({"--config", conf, "--store", store(), "answer", "capital of peru"}).lines().at(0), "Lima");

    write("bad.conf", "store\n");
    const auto bad = run({"--config", (dir / "bad.conf").string(), "answer", "x"});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.error().at("message").get<std::string>().find("line 1"), std::string::npos);
}

TEST_F(CliTest, SampleExportAndHoldOut) {
    ingest_small();
    const auto sample = run({"--store", store(), "--seed", "3", "sample", "--n", "2", "--remove"});
    ASSERT_EQ(sample.code, 0) << sample.err;
    ASSERT_EQ(sample.lines().size(), 2U);
    const auto exported = run({"--store", store(), "export"});
    EXPECT_EQ(exported.lines().size(), 1U);
    const auto too_many = run({"--store", store(), "--seed", "3", "sample", "--n", "2"});
    EXPECT_EQ(too_many.code, 1);
    EXPECT_EQ(too_many.error().at("kind"), "argument");
    EXPECT_EQ(run({"--store", store(), "--seed", "3", "sample", "--n", "1"}).lines().size(), 1U);
    const auto bad_source = run({"--store", store(), "export", "--source", "nope"});
    EXPECT_EQ(bad_source.code, 1);
}

TEST_F(CliTest, GeneratedSeedIsLogged) {
    ingest_small();
    const auto r = run({"--store", store(), "sample", "--n", "1"});
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("generated seed"), std::string::npos);
}

TEST_F(CliTest, EvalGivenScores) {
    std::string dataset;
    for (const auto& labels : {std::vector{0, 1, 1}, std::vector{1, 0, 0, 1}}) {
        json cands = json::array();
        for (std::size_t i = 0; i < labels.size(); ++i)
            cands.push_back({{"pair_id", i + 1}, {"question", "q"}, {"answer", "a"}, {"label", labels[i]}});
        dataset += json{{"target", "t"}, {"split", "train"}, {"candidates", cands}}.dump() + "\n";
    }
    write("ds.jsonl", dataset);
    const auto r = run({"eval", "--dataset", (dir / "ds.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(r.lines().at(0));
    EXPECT_NEAR(report.at("map").get<double>(), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(report.at("mrr").get<double>(), 0.75, 1e-12);
    EXPECT_NE(r.out.find("MAP"), std::string::npos);
    EXPECT_EQ(run({"eval", "--dataset", (dir / "ds.jsonl").string()}).out, r.out);

    write("scores.jsonl", "[0, 0, 5]\n[1, 2, 3, 4]\n");
    const auto scored = run({"eval", "--dataset", (dir / "ds.jsonl").string(), "--scores", (dir / "scores.jsonl").string()});
    ASSERT_EQ(scored.code, 0) << scored.err;
    EXPECT_NEAR(json::parse(scored.lines().at(0)).at("mrr").get<double>(), 1.0, 1e-12);

    write("bad.jsonl", dataset + R"({"target": "t", "split": "dev", "candidates": []})" "\n");
    const auto bad = run({"eval", "--dataset", (dir / "bad.jsonl").string()});
    EXPECT_EQ(bad.code, 1);
    EXPECT_EQ(bad.error().at("kind"), "validation");
    EXPECT_NE(bad.error().at("message").get<std::string>().find("line 3"), std::string::npos);
}

TEST_F(CliTest, AnnotationWorkflow) {
    const auto fixture = qa::testing::make_cluster_fixture();
    std::string lines;
    for (const auto& r : fixture.records) lines += json{{"question", *r.question}, {"answer", *r.answer}}.dump() + "\n";
    write("fixture.jsonl", lines);
    const std::vector<std::string> base = {"--store", store(), "--seed", "7", "--dim", "128"};
    auto with = [&](std::vector<std::string> extra) {
        auto args = base;
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    };
    ASSERT_EQ(with({"ingest", "--source", "fixture", (dir / "fixture.jsonl").string()}).code, 0);
    const auto targets = with({"sample", "--n", "6", "--remove", "--out", (dir / "targets.jsonl").string()});
    ASSERT_EQ(targets.code, 0) << targets.err;
    ASSERT_EQ(with({"index", "build"}).code, 0);

    const std::string ann = (dir / "ann").string();
    const auto gen = with({"annotate", "--dir", ann, "gen", "--targets", (dir / "targets.jsonl").string()});
    ASSERT_EQ(gen.code, 0) << gen.err;
    EXPECT_EQ(json::parse(gen.out).at("targets"), 6);
    EXPECT_EQ(json::parse(gen.out).at("tasks"), 36);  // 6 x 30 real triplets, five per task

    const auto sim = with({"annotate", "--dir", ann, "simulate", "--fail", "w03:5", "--flip-rate", "0.2"});
    ASSERT_EQ(sim.code, 0) << sim.err;
    const auto validate = with({"annotate", "--dir", ann, "validate"});
    ASSERT_EQ(validate.code, 0) << validate.err;
    EXPECT_NE(validate.out.find("w03"), std::string::npos);
    ASSERT_EQ(with({"annotate", "--dir", ann, "aggregate"}).code, 0);
    // Exporting with ties outstanding fails until the tiebreak round is in.
    const auto early = with({"annotate", "--dir", ann, "export"});
    EXPECT_EQ(early.code, 1);
    EXPECT_EQ(early.error().at("kind"), "export");
    ASSERT_EQ(with({"annotate", "--dir", ann, "simulate", "--tiebreak"}).code, 0);
    ASSERT_EQ(with({"annotate", "--dir", ann, "validate"}).code, 0);
    ASSERT_EQ(with({"annotate", "--dir", ann, "aggregate"}).code, 0);
    const auto exported = with({"annotate", "--dir", ann, "export", "--out", (dir / "dataset.jsonl").string()});
    ASSERT_EQ(exported.code, 0) << exported.err;

    const auto dataset = qa::load_dataset(dir / "dataset.jsonl");
    EXPECT_EQ(dataset.size(), 6U);
    const auto eval = run({"eval", "--dataset", (dir / "dataset.jsonl").string()});
    EXPECT_EQ(eval.code, 0) << eval.err;

    // The worker-facing file never carries expected labels.
    std::ifstream tasks(dir / "ann" / "tasks.jsonl");
    const std::string content((std::istreambuf_iterator<char>(tasks)), std::istreambuf_iterator<char>());
    EXPECT_EQ(content.find("expected"), std::string::npos);
}

TEST_F(CliTest, BenchReferenceAndSmallRun) {
    const auto ref = run({"bench", "reference", "--curve", "scaling"});
    ASSERT_EQ(ref.code, 0) << ref.err;
    EXPECT_EQ(ref.lines().at(0), "x,stage,mean_seconds,stddev,reps");
    EXPECT_EQ(ref.lines().size(), 14U);

    const auto small = run({"--dim", "32", "--seed", "1", "bench", "candidates", "--synthetic", "500", "--ks",
                            "1,5,...,20", "--reps", "2", "--warmup", "0", "--queries", "3"});
    ASSERT_EQ(small.code, 0) << small.err;
    EXPECT_EQ(small.lines().size(), 1U + 3 * 5);

    const auto out = dir / "scaling.csv";
    const auto scaling = run({"--dim", "32", "--seed", "1", "bench", "scaling", "--sizes", "100,300", "--k", "10",
                              "--reps", "2", "--warmup", "0", "--out", out.string()});
    ASSERT_EQ(scaling.code, 0) << scaling.err;
    std::ifstream csv(out);
    EXPECT_EQ(qa::parse_csv(csv).size(), 2U);
}

TEST(ParseSizeList, Expansion) {
    using V = std::vector<std::size_t>;
    EXPECT_EQ(qa::cli::parse_size_list("20k,50k,100k,200k"), (V{20000, 50000, 100000, 200000}));
    EXPECT_EQ(qa::cli::parse_size_list("1,50,...,500"),
              (V{1, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500}));
    EXPECT_EQ(qa::cli::parse_size_list("10,20,...,50"), (V{10, 20, 30, 40, 50}));
    EXPECT_EQ(qa::cli::parse_size_list("7"), (V{7}));
    EXPECT_THROW(qa::cli::parse_size_list("1,...,5"), qa::ArgumentError);
    EXPECT_THROW(qa::cli::parse_size_list("1,2,..."), qa::ArgumentError);
    EXPECT_THROW(qa::cli::parse_size_list("5,3,...,9"), qa::ArgumentError);
    EXPECT_THROW(qa::cli::parse_size_list("1,3,...,8"), qa::ArgumentError);
    EXPECT_THROW(qa::cli::parse_size_list("1,,2"), qa::ArgumentError);
}

}  // namespace
