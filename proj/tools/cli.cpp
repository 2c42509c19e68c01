#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "qa/annotation.hpp"
#include "qa/bench.hpp"
#include "qa/config.hpp"
#include "qa/errors.hpp"
#include "qa/eval.hpp"
#include "qa/pipeline.hpp"
#include "qa/random.hpp"
#include "qa/reranker.hpp"
#include "qa/service.hpp"
#include "qa/simulation.hpp"
#include "qa/store.hpp"
#include "qa/text.hpp"
#include "qa/vector_index.hpp"

namespace qa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> parse_size_list(std::string_view text) {
    std::vector<std::size_t> out;
    bool pending_range = false;
    for (const auto& raw : split(text, ',')) {
        const auto item = trim(raw);
        if (item.empty()) throw ArgumentError(fmt::format("empty element in list '{}'", text));
        if (item == "...") {
            if (out.size() < 2 || pending_range) throw ArgumentError(fmt::format("'...' needs two values before it in '{}'", text));
            pending_range = true;
            continue;
        }
        const auto value = parse_count(item);
        if (!pending_range) {
            out.push_back(value);
            continue;
        }
        pending_range = false;
        const auto a = out[out.size() - 2];
        const auto b = out.back();
        if (b <= a || value < b) throw ArgumentError(fmt::format("'...' needs an increasing list in '{}'", text));
        std::size_t step = b - a;
        if ((value - b) % step != 0 && value % b == 0) step = b;
        if ((value - b) % step != 0)
            throw ArgumentError(fmt::format("'...' cannot reach {} from {}, {} in '{}'", value, a, b, text));
        for (auto v = b + step; v <= value; v += step) out.push_back(v);
    }
    if (pending_range) throw ArgumentError(fmt::format("'...' needs an end value in '{}'", text));
    return out;
}

namespace {

/// A pipeline stage that could not start, e.g. a missing index file.
class StageError : public NotFoundError {
public:
    StageError(std::string stage, const std::string& message)
        : NotFoundError(stage + ": " + message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    const Getenv& getenv;
    std::string config_file;
    KeyValues flags;

    EngineConfig config() const {
        KeyValues file;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw ConfigError(fmt::format("cannot read config file {}", config_file));
            file = parse_config_file(in);
        }
        return resolve_config(file, environment_settings(getenv), flags);
    }

    void log(const json& entry) const { err << entry.dump() << '\n'; }

    std::uint64_t seed(const EngineConfig& config) const {
        if (config.seed) return *config.seed;
        const auto generated = generate_seed();
        log({{"log", "generated seed"}, {"seed", generated}});
        return generated;
    }
};

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError(fmt::format("cannot read {}", path.string()));
    return in;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError(fmt::format("cannot write {}", path.string()));
    return out;
}

/// Writes to `path`, or to the standard stream when it is empty or "-".
template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& write) {
    if (path.empty() || path == "-") {
        write(fallback);
        return;
    }
    auto out = open_output(path);
    write(out);
    out.flush();
    if (!out) throw ArgumentError(fmt::format("failed writing {}", path));
}

std::unique_ptr<QAStore> open_store(const EngineConfig& config, bool must_exist) {
    if (must_exist && !fs::is_directory(config.store))
        throw StageError("store", fmt::format("no store at {}; run `qa ingest` first", config.store.string()));
    return std::make_unique<QAStore>(config.store);
}

/// Encoder matching an existing index. An explicitly configured encoder or
/// dim that disagrees with the index is an error.
std::unique_ptr<Encoder> encoder_for_index(const EngineConfig& config, const fs::path& index_path, std::size_t dim) {
    if (config.dim && *config.dim != dim)
        throw ConfigError(fmt::format("dim {} conflicts with index {} of dim {}", *config.dim, index_path.string(), dim));
    std::string spec = config.encoder;
    if (fs::exists(meta_path(index_path))) {
        const auto meta = read_index_meta(index_path);
        if (!config.encoder.empty()) {
            const auto wanted = make_encoder(config.encoder, dim)->describe();
            if (wanted != meta.encoder)
                throw ConfigError(fmt::format("encoder {} conflicts with index {} built by {}", wanted,
                                              index_path.string(), meta.encoder));
        }
        spec = meta.encoder;
    }
    return make_encoder(spec, dim);
}

struct Engine {
    EngineConfig config;
    std::unique_ptr<QAStore> store;
    std::shared_ptr<const VectorIndex> index;
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Scorer> scorer;
    std::unique_ptr<Pipeline> pipeline;
};

PipelineConfig pipeline_config(const EngineConfig& config) {
    PipelineConfig p;
    p.k = config.k;
    p.layout = config.layout;
    p.threshold = config.threshold;
    return p;
}

Engine open_engine(const EngineConfig& config) {
    Engine e;
    e.config = config;
    const auto path = config.index_path();
    if (!fs::exists(path))
        throw StageError("index", fmt::format("no index at {}; run `qa index build` first", path.string()));
    e.store = open_store(config, true);
    e.index = std::make_shared<const VectorIndex>(VectorIndex::load(path));
    e.encoder = encoder_for_index(config, path, e.index->dim());
    e.scorer = make_scorer(config.scorer);
    e.pipeline = std::make_unique<Pipeline>(*e.store, e.index, *e.encoder, *e.scorer, pipeline_config(config));
    return e;
}

// ---------------------------------------------------------------- store

void cmd_ingest(Context& ctx, const SourceConfig& source, const std::string& file) {
    const auto config = ctx.config();
    source.validate();
    auto store = open_store(config, false);
    IngestReport report;
    if (file == "-") {
        report = store->ingest_jsonl(std::cin, source);
    } else {
        auto in = open_input(file);
        report = store->ingest_jsonl(in, source);
    }
    ctx.out << to_json(report).dump() << '\n';
}

void cmd_export(Context& ctx, const std::string& source, const std::string& out_path) {
    const auto config = ctx.config();
    const auto store = open_store(config, true);
    const auto filter = source.empty() ? std::nullopt : std::optional<std::string>(source);
    with_output(out_path, ctx.out, [&](std::ostream& os) { store->export_pairs(os, filter); });
}

void cmd_sample(Context& ctx, std::size_t n, bool remove, const std::string& out_path) {
    const auto config = ctx.config();
    const auto store = open_store(config, true);
    const auto seed = ctx.seed(config);
    const auto picked = remove ? store->sample_and_remove(n, seed) : store->sample(n, seed);
    with_output(out_path, ctx.out, [&](std::ostream& os) {
        for (const auto& p : picked) os << to_json(p).dump() << '\n';
    });
}

// ---------------------------------------------------------------- index

void cmd_index_build(Context& ctx, std::size_t chunk_size) {
    const auto config = ctx.config();
    const auto store = open_store(config, true);
    const auto encoder = make_encoder(config.encoder, config.dim.value_or(kDefaultDim));
    const auto pairs = store->pairs();
    const auto path = config.index_path();
    build_index_file(pairs, *encoder, path, BuildOptions{chunk_size});
    ctx.out << json{{"index", path.string()},
                    {"count", pairs.size()},
                    {"dim", encoder->dim()},
                    {"encoder", encoder->describe()}}
                   .dump()
            << '\n';
}

void cmd_index_search(Context& ctx, const std::string& query, std::size_t k) {
    const auto config = ctx.config();
    const auto engine = open_engine(config);
    const auto hits = engine.pipeline->retrieve(query, k);
    std::size_t rank = 0;
    for (const auto& hit : hits) {
        const auto pair = engine.store->find(hit.pair_id);
        if (!pair) continue;
        ctx.out << json{{"rank", ++rank}, {"pair_id", hit.pair_id}, {"score", hit.score}, {"question", pair->question}}
                       .dump()
                << '\n';
    }
}

// ---------------------------------------------------------------- answer / serve

void cmd_answer(Context& ctx, const std::string& question, bool no_rerank) {
    const auto config = ctx.config();
    const auto engine = open_engine(config);
    auto pc = pipeline_config(config);
    pc.rerank = !no_rerank;
    const auto response = engine.pipeline->answer(question, pc);
    if (!response.answer) ctx.log({{"log", "no answer"}, {"question", question}});
    ctx.out << response.answer.value_or("") << '\n' << to_json(response).dump() << '\n';
}

void cmd_serve(Context& ctx, const std::string& host, int port) {
    const auto config = ctx.config();
    const auto engine = open_engine(config);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    AnswerService service(*engine.pipeline);
    const int bound = service.bind(host, port);
    if (bound < 0) throw ArgumentError(fmt::format("cannot bind {}:{}", host, port));
    ctx.out << json{{"listening", {{"host", host}, {"port", bound}}}}.dump() << std::endl;

    std::atomic<bool> signalled{false};
    std::jthread waiter([&service, &signalled, signals] {
        int received = 0;
        sigwait(&signals, &received);
        signalled = true;
        service.stop();
    });
    service.listen();
    // listen() can also return on its own; wake the waiter so it can be joined.
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
}

// ---------------------------------------------------------------- eval

std::vector<std::vector<double>> pipeline_scores(const EngineConfig& config,
                                                 std::span<const RankingExample> dataset) {
    const auto scorer = make_scorer(config.scorer);
    std::vector<std::vector<double>> out;
    out.reserve(dataset.size());
    for (const auto& example : dataset) {
        std::vector<Triplet> triplets;
        for (const auto& c : example.candidates) triplets.push_back(Triplet{example.target, c.question, c.answer});
        out.push_back(scorer->score_batch(config.layout, triplets));
    }
    return out;
}

std::vector<std::vector<double>> retrieval_scores(const EngineConfig& config,
                                                  std::span<const RankingExample> dataset) {
    std::unique_ptr<Encoder> encoder;
    const auto path = config.index_path();
    if (fs::exists(meta_path(path))) {
        encoder = encoder_for_index(config, path, read_index_meta(path).dim);
    } else {
        encoder = make_encoder(config.encoder, config.dim.value_or(kDefaultDim));
    }
    std::vector<std::vector<double>> out;
    out.reserve(dataset.size());
    for (const auto& example : dataset) {
        std::vector<SegmentedInput> inputs;
        inputs.push_back(SegmentedInput::query(example.target));
        for (const auto& c : example.candidates) inputs.push_back(SegmentedInput::pair(c.question, c.answer));
        const auto vectors = encoder->encode_batch(inputs);
        std::vector<double> scores;
        for (std::size_t i = 1; i < vectors.size(); ++i) scores.push_back(dot(vectors[0].view(), vectors[i].view()));
        out.push_back(std::move(scores));
    }
    return out;
}

void cmd_eval(Context& ctx, const std::string& dataset_path, const std::string& scores_spec) {
    const auto config = ctx.config();
    const auto dataset = load_dataset(dataset_path);
    std::vector<std::vector<double>> scores;
    if (scores_spec == "given") {
        scores = identity_scores(dataset);
    } else if (scores_spec == "pipeline") {
        scores = pipeline_scores(config, dataset);
    } else if (scores_spec == "retrieval") {
        scores = retrieval_scores(config, dataset);
    } else {
        scores = load_scores(scores_spec);
    }
    const auto report = evaluate(dataset, scores);
    ctx.out << to_json(report).dump() << '\n' << format_table(report);
}

// ---------------------------------------------------------------- annotate

struct AnnotationFiles {
    fs::path dir;

    fs::path provenance() const { return dir / "provenance.jsonl"; }
    fs::path tasks() const { return dir / "tasks.jsonl"; }
    fs::path answer_key() const { return dir / "answer_key.jsonl"; }
    fs::path judgments() const { return dir / "judgments.csv"; }
    fs::path verdicts() const { return dir / "verdicts.jsonl"; }
    fs::path workers() const { return dir / "workers.json"; }
    fs::path labels() const { return dir / "labels.jsonl"; }

    std::vector<TargetProvenance> read_provenance() const {
        auto in = open_input(provenance());
        return parse_provenance(in);
    }
    std::vector<AnnotationTask> read_all_tasks() const {
        auto worker = open_input(tasks());
        auto key = open_input(answer_key());
        return read_tasks(worker, key);
    }
    std::vector<Judgment> read_judgments() const {
        auto in = open_input(judgments());
        return parse_judgments_csv(in);
    }
    std::vector<AggregatedLabel> read_labels() const {
        auto in = open_input(labels());
        std::vector<AggregatedLabel> out;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (trim(line).empty()) continue;
            const auto j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw ValidationError("labels: not JSON", n);
            out.push_back(aggregated_label_from_json(j));
        }
        return out;
    }
};

std::vector<std::string> read_target_questions(const fs::path& path) {
    auto in = open_input(path);
    std::vector<std::string> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("question") || !j["question"].is_string())
            throw ValidationError("targets: expected an object with a question", n);
        out.push_back(j["question"].get<std::string>());
    }
    if (out.empty()) throw ArgumentError(fmt::format("no target questions in {}", path.string()));
    return out;
}

void cmd_annotate_gen(Context& ctx, const AnnotationFiles& files, const std::string& targets_path, std::size_t depth,
                      std::size_t pool_size) {
    const auto config = ctx.config();
    const auto seed = ctx.seed(config);
    const auto engine = open_engine(config);

    std::vector<TargetProvenance> provenance;
    for (const auto& target : read_target_questions(targets_path)) {
        const auto hits = engine.pipeline->retrieve(target, depth);
        provenance.push_back(TargetProvenance{target, engine.pipeline->candidates_for(hits)});
    }
    std::erase_if(provenance, [](const TargetProvenance& p) { return p.candidates.empty(); });

    const auto pool_pairs = engine.store->sample(std::min(pool_size, engine.store->size()), mix64(seed));
    std::vector<Triplet> positives;
    std::vector<PoolQuestion> pool;
    for (const auto& p : pool_pairs) {
        positives.push_back(Triplet{p.question, p.question, p.answer});
        pool.push_back(PoolQuestion{p.question, p.answer});
    }
    const auto real = real_triplets(provenance);
    const auto tasks = generate_tasks(real, positives, pool, seed);

    fs::create_directories(files.dir);
    {
        auto out = open_output(files.provenance());
        for (const auto& p : provenance) out << to_json(p).dump() << '\n';
    }
    {
        auto out = open_output(files.tasks());
        write_worker_tasks(out, tasks);
    }
    {
        auto out = open_output(files.answer_key());
        write_answer_key(out, tasks);
    }
    ctx.out << json{{"targets", provenance.size()},
                    {"triplets", real.size()},
                    {"tasks", tasks.size()},
                    {"cost_usd", static_cast<double>(tasks.size()) * kTaskRewardUsd},
                    {"dir", files.dir.string()}}
                   .dump()
            << '\n';
}

struct SimulateOptions {
    std::size_t workers = 3;
    std::size_t per_task = 3;
    std::vector<std::string> fail;
    double flip_rate = 0.0;
    double truth_threshold = 0.5;
    bool tiebreak = false;
};

void cmd_annotate_simulate(Context& ctx, const AnnotationFiles& files, const SimulateOptions& opts) {
    const auto config = ctx.config();
    const auto seed = ctx.seed(config);
    const auto provenance = files.read_provenance();
    const auto tasks = files.read_all_tasks();

    GroundTruth truth = [&](const CandidateRef& ref) {
        if (ref.target >= provenance.size() || ref.rank >= provenance[ref.target].candidates.size())
            throw ValidationError(fmt::format("task item points outside the provenance (target {}, rank {})",
                                              ref.target, ref.rank));
        const auto& c = provenance[ref.target].candidates[ref.rank];
        return reference_score(Triplet{provenance[ref.target].target, c.question, c.answer}, Layout::QQ) >=
                       opts.truth_threshold
                   ? 1
                   : 0;
    };

    std::vector<Judgment> judgments;
    if (opts.tiebreak) {
        judgments = files.read_judgments();
        const auto labels = files.read_labels();
        const auto assignments = tiebreak_assignments(tasks, labels, "tiebreaker");
        const SimulatedWorker tiebreaker{"tiebreaker", {}, 0.0};
        const auto extra = simulate_judgments(tasks, assignments, std::span(&tiebreaker, 1), truth, seed);
        judgments.insert(judgments.end(), extra.begin(), extra.end());
    } else {
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < opts.workers; ++i) ids.push_back(fmt::format("w{:02}", i + 1));
        const auto assignments = assign_round_robin(tasks, ids, opts.per_task);
        std::vector<SimulatedWorker> workers;
        for (const auto& id : ids) workers.push_back(SimulatedWorker{id, {}, opts.flip_rate});
        for (const auto& spec : opts.fail) {
            const auto colon = spec.find(':');
            if (colon == std::string::npos) throw ArgumentError(fmt::format("--fail expects WORKER:COUNT, got '{}'", spec));
            const auto id = spec.substr(0, colon);
            const auto count = parse_count(spec.substr(colon + 1));
            auto w = std::find_if(workers.begin(), workers.end(), [&](const auto& x) { return x.worker_id == id; });
            if (w == workers.end()) throw ArgumentError(fmt::format("--fail names unknown worker '{}'", id));
            for (const auto& a : assignments) {
                if (w->fail_controls_on.size() == count) break;
                if (a.worker_id == id) w->fail_controls_on.insert(a.task_id);
            }
        }
        judgments = simulate_judgments(tasks, assignments, workers, truth, seed);
    }
    auto out = open_output(files.judgments());
    write_judgments_csv(out, judgments);
    ctx.out << json{{"judgments", judgments.size()}, {"file", files.judgments().string()}}.dump() << '\n';
}

struct Validation {
    WorkerLedger ledger;
    std::vector<ValidatedJudgment> validated;
    BlacklistResult blacklist;
};

Validation validate_files(const std::vector<AnnotationTask>& tasks, const AnnotationFiles& files) {
    Validation v;
    const auto judgments = files.read_judgments();
    v.validated = validate_all(tasks, judgments, v.ledger);
    v.blacklist = apply_blacklist(v.ledger, v.validated);
    return v;
}

json workers_json(const WorkerLedger& ledger) {
    json workers = json::object();
    for (const auto& [id, r] : ledger.records())
        workers[id] = {{"assigned", r.assigned}, {"failed", r.failed}, {"blacklisted", r.blacklisted}};
    return workers;
}

void cmd_annotate_validate(Context& ctx, const AnnotationFiles& files) {
    const auto tasks = files.read_all_tasks();
    const auto v = validate_files(tasks, files);
    std::size_t accepted = 0;
    {
        auto out = open_output(files.verdicts());
        for (const auto& j : v.validated) {
            if (j.verdict == Verdict::accepted) ++accepted;
            out << json{{"task_id", j.judgment.task_id},
                        {"worker_id", j.judgment.worker_id},
                        {"verdict", std::string(to_string(j.verdict))}}
                       .dump()
                << '\n';
        }
    }
    {
        auto out = open_output(files.workers());
        out << workers_json(v.ledger).dump(2) << '\n';
    }
    ctx.out << json{{"accepted", accepted},
                    {"rejected", v.validated.size() - accepted},
                    {"blacklisted", v.blacklist.blacklisted},
                    {"workers", workers_json(v.ledger)}}
                   .dump()
            << '\n';
}

void cmd_annotate_aggregate(Context& ctx, const AnnotationFiles& files) {
    const auto tasks = files.read_all_tasks();
    const auto v = validate_files(tasks, files);
    const auto labels = aggregate(tasks, v.validated, v.blacklist);
    std::map<std::string, std::size_t> counts{{"positive", 0}, {"negative", 0}, {"needs_tiebreak", 0}, {"unlabeled", 0}};
    {
        auto out = open_output(files.labels());
        for (const auto& l : labels) {
            ++counts[l.label ? std::string(to_string(*l.label)) : "unlabeled"];
            out << to_json(l).dump() << '\n';
        }
    }
    json summary = counts;
    summary["blacklisted"] = v.blacklist.blacklisted;
    summary["discarded_judgments"] = v.blacklist.discarded.size();
    ctx.out << summary.dump() << '\n';
}

void cmd_annotate_export(Context& ctx, const AnnotationFiles& files, const std::string& splits,
                         const std::string& out_path) {
    const auto config = ctx.config();
    const auto seed = ctx.seed(config);
    const auto provenance = files.read_provenance();
    const auto labels = files.read_labels();
    const auto dataset = export_ranking_dataset(labels, provenance, parse_split_proportions(splits), seed);
    with_output(out_path, ctx.out, [&](std::ostream& os) { write_dataset(os, dataset); });
}

// ---------------------------------------------------------------- bench

struct SyntheticEngine {
    QAStore store;
    std::shared_ptr<const VectorIndex> index;
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Scorer> scorer;
    std::unique_ptr<Pipeline> pipeline;
};

std::unique_ptr<SyntheticEngine> synthetic_engine(const EngineConfig& config, std::size_t n, std::uint64_t seed) {
    auto e = std::make_unique<SyntheticEngine>();
    const auto records = synthetic_records(n, seed);
    e->store.ingest(records, SourceConfig{"synthetic", 1.0, false});
    e->encoder = make_encoder(config.encoder, config.dim.value_or(kDefaultDim));
    e->index = std::make_shared<const VectorIndex>(build_index(e->store.pairs(), *e->encoder));
    e->scorer = make_scorer(config.scorer);
    e->pipeline = std::make_unique<Pipeline>(e->store, e->index, *e->encoder, *e->scorer, pipeline_config(config));
    return e;
}

void report_bench(Context& ctx, const BenchResult& result, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        ctx.out << emit_csv(result.points);
    } else {
        auto out = open_output(out_path);
        out << emit_csv(result.points);
        ctx.out << format_table(result.points);
    }
    if (result.partial)
        throw TransportError(fmt::format("benchmark stopped early, partial results kept: {}", result.error), "bench");
}

struct BenchFlags {
    std::string ks = "1,50,...,500";
    std::string sizes = "20k,50k,100k,200k";
    std::size_t k = 500;
    std::size_t reps = 200;
    std::size_t warmup = kWarmupIterations;
    std::size_t synthetic = 0;
    std::size_t queries = 100;
    std::size_t concurrency = 0;
    std::size_t requests = 50;
    std::string out;
    std::string curve = "candidates";
};

void cmd_bench_candidates(Context& ctx, const BenchFlags& flags) {
    const auto config = ctx.config();
    const auto seed = ctx.seed(config);
    const auto ks = parse_size_list(flags.ks);
    const auto queries = synthetic_queries(flags.queries, seed);

    std::unique_ptr<SyntheticEngine> synthetic;
    Engine engine;
    const Pipeline* pipeline = nullptr;
    if (flags.synthetic > 0) {
        synthetic = synthetic_engine(config, flags.synthetic, seed);
        pipeline = synthetic->pipeline.get();
    } else {
        engine = open_engine(config);
        pipeline = engine.pipeline.get();
    }

    if (flags.concurrency > 0) {
        const auto rps = measure_throughput(*pipeline, queries, flags.concurrency, flags.requests);
        ctx.out << json{{"threads", flags.concurrency},
                        {"requests", flags.concurrency * flags.requests},
                        {"throughput_rps", rps}}
                       .dump()
                << '\n';
        return;
    }
    const auto result = bench_candidates(*pipeline, queries, ks, BenchOptions{flags.reps, flags.warmup});
    report_bench(ctx, result, flags.out);
}

void cmd_bench_scaling(Context& ctx, const BenchFlags& flags) {
    const auto config = ctx.config();
    const auto seed = ctx.seed(config);
    const auto sizes = parse_size_list(flags.sizes);
    if (sizes.empty()) throw ArgumentError("--sizes is empty");
    const auto largest = *std::max_element(sizes.begin(), sizes.end());
    const auto encoder = make_encoder(config.encoder, config.dim.value_or(kDefaultDim));
    QAStore store;
    store.ingest(synthetic_records(largest, seed), SourceConfig{"synthetic", 1.0, false});
    const auto full = build_index(store.pairs(), *encoder);
    const auto queries = synthetic_queries(flags.queries, seed);
    const auto result = bench_db_scaling(full, *encoder, queries, sizes, flags.k, BenchOptions{flags.reps, flags.warmup});
    report_bench(ctx, result, flags.out);
}

void cmd_bench_reference(Context& ctx, const BenchFlags& flags) {
    if (flags.curve == "candidates")
        ctx.out << emit_csv(reference_candidates_curve());
    else if (flags.curve == "scaling")
        ctx.out << emit_csv(reference_scaling_curve());
    else
        throw ArgumentError(fmt::format("unknown curve '{}' (expected candidates or scaling)", flags.curve));
}

// ---------------------------------------------------------------- wiring

json error_json(std::string_view kind, const std::string& message, const std::string& stage = {}) {
    json e = {{"kind", kind}, {"message", message}};
    if (!stage.empty()) e["stage"] = stage;
    return json{{"error", std::move(e)}};
}

/// Registers a flag whose value is forwarded to config resolution as `key`.
CLI::Option* setting(CLI::App* app, Context& ctx, const std::string& name, const std::string& key,
                     const std::string& description) {
    return app->add_option_function<std::string>(
        name, [&ctx, key](const std::string& value) { ctx.flags[key] = value; }, description);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Getenv& getenv) {
    Context ctx{out, err, getenv, {}, {}};
    std::function<void()> action;

    CLI::App app{"Question answering over a store of question/answer pairs.", "qa"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", ctx.config_file, "Config file of `key = value` lines");
    setting(&app, ctx, "--store", "store", "Store directory [QA_STORE]");
    setting(&app, ctx, "--index", "index", "Index file (default <store>/vectors.idx) [QA_INDEX]");
    setting(&app, ctx, "--encoder", "encoder", "ref, ref:<seed> or remote:<url> [QA_ENCODER_URL]");
    setting(&app, ctx, "--scorer", "scorer", "ref or remote:<url> [QA_SCORER_URL]");
    setting(&app, ctx, "--dim", "dim", "Embedding dimension [QA_DIM]");
    setting(&app, ctx, "--seed", "seed", "Seed for randomized commands [QA_SEED]");

    // store
    SourceConfig source;
    std::string ingest_file;
    auto* ingest = app.add_subcommand("ingest", "Add a JSONL file of q/a records to the store");
    ingest->add_option("--source", source.name, "Source label")->required();
    ingest->add_option("--keep", source.keep_fraction, "Fraction kept by the quality filter")->capture_default_str();
    ingest->add_flag("--requires-score", source.requires_score, "Source records carry a quality score");
    ingest->add_option("file", ingest_file, "JSONL file, or - for stdin")->required();
    ingest->callback([&] { action = [&] { cmd_ingest(ctx, source, ingest_file); }; });

    std::string export_source;
    std::string out_path;
    auto* exp = app.add_subcommand("export", "Write stored pairs as JSONL");
    exp->add_option("--source", export_source, "Only pairs from this source");
    exp->add_option("--out", out_path, "Output file (default stdout)");
    exp->callback([&] { action = [&] { cmd_export(ctx, export_source, out_path); }; });

    std::size_t sample_n = 0;
    bool sample_remove = false;
    auto* sample = app.add_subcommand("sample", "Uniformly sample stored pairs");
    sample->add_option("--n", sample_n, "Number of pairs")->required();
    sample->add_flag("--remove", sample_remove, "Hold the sampled pairs out of the store");
    sample->add_option("--out", out_path, "Output file (default stdout)");
    sample->callback([&] { action = [&] { cmd_sample(ctx, sample_n, sample_remove, out_path); }; });

    // index
    auto* index = app.add_subcommand("index", "Build or query the vector index");
    index->require_subcommand(1);
    std::size_t chunk_size = BuildOptions{}.chunk_size;
    auto* build = index->add_subcommand("build", "Encode every stored pair into the index");
    build->add_option("--chunk-size", chunk_size, "Pairs per restartable chunk")->capture_default_str();
    build->callback([&] { action = [&] { cmd_index_build(ctx, chunk_size); }; });

    std::string search_query;
    std::size_t search_k = 10;
    auto* search = index->add_subcommand("search", "Top-k stored questions for a query");
    search->add_option("--query", search_query, "Query text")->required();
    search->add_option("--k", search_k, "Results")->capture_default_str();
    search->callback([&] { action = [&] { cmd_index_search(ctx, search_query, search_k); }; });

    // answer / serve
    std::string question;
    bool no_rerank = false;
    auto* answer = app.add_subcommand("answer", "Answer one question");
    setting(answer, ctx, "--k", "k", "Retrieval depth (default 500)");
    setting(answer, ctx, "--layout", "layout", "Reranker layout: QQ, QA, QQA or QAQ (default QAQ)");
    setting(answer, ctx, "--threshold", "threshold", "Minimum reranker score to answer");
    answer->add_flag("--no-rerank", no_rerank, "Answer with the top retrieval hit");
    answer->add_option("question", question, "Question text")->required();
    answer->callback([&] { action = [&] { cmd_answer(ctx, question, no_rerank); }; });

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Serve POST /answer over HTTP");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
    setting(serve, ctx, "--k", "k", "Retrieval depth (default 500)");
    setting(serve, ctx, "--layout", "layout", "Reranker layout (default QAQ)");
    setting(serve, ctx, "--threshold", "threshold", "Minimum reranker score to answer");
    serve->callback([&] { action = [&] { cmd_serve(ctx, host, port); }; });

    // eval
    std::string dataset;
    std::string scores = "given";
    auto* eval = app.add_subcommand("eval", "Ranking metrics over an annotated dataset");
    eval->add_option("--dataset", dataset, "Dataset JSONL")->required();
    eval->add_option("--scores", scores, "Score file, or: given | pipeline | retrieval")->capture_default_str();
    setting(eval, ctx, "--layout", "layout", "Layout for --scores pipeline (default QAQ)");
    eval->callback([&] { action = [&] { cmd_eval(ctx, dataset, scores); }; });

    // annotate
    AnnotationFiles files{"annotation"};
    std::string dir = files.dir.string();
    auto* annotate = app.add_subcommand("annotate", "Crowd annotation workflow");
    annotate->require_subcommand(1);
    annotate->add_option("--dir", dir, "Working directory for annotation files")->capture_default_str();
    auto with_dir = [&] { files.dir = dir; };

    std::string targets;
    std::size_t depth = kAnnotationDepth;
    std::size_t pool_size = 1000;
    auto* gen = annotate->add_subcommand("gen", "Retrieve candidates for held-out targets and build tasks");
    gen->add_option("--targets", targets, "JSONL of held-out pairs (from `qa sample --remove`)")->required();
    gen->add_option("--depth", depth, "Candidates per target")->capture_default_str();
    gen->add_option("--pool", pool_size, "Stored pairs sampled for controls")->capture_default_str();
    gen->callback([&] { action = [&] { with_dir(); cmd_annotate_gen(ctx, files, targets, depth, pool_size); }; });

    SimulateOptions sim;
    auto* simulate = annotate->add_subcommand("simulate", "Write judgments from scripted annotators");
    simulate->add_option("--workers", sim.workers)->capture_default_str();
    simulate->add_option("--per-task", sim.per_task, "Annotators per task")->capture_default_str();
    simulate->add_option("--fail", sim.fail, "WORKER:COUNT fails the control on that many assigned tasks");
    simulate->add_option("--flip-rate", sim.flip_rate, "Probability of flipping a real label")->capture_default_str();
    simulate->add_option("--truth-threshold", sim.truth_threshold, "QQ reference score counted as equivalent")
        ->capture_default_str();
    simulate->add_flag("--tiebreak", sim.tiebreak, "Add a tiebreak annotator for unresolved items");
    simulate->callback([&] { action = [&] { with_dir(); cmd_annotate_simulate(ctx, files, sim); }; });

    auto* validate = annotate->add_subcommand("validate", "Check control answers and worker failure rates");
    validate->callback([&] { action = [&] { with_dir(); cmd_annotate_validate(ctx, files); }; });

    auto* aggregate_cmd = annotate->add_subcommand("aggregate", "Majority-vote final labels");
    aggregate_cmd->callback([&] { action = [&] { with_dir(); cmd_annotate_aggregate(ctx, files); }; });

    std::string splits = "0.77,0.10,0.13";
    auto* export_cmd = annotate->add_subcommand("export", "Write the labelled ranking dataset");
    export_cmd->add_option("--splits", splits, "train,dev,test fractions")->capture_default_str();
    export_cmd->add_option("--out", out_path, "Output file (default stdout)");
    export_cmd->callback([&] { action = [&] { with_dir(); cmd_annotate_export(ctx, files, splits, out_path); }; });

    // bench
    BenchFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "Latency benchmarks");
    bench->require_subcommand(1);
    auto* candidates = bench->add_subcommand("candidates", "Stage latency against the number of candidates");
    candidates->add_option("--ks", bench_flags.ks, "Candidate counts; `a,b,...,z` expands")->capture_default_str();
    candidates->add_option("--reps", bench_flags.reps)->capture_default_str();
    candidates->add_option("--warmup", bench_flags.warmup)->capture_default_str();
    candidates->add_option("--synthetic", bench_flags.synthetic, "Benchmark a generated store of this many pairs");
    candidates->add_option("--queries", bench_flags.queries, "Distinct generated queries")->capture_default_str();
    candidates->add_option("--concurrency", bench_flags.concurrency, "Measure throughput with this many clients");
    candidates->add_option("--requests", bench_flags.requests, "Requests per client for --concurrency")
        ->capture_default_str();
    candidates->add_option("--out", bench_flags.out, "CSV file (default stdout)");
    setting(candidates, ctx, "--layout", "layout", "Reranker layout (default QAQ)");
    candidates->callback([&] { action = [&] { cmd_bench_candidates(ctx, bench_flags); }; });

    auto* scaling = bench->add_subcommand("scaling", "Retrieval latency against database size");
    scaling->add_option("--sizes", bench_flags.sizes, "Database sizes, e.g. 20k,50k")->capture_default_str();
    scaling->add_option("--k", bench_flags.k)->capture_default_str();
    scaling->add_option("--reps", bench_flags.reps)->capture_default_str();
    scaling->add_option("--warmup", bench_flags.warmup)->capture_default_str();
    scaling->add_option("--queries", bench_flags.queries)->capture_default_str();
    scaling->add_option("--out", bench_flags.out, "CSV file (default stdout)");
    scaling->callback([&] { action = [&] { cmd_bench_scaling(ctx, bench_flags); }; });

    auto* reference = bench->add_subcommand("reference", "Published latency curves as CSV");
    reference->add_option("--curve", bench_flags.curve, "candidates or scaling")->capture_default_str();
    reference->callback([&] { action = [&] { cmd_bench_reference(ctx, bench_flags); }; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << error_json("usage", e.what()).dump() << '\n';
        err << "Run `qa --help` for usage.\n";
        return 2;
    }

    try {
        if (action) action();
        out.flush();
        return 0;
    } catch (const StageError& e) {
        err << error_json(to_string(e.kind()), e.what(), e.stage()).dump() << '\n';
    } catch (const TransportError& e) {
        err << error_json(to_string(e.kind()), e.what(), e.stage()).dump() << '\n';
    } catch (const Error& e) {
        err << error_json(to_string(e.kind()), e.what()).dump() << '\n';
    } catch (const std::exception& e) {
        err << error_json("internal", e.what()).dump() << '\n';
    }
    return 1;
}

Getenv process_environment() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* value = std::getenv(name.c_str())) return std::string(value);
        return std::nullopt;
    };
}

}  // namespace qa::cli
