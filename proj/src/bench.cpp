#include "qa/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/random.hpp"
#include "qa/text.hpp"

namespace qa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point from, Clock::time_point to) {
    return std::chrono::duration<double>(to - from).count();
}

/// Welford accumulator.
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    double mean() const { return mean_; }
    double stddev() const { return n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1)) : 0.0; }
    std::size_t count() const { return n_; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

BenchPoint to_point(double x, Stage stage, const RunningStats& stats) {
    return BenchPoint{x, stage, stats.mean(), stats.stddev(), stats.count()};
}

bool point_order(const BenchPoint& a, const BenchPoint& b) {
    return std::pair(a.stage, a.x) < std::pair(b.stage, b.x);
}

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = [] {
        static constexpr std::string_view syllables[] = {"ka", "lo", "mi", "ren", "sa", "tor", "vi", "den", "pra",
                                                         "qu", "shi", "bel", "ga", "no", "rus", "te", "wan", "zel",
                                                         "fi", "har", "jo", "mar", "pel", "cor"};
        constexpr std::size_t n = std::size(syllables);
        std::vector<std::string> out;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) out.push_back(std::string(syllables[a]) + std::string(syllables[b]));
        return out;
    }();
    return words;
}

std::string random_phrase(Rng& rng, std::size_t min_words, std::size_t max_words) {
    static constexpr std::string_view openers[] = {"how", "what", "why", "when", "where", "who", "which", "can"};
    const auto& words = vocabulary();
    std::string out(openers[rng.uniform_index(std::size(openers))]);
    const auto count = min_words + static_cast<std::size_t>(rng.uniform_index(max_words - min_words + 1));
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(' ');
        out += words[static_cast<std::size_t>(rng.uniform_index(words.size()))];
    }
    return out;
}

}  // namespace

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::retrieval: return "retrieval";
        case Stage::rerank: return "rerank";
        case Stage::total: return "total";
    }
    return "?";
}

Stage parse_stage(std::string_view text) {
    if (text == "retrieval") return Stage::retrieval;
    if (text == "rerank") return Stage::rerank;
    if (text == "total") return Stage::total;
    throw ArgumentError(fmt::format("unknown stage '{}'", text));
}

BenchResult bench_candidates(const Pipeline& pipeline, std::span<const std::string> queries,
                             std::span<const std::size_t> ks, const BenchOptions& options) {
    if (queries.empty()) throw ArgumentError("benchmark needs at least one query");
    if (options.reps == 0) throw ArgumentError("benchmark needs at least one repetition");
    for (const auto k : ks)
        if (k == 0) throw ArgumentError("benchmark k must be at least 1");
    BenchResult result;
    std::vector<RunningStats> retrieval(ks.size()), rerank(ks.size()), total(ks.size());
    // Each round asks one query at every k, so drift over the run lands on all k alike.
    try {
        for (std::size_t round = 0; round < options.warmup + options.reps; ++round) {
            const auto& q = queries[round % queries.size()];
            for (std::size_t j = 0; j < ks.size(); ++j) {
                const auto t0 = Clock::now();
                const auto hits = pipeline.retrieve(q, ks[j]);
                const auto t1 = Clock::now();
                const auto ranked = pipeline.rerank(q, hits);
                const auto t2 = Clock::now();
                if (round < options.warmup) continue;
                retrieval[j].add(seconds_since(t0, t1));
                rerank[j].add(seconds_since(t1, t2));
                total[j].add(seconds_since(t0, t2));
            }
        }
    } catch (const Error& e) {
        result.partial = true;
        result.error = e.what();
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
        if (retrieval[j].count() == 0) continue;
        const auto x = static_cast<double>(ks[j]);
        result.points.push_back(to_point(x, Stage::retrieval, retrieval[j]));
        result.points.push_back(to_point(x, Stage::rerank, rerank[j]));
        result.points.push_back(to_point(x, Stage::total, total[j]));
    }
    return result;
}

BenchResult bench_db_scaling(const VectorIndex& full, const Encoder& encoder, std::span<const std::string> queries,
                             std::span<const std::size_t> sizes, std::size_t k, const BenchOptions& options) {
    if (queries.empty()) throw ArgumentError("benchmark needs at least one query");
    if (options.reps == 0) throw ArgumentError("benchmark needs at least one repetition");
    if (k == 0) throw ArgumentError("benchmark k must be at least 1");
    for (const auto n : sizes)
        if (n > full.size())
            throw ArgumentError(fmt::format("database size {} exceeds the {} generated rows", n, full.size()));
    BenchResult result;
    std::vector<RunningStats> retrieval(sizes.size());
    try {
        for (std::size_t round = 0; round < options.warmup + options.reps; ++round) {
            const auto& q = queries[round % queries.size()];
            for (std::size_t j = 0; j < sizes.size(); ++j) {
                const auto t0 = Clock::now();
                const auto query = encoder.encode_query(q);
                const auto hits = sizes[j] == 0 ? std::vector<RetrievalResult>{}
                                                : full.search_first(query.view(), k, sizes[j]);
                const auto t1 = Clock::now();
                if (round >= options.warmup) retrieval[j].add(seconds_since(t0, t1));
            }
        }
    } catch (const Error& e) {
        result.partial = true;
        result.error = e.what();
    }
    for (std::size_t j = 0; j < sizes.size(); ++j)
        if (retrieval[j].count() > 0)
            result.points.push_back(to_point(static_cast<double>(sizes[j]), Stage::retrieval, retrieval[j]));
    return result;
}

double measure_throughput(const Pipeline& pipeline, std::span<const std::string> queries, std::size_t threads,
                          std::size_t requests_per_thread) {
    if (queries.empty() || threads == 0 || requests_per_thread == 0)
        throw ArgumentError("throughput needs queries, threads and requests");
    std::atomic<std::size_t> done{0};
    const auto start = Clock::now();
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            for (std::size_t i = 0; i < requests_per_thread; ++i) {
                pipeline.answer(queries[(t * requests_per_thread + i) % queries.size()]);
                done.fetch_add(1, std::memory_order_relaxed);
            }
        });
    }
    workers.clear();
    return static_cast<double>(done.load()) / seconds_since(start, Clock::now());
}

std::vector<RawRecord> synthetic_records(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RawRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RawRecord r;
        r.question = random_phrase(rng, 5, 9);
        r.answer = random_phrase(rng, 10, 20) + fmt::format(" ({})", i);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> synthetic_queries(std::size_t n, std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0x51554552ULL));
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_phrase(rng, 5, 9));
    return out;
}

std::string emit_csv(std::vector<BenchPoint> points) {
    std::stable_sort(points.begin(), points.end(), point_order);
    std::string out = "x,stage,mean_seconds,stddev,reps\n";
    for (const auto& p : points) out += fmt::format("{},{},{},{},{}\n", p.x, to_string(p.stage), p.mean_seconds, p.stddev, p.reps);
    return out;
}

std::vector<BenchPoint> parse_csv(std::istream& in) {
    std::vector<BenchPoint> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (trim(text).empty()) continue;
        if (line == 1) {
            if (trim(text) != "x,stage,mean_seconds,stddev,reps") throw ValidationError("unexpected CSV header", line);
            continue;
        }
        const auto fields = split(trim(text), ',');
        if (fields.size() != 5) throw ValidationError("expected 5 fields", line);
        try {
            out.push_back(BenchPoint{std::stod(fields[0]), parse_stage(fields[1]), std::stod(fields[2]),
                                     std::stod(fields[3]), static_cast<std::size_t>(std::stoull(fields[4]))});
        } catch (const std::invalid_argument&) {
            throw ValidationError("malformed number", line);
        } catch (const ArgumentError& e) {
            throw ValidationError(e.what(), line);
        }
    }
    return out;
}

std::string format_table(std::vector<BenchPoint> points) {
    std::stable_sort(points.begin(), points.end(), point_order);
    std::string out = fmt::format("{:<10} {:>12} {:>12} {:>12} {:>6}\n", "stage", "x", "mean_s", "stddev_s", "reps");
    for (const auto& p : points) {
        out += fmt::format("{:<10} {:>12} {:>12.6f} {:>12.6f} {:>6}{}\n", to_string(p.stage), p.x, p.mean_seconds,
                           p.stddev, p.reps, p.low_confidence() ? "  (low confidence)" : "");
    }
    return out;
}

std::vector<BenchPoint> reference_candidates_curve() {
    static constexpr double ks[] = {1, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500};
    static constexpr double total[] = {0.094, 0.141, 0.191, 0.227, 0.273, 0.311,
                                       0.357, 0.406, 0.439, 0.496, 0.535};
    static constexpr double rerank[] = {0.019, 0.065, 0.115, 0.151, 0.197, 0.234,
                                        0.279, 0.328, 0.360, 0.417, 0.456};
    static constexpr double retrieval[] = {0.075, 0.076, 0.076, 0.076, 0.076, 0.077,
                                           0.078, 0.078, 0.079, 0.079, 0.079};
    std::vector<BenchPoint> out;
    for (std::size_t i = 0; i < std::size(ks); ++i) {
        out.push_back(BenchPoint{ks[i], Stage::retrieval, retrieval[i], 0.0, 200});
        out.push_back(BenchPoint{ks[i], Stage::rerank, rerank[i], 0.0, 200});
        out.push_back(BenchPoint{ks[i], Stage::total, total[i], 0.0, 200});
    }
    return out;
}

std::vector<BenchPoint> reference_scaling_curve() {
    static constexpr double millions[] = {0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0};
    static constexpr double seconds[] = {0.0334, 0.0337, 0.0387, 0.0438, 0.0490, 0.0534, 0.0593,
                                         0.0627, 0.0675, 0.0694, 0.0752, 0.0770, 0.0785};
    std::vector<BenchPoint> out;
    for (std::size_t i = 0; i < std::size(millions); ++i)
        out.push_back(BenchPoint{std::round(millions[i] * 1e6), Stage::retrieval, seconds[i], 0.0, 200});
    return out;
}

double linear_fit_r2(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ArgumentError("R^2 needs at least two paired samples");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return syy == 0.0 ? 1.0 : 0.0;
    return (sxy * sxy) / (sxx * syy);
}

std::size_t parse_count(std::string_view text) {
    const auto t = lower_ascii(trim(text));
    if (t.empty()) throw ArgumentError("empty count");
    double scale = 1.0;
    std::string digits = t;
    if (t.back() == 'k') {
        scale = 1e3;
        digits.pop_back();
    } else if (t.back() == 'm') {
        scale = 1e6;
        digits.pop_back();
    }
    try {
        std::size_t used = 0;
        const double value = std::stod(digits, &used);
        if (used != digits.size() || value < 0) throw std::invalid_argument("bad count");
        return static_cast<std::size_t>(std::llround(value * scale));
    } catch (const std::exception&) {
        throw ArgumentError(fmt::format("'{}' is not a count", text));
    }
}

}  // namespace qa
