#include "qa/vector_index.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "qa/errors.hpp"
#include "qa/text.hpp"

static_assert(std::endian::native == std::endian::little,
              "the index file is little-endian and scanned in place");

namespace qa {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kScanBlock = 256;

std::int64_t elapsed_ns(Clock::time_point from, Clock::time_point to) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(to - from).count();
}

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void write_header(std::ostream& out, std::size_t dim, std::size_t count) {
    out.write(VectorIndex::kMagic, sizeof(VectorIndex::kMagic));
    write_pod<std::uint32_t>(out, VectorIndex::kVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(count));
}

void write_ids(std::ostream& out, std::span<const std::uint64_t> ids) {
    out.write(reinterpret_cast<const char*>(ids.data()), static_cast<std::streamsize>(ids.size_bytes()));
}

fs::path tmp_sibling(const fs::path& path) {
    return fs::path(path).concat(".tmp");
}

}  // namespace

float dot(std::span<const float> a, std::span<const float> b) noexcept {
    const std::size_t n = std::min(a.size(), b.size());
    const float* x = a.data();
    const float* y = b.data();
    float acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += x[i + j] * y[i + j];
    }
    for (; i < n; ++i) acc[i % 8] += x[i] * y[i];
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw ArgumentError(fmt::format("cosine of vectors with dims {} and {}", u.size(), v.size()));
    double uv = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw ArgumentError("cosine is undefined for a zero vector");
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

TopK::TopK(std::size_t k) : k_(k) {
    buffer_.reserve(2 * k);
}

void TopK::offer(float score, std::uint64_t pair_id) {
    if (k_ == 0 || score < floor_) return;
    buffer_.push_back(RetrievalResult{pair_id, score});
    if (buffer_.size() == 2 * k_) compact();
}

void TopK::compact() {
    const auto kth = buffer_.begin() + static_cast<std::ptrdiff_t>(k_ - 1);
    std::nth_element(buffer_.begin(), kth, buffer_.end(), ranks_before);
    floor_ = kth->score;
    buffer_.resize(k_);
}

std::vector<RetrievalResult> TopK::take_sorted() {
    if (buffer_.size() > k_) compact();
    std::sort(buffer_.begin(), buffer_.end(), ranks_before);
    return std::move(buffer_);
}

struct VectorIndex::Mapping {
    void* base = nullptr;
    std::size_t length = 0;

    ~Mapping() {
        if (base != nullptr && base != MAP_FAILED) ::munmap(base, length);
    }
};

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw ArgumentError("index dimension must be positive");
}

VectorIndex::VectorIndex(std::size_t dim, std::vector<float> vectors, std::vector<std::uint64_t> ids)
    : dim_(dim), count_(ids.size()), owned_vectors_(std::move(vectors)), owned_ids_(std::move(ids)) {
    if (dim_ == 0) throw ArgumentError("index dimension must be positive");
    if (owned_vectors_.size() != count_ * dim_)
        throw ArgumentError(fmt::format("index data holds {} floats, expected {} x {}", owned_vectors_.size(),
                                        count_, dim_));
    data_ = owned_vectors_.data();
    ids_ = reinterpret_cast<const unsigned char*>(owned_ids_.data());
}

VectorIndex::VectorIndex(VectorIndex&&) noexcept = default;
VectorIndex& VectorIndex::operator=(VectorIndex&&) noexcept = default;
VectorIndex::~VectorIndex() = default;

std::uint64_t VectorIndex::pair_id(std::size_t i) const noexcept {
    std::uint64_t id;
    std::memcpy(&id, ids_ + i * sizeof(std::uint64_t), sizeof(id));
    return id;
}

VectorIndex VectorIndex::load(const fs::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw NotFoundError(fmt::format("cannot open index {}", path.string()));
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw FormatError(fmt::format("cannot stat index {}", path.string()));
    }
    const auto length = static_cast<std::size_t>(st.st_size);
    if (length < kHeaderSize) {
        ::close(fd);
        throw FormatError(fmt::format("index {} is truncated", path.string()));
    }
    auto mapping = std::make_unique<Mapping>();
    mapping->length = length;
    mapping->base = ::mmap(nullptr, length, PROT_READ, MAP_PRIVATE, fd, 0);
    ::close(fd);
    if (mapping->base == MAP_FAILED) throw FormatError(fmt::format("cannot map index {}", path.string()));

    const auto* bytes = static_cast<const unsigned char*>(mapping->base);
    if (std::memcmp(bytes, kMagic, sizeof(kMagic)) != 0)
        throw FormatError(fmt::format("{} is not an index file", path.string()));
    std::uint32_t version = 0;
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::memcpy(&version, bytes + 8, 4);
    std::memcpy(&dim, bytes + 12, 4);
    std::memcpy(&count, bytes + 16, 8);
    if (version != kVersion) throw FormatError(fmt::format("unsupported index version {}", version));
    if (dim == 0) throw FormatError("index dimension is zero");
    const std::size_t expected = kHeaderSize + count * dim * sizeof(float) + count * sizeof(std::uint64_t);
    if (length != expected)
        throw FormatError(fmt::format("index {} has {} bytes, header implies {}", path.string(), length, expected));

    VectorIndex index(dim);
    index.count_ = count;
    index.data_ = reinterpret_cast<const float*>(bytes + kHeaderSize);
    index.ids_ = bytes + kHeaderSize + count * dim * sizeof(float);
    index.mapping_ = std::move(mapping);
    return index;
}

void VectorIndex::save(const fs::path& path) const {
    const auto tmp = tmp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        write_header(out, dim_, count_);
        out.write(reinterpret_cast<const char*>(data_), static_cast<std::streamsize>(count_ * dim_ * sizeof(float)));
        out.write(reinterpret_cast<const char*>(ids_), static_cast<std::streamsize>(count_ * sizeof(std::uint64_t)));
        out.flush();
        if (!out) throw FormatError("failed to write index " + tmp.string());
    }
    fs::rename(tmp, path);
}

void VectorIndex::check_query(std::span<const float> query, std::size_t k) const {
    if (k == 0) throw ArgumentError("k must be at least 1");
    if (query.size() != dim_)
        throw ArgumentError(fmt::format("query has dim {}, index has dim {}", query.size(), dim_));
}

template <bool Timed>
std::vector<RetrievalResult> VectorIndex::scan(std::span<const float> query, std::size_t k, std::size_t rows,
                                               ScanTiming* timing) const {
    TopK top(std::min(k, rows));
    float scores[kScanBlock];
    for (std::size_t begin = 0; begin < rows; begin += kScanBlock) {
        const std::size_t end = std::min(begin + kScanBlock, rows);
        Clock::time_point t0;
        if constexpr (Timed) t0 = Clock::now();
        for (std::size_t i = begin; i < end; ++i) scores[i - begin] = dot(query, row(i));
        Clock::time_point t1;
        if constexpr (Timed) t1 = Clock::now();
        float floor = top.floor();
        for (std::size_t i = begin; i < end; ++i) {
            if (scores[i - begin] < floor) continue;
            top.offer(scores[i - begin], pair_id(i));
            floor = top.floor();
        }
        if constexpr (Timed) {
            const auto t2 = Clock::now();
            timing->scan_ns += elapsed_ns(t0, t1);
            timing->select_ns += elapsed_ns(t1, t2);
        }
    }
    if constexpr (Timed) {
        const auto t0 = Clock::now();
        auto out = top.take_sorted();
        timing->select_ns += elapsed_ns(t0, Clock::now());
        return out;
    } else {
        return top.take_sorted();
    }
}

std::vector<RetrievalResult> VectorIndex::search(std::span<const float> query, std::size_t k) const {
    check_query(query, k);
    return scan<false>(query, k, count_, nullptr);
}

std::vector<RetrievalResult> VectorIndex::search_first(std::span<const float> query, std::size_t k,
                                                       std::size_t n) const {
    check_query(query, k);
    return scan<false>(query, k, std::min(n, count_), nullptr);
}

std::pair<std::vector<RetrievalResult>, ScanTiming> VectorIndex::scan_latency_probe(std::span<const float> query,
                                                                                    std::size_t k) const {
    const auto start = Clock::now();
    check_query(query, k);
    ScanTiming timing;
    auto results = scan<true>(query, k, count_, &timing);
    timing.total_ns = elapsed_ns(start, Clock::now());
    return {std::move(results), timing};
}

VectorIndex VectorIndex::prefix(std::size_t n) const {
    n = std::min(n, count_);
    std::vector<float> vectors(data_, data_ + n * dim_);
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = pair_id(i);
    return VectorIndex(dim_, std::move(vectors), std::move(ids));
}

VectorIndex build_index(std::span<const QAPair> pairs, const Encoder& encoder, const BuildOptions& options) {
    const std::size_t dim = encoder.dim();
    const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
    std::vector<float> vectors;
    vectors.reserve(pairs.size() * dim);
    std::vector<std::uint64_t> ids;
    ids.reserve(pairs.size());
    for (std::size_t begin = 0; begin < pairs.size(); begin += chunk) {
        const std::size_t end = std::min(begin + chunk, pairs.size());
        std::vector<SegmentedInput> inputs;
        inputs.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) inputs.push_back(SegmentedInput::pair(pairs[i].question, pairs[i].answer));
        const auto embeddings = encoder.encode_batch(inputs);
        for (std::size_t i = 0; i < embeddings.size(); ++i) {
            if (embeddings[i].dim() != dim)
                throw TransportError(fmt::format("encoder returned dim {} for pair {}, expected {}", embeddings[i].dim(),
                                                 pairs[begin + i].id, dim),
                                     "index");
            vectors.insert(vectors.end(), embeddings[i].values.begin(), embeddings[i].values.end());
            ids.push_back(pairs[begin + i].id);
        }
    }
    return VectorIndex(dim, std::move(vectors), std::move(ids));
}

fs::path meta_path(const fs::path& index_path) {
    return fs::path(index_path).concat(".meta.json");
}

IndexMeta read_index_meta(const fs::path& index_path) {
    const auto path = meta_path(index_path);
    std::ifstream in(path);
    if (!in) throw NotFoundError(fmt::format("index metadata {} not found", path.string()));
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError(fmt::format("{} is not valid JSON", path.string()));
    IndexMeta meta;
    meta.encoder = j.value("encoder", std::string{});
    meta.dim = j.value("dim", std::size_t{0});
    meta.count = j.value("count", std::size_t{0});
    return meta;
}

void build_index_file(std::span<const QAPair> pairs, const Encoder& encoder, const fs::path& path,
                      const BuildOptions& options) {
    const std::size_t dim = encoder.dim();
    const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
    const auto work = fs::path(path).concat(".build");

    std::uint64_t ids_hash = 0;
    for (const auto& pair : pairs) ids_hash = mix64(ids_hash ^ pair.id);
    const nlohmann::json manifest = {{"encoder", encoder.describe()},
                                     {"dim", dim},
                                     {"count", pairs.size()},
                                     {"chunk_size", chunk},
                                     {"ids_hash", ids_hash}};

    const auto manifest_file = work / "manifest.json";
    bool resume = false;
    if (fs::exists(manifest_file)) {
        std::ifstream in(manifest_file);
        const auto existing = nlohmann::json::parse(in, nullptr, false);
        resume = !existing.is_discarded() && existing == manifest;
    }
    if (!resume) {
        fs::remove_all(work);
        fs::create_directories(work);
        std::ofstream out(manifest_file);
        out << manifest.dump() << '\n';
    }

    const std::size_t chunks = (pairs.size() + chunk - 1) / chunk;
    auto chunk_file = [&](std::size_t c) { return work / fmt::format("chunk-{:06}.f32", c); };

    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(begin + chunk, pairs.size());
        const auto file = chunk_file(c);
        const auto expected_bytes = (end - begin) * dim * sizeof(float);
        if (fs::exists(file) && fs::file_size(file) == expected_bytes) continue;

        const VectorIndex part = build_index(pairs.subspan(begin, end - begin), encoder, {chunk});
        const auto tmp = tmp_sibling(file);
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(reinterpret_cast<const char*>(part.row(0).data()),
                      static_cast<std::streamsize>(expected_bytes));
            if (!out) throw FormatError("failed to write build chunk " + tmp.string());
        }
        fs::rename(tmp, file);
    }

    const auto tmp = tmp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        write_header(out, dim, pairs.size());
        std::vector<char> buffer;
        for (std::size_t c = 0; c < chunks; ++c) {
            std::ifstream in(chunk_file(c), std::ios::binary);
            buffer.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
            out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        }
        std::vector<std::uint64_t> ids;
        ids.reserve(pairs.size());
        for (const auto& pair : pairs) ids.push_back(pair.id);
        write_ids(out, ids);
        out.flush();
        if (!out) throw FormatError("failed to write index " + tmp.string());
    }
    fs::rename(tmp, path);

    {
        const nlohmann::json meta = {{"encoder", encoder.describe()}, {"dim", dim}, {"count", pairs.size()}};
        const auto meta_tmp = tmp_sibling(meta_path(path));
        std::ofstream out(meta_tmp);
        out << meta.dump(2) << '\n';
        out.close();
        fs::rename(meta_tmp, meta_path(path));
    }
    fs::remove_all(work);
}

std::shared_ptr<const VectorIndex> IndexSlot::current() const {
    std::lock_guard lock(mutex_);
    return index_;
}

void IndexSlot::publish(std::shared_ptr<const VectorIndex> index) {
    std::lock_guard lock(mutex_);
    index_ = std::move(index);
    ++generation_;
}

std::uint64_t IndexSlot::generation() const {
    std::lock_guard lock(mutex_);
    return generation_;
}

}  // namespace qa
