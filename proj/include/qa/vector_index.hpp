#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qa/encoder.hpp"
#include "qa/store.hpp"

namespace qa {

/// Plain float dot product with a fixed accumulation order, so every caller
/// (search, tests, benchmarks) sees bit-identical scores for the same rows.
float dot(std::span<const float> a, std::span<const float> b) noexcept;

/// u.v / (|u| |v|) in double precision. Throws ArgumentError on a dimension
/// mismatch or a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);

struct RetrievalResult {
    std::uint64_t pair_id = 0;
    float score = 0.0F;

    bool operator==(const RetrievalResult&) const = default;
};

/// Score descending, then pair id ascending.
inline bool ranks_before(const RetrievalResult& a, const RetrievalResult& b) noexcept {
    return a.score > b.score || (a.score == b.score && a.pair_id < b.pair_id);
}

struct ScanTiming {
    std::int64_t scan_ns = 0;
    std::int64_t select_ns = 0;
    std::int64_t total_ns = 0;
};

/// Bounded top-k selection. Entries accumulate in a buffer of up to 2k
/// that is cut back to the k best under ranks_before whenever it fills.
class TopK {
public:
    explicit TopK(std::size_t k);

    void offer(float score, std::uint64_t pair_id);
    std::vector<RetrievalResult> take_sorted();

    /// Scores strictly below this can never be among the k best.
    float floor() const noexcept { return floor_; }

private:
    void compact();

    std::size_t k_;
    float floor_ = -std::numeric_limits<float>::infinity();
    std::vector<RetrievalResult> buffer_;
};

/// Exact flat cosine index over unit-norm float32 vectors.
///
/// On-disk layout, little-endian, no padding:
///
///     offset  size     field
///     0       8        magic "QAVECIDX"
///     8       4        version (u32, currently 1)
///     12      4        dim d (u32)
///     16      8        count N (u64)
///     24      4*N*d    vectors, row-major f32
///     24+4Nd  8*N      pair ids (u64), row order
///
/// load() maps the file read-only and scans it in place.
class VectorIndex {
public:
    static constexpr char kMagic[8] = {'Q', 'A', 'V', 'E', 'C', 'I', 'D', 'X'};
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::size_t kHeaderSize = 24;

    /// Empty index of the given dimension.
    explicit VectorIndex(std::size_t dim);
    /// Takes ownership of row-major `vectors` (ids.size() * dim floats).
    VectorIndex(std::size_t dim, std::vector<float> vectors, std::vector<std::uint64_t> ids);

    VectorIndex(VectorIndex&&) noexcept;
    VectorIndex& operator=(VectorIndex&&) noexcept;
    VectorIndex(const VectorIndex&) = delete;
    VectorIndex& operator=(const VectorIndex&) = delete;
    ~VectorIndex();

    static VectorIndex load(const std::filesystem::path& path);
    /// Writes to a temporary sibling and renames over `path`.
    void save(const std::filesystem::path& path) const;

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }

    std::span<const float> row(std::size_t i) const noexcept { return {data_ + i * dim_, dim_}; }
    std::uint64_t pair_id(std::size_t i) const noexcept;

    /// Exact top-k by dot product (cosine on unit vectors). Returns
    /// min(k, size()) results ordered by ranks_before. Throws ArgumentError
    /// when k == 0 or the query dimension differs.
    std::vector<RetrievalResult> search(std::span<const float> query, std::size_t k) const;
    std::vector<RetrievalResult> search(const Embedding& query, std::size_t k) const {
        return search(query.view(), k);
    }

    /// search() over the first n rows only.
    std::vector<RetrievalResult> search_first(std::span<const float> query, std::size_t k, std::size_t n) const;

    /// search() plus a wall-clock split between scoring rows and top-k
    /// selection.
    std::pair<std::vector<RetrievalResult>, ScanTiming> scan_latency_probe(std::span<const float> query,
                                                                           std::size_t k) const;

    /// Copy of the first n rows, used to build size-scaled benchmark indexes.
    VectorIndex prefix(std::size_t n) const;

private:
    struct Mapping;

    template <bool Timed>
    std::vector<RetrievalResult> scan(std::span<const float> query, std::size_t k, std::size_t rows,
                                      ScanTiming* timing) const;
    void check_query(std::span<const float> query, std::size_t k) const;

    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::vector<float> owned_vectors_;
    std::vector<std::uint64_t> owned_ids_;
    std::unique_ptr<Mapping> mapping_;
    const float* data_ = nullptr;
    const unsigned char* ids_ = nullptr;
};

struct BuildOptions {
    /// Pairs per restartable build chunk.
    std::size_t chunk_size = 4096;
};

/// Encodes every pair with encode_pair semantics, in the given order.
VectorIndex build_index(std::span<const QAPair> pairs, const Encoder& encoder, const BuildOptions& options = {});

/// Builds an index file restartably. Completed chunks are kept under
/// `<path>.build/` keyed by a manifest of (encoder, dim, pair ids, chunk
/// size); a chunk is only published once fully encoded, so a transport
/// failure discards the chunk in flight and the next call resumes after the
/// last completed one. On success the index is renamed into place, a
/// `<path>.meta.json` sidecar records the encoder, and the work directory
/// is removed.
void build_index_file(std::span<const QAPair> pairs, const Encoder& encoder, const std::filesystem::path& path,
                      const BuildOptions& options = {});

struct IndexMeta {
    std::string encoder;
    std::size_t dim = 0;
    std::size_t count = 0;
};

std::filesystem::path meta_path(const std::filesystem::path& index_path);
IndexMeta read_index_meta(const std::filesystem::path& index_path);

/// Holds the current index generation. Readers take a snapshot; publishing
/// a new generation never disturbs searches running on the old one.
class IndexSlot {
public:
    IndexSlot() = default;
    explicit IndexSlot(std::shared_ptr<const VectorIndex> index) : index_(std::move(index)) {}

    std::shared_ptr<const VectorIndex> current() const;
    void publish(std::shared_ptr<const VectorIndex> index);
    std::uint64_t generation() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const VectorIndex> index_;
    std::uint64_t generation_ = 0;
};

}  // namespace qa
