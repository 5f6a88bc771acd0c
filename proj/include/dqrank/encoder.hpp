#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace dqrank {

using Vector = Eigen::VectorXd;

/// Block layout of a pair encoding: [left n-grams | right n-grams | overlap].
inline constexpr std::size_t kLeftWidth = 96;
inline constexpr std::size_t kRightWidth = 96;
inline constexpr std::size_t kOverlapWidth = 64;
inline constexpr std::size_t kEncoderDim = kLeftWidth + kRightWidth + kOverlapWidth;
inline constexpr std::string_view kEncoderId = "hashed-ngram-murmur64a-v1";

/// MurmurHash64A (Austin Appleby), little-endian block reads.
std::uint64_t murmur_hash64a(std::string_view key, std::uint64_t seed);

/// Distinct unigram and bigram features of a text with their counts.
struct TextSketch {
    struct Feature {
        std::uint64_t key;  // murmur hash of the tagged n-gram
        double count;
    };
    std::vector<Feature> features;  // sorted by key

    bool empty() const noexcept { return features.empty(); }
};

TextSketch sketch_text(std::string_view text);

/// Sorted (index, value) pairs of a vector that is mostly zero.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    Vector to_dense(std::size_t dim = kEncoderDim) const;
    double squared_norm() const;
};

/// Ordered-pair encoding; each non-empty block is L2-normalized and the
/// concatenation is scaled to unit norm. Both inputs empty -> zero vector.
SparseVector encode_pair_sparse(const TextSketch& a, const TextSketch& b);
Vector encode_pair(std::string_view a, std::string_view b);

/// Hashed unigram+bigram bag over all kEncoderDim slots, L2-normalized.
Vector encode_single(std::string_view text);

/// dot(u, v) / (|u| |v|); 0 when either norm is 0. Throws on length mismatch.
double cosine(const Vector& u, const Vector& v);

/// Memoizes sketches by text and gives each distinct text a dense id.
/// Not thread-safe; keep one per worker.
class SketchCache {
public:
    const TextSketch& get(const std::string& text) { return sketches_[id(text)]; }
    std::uint32_t id(const std::string& text);
    const TextSketch& at(std::uint32_t id) const { return sketches_[id]; }
    std::size_t size() const noexcept { return sketches_.size(); }
    void clear() {
        ids_.clear();
        sketches_.clear();
    }

private:
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<TextSketch> sketches_;
};

/// encode_pair_sparse over cached sketches, memoizing up to `capacity` pair
/// encodings (the memo is flushed when full). The returned reference is valid
/// until the next call. Not thread-safe.
class PairEncoder {
public:
    explicit PairEncoder(std::size_t capacity = 1 << 18) : capacity_(capacity) {}

    const SparseVector& encode(const std::string& a, const std::string& b);
    SketchCache& sketches() noexcept { return cache_; }
    std::size_t memo_size() const noexcept { return pairs_.size(); }

private:
    SketchCache cache_;
    std::unordered_map<std::uint64_t, SparseVector> pairs_;
    std::size_t capacity_;
    SparseVector scratch_;
};

}  // namespace dqrank
