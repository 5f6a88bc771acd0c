#include "dqrank/encoder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

constexpr std::uint64_t kFeatureSeed = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kOverlapSeed = 0xc2b2ae3d27d4eb4fULL;
constexpr std::uint64_t kSingleSeed = 0x165667b19e3779f9ULL;

std::uint64_t slot_hash(std::uint64_t key, std::uint64_t seed) {
    char bytes[8];
    std::memcpy(bytes, &key, sizeof bytes);
    return murmur_hash64a(std::string_view(bytes, sizeof bytes), seed);
}

template <std::size_t W>
void add_block(std::vector<std::pair<std::uint32_t, double>>& out, const std::array<double, W>& block,
               std::uint32_t offset, double scale) {
    for (std::size_t i = 0; i < W; ++i) {
        if (block[i] != 0.0) out.emplace_back(offset + static_cast<std::uint32_t>(i), block[i] * scale);
    }
}

template <std::size_t W>
double normalize(std::array<double, W>& block) {
    double sq = 0.0;
    for (double v : block) sq += v * v;
    if (sq == 0.0) return 0.0;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : block) v *= inv;
    return 1.0;
}

}  // namespace

std::uint64_t murmur_hash64a(std::string_view key, std::uint64_t seed) {
    constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
    constexpr int r = 47;
    const std::size_t len = key.size();
    std::uint64_t h = seed ^ (len * m);

    const char* data = key.data();
    const std::size_t blocks = len / 8;
    for (std::size_t i = 0; i < blocks; ++i) {
        std::uint64_t k = 0;
        for (int b = 7; b >= 0; --b) k = (k << 8) | static_cast<unsigned char>(data[i * 8 + b]);
        k *= m;
        k ^= k >> r;
        k *= m;
        h ^= k;
        h *= m;
    }

    const char* tail = data + blocks * 8;
    switch (len & 7) {
        case 7: h ^= std::uint64_t(static_cast<unsigned char>(tail[6])) << 48; [[fallthrough]];
        case 6: h ^= std::uint64_t(static_cast<unsigned char>(tail[5])) << 40; [[fallthrough]];
        case 5: h ^= std::uint64_t(static_cast<unsigned char>(tail[4])) << 32; [[fallthrough]];
        case 4: h ^= std::uint64_t(static_cast<unsigned char>(tail[3])) << 24; [[fallthrough]];
        case 3: h ^= std::uint64_t(static_cast<unsigned char>(tail[2])) << 16; [[fallthrough]];
        case 2: h ^= std::uint64_t(static_cast<unsigned char>(tail[1])) << 8; [[fallthrough]];
        case 1:
            h ^= std::uint64_t(static_cast<unsigned char>(tail[0]));
            h *= m;
    }

    h ^= h >> r;
    h *= m;
    h ^= h >> r;
    return h;
}

TextSketch sketch_text(std::string_view text) {
    const auto tokens = tokenize(text);
    std::vector<std::uint64_t> keys;
    keys.reserve(tokens.size() * 2);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        keys.push_back(murmur_hash64a("u:" + tokens[i], kFeatureSeed));
        if (i + 1 < tokens.size()) {
            keys.push_back(murmur_hash64a("b:" + tokens[i] + " " + tokens[i + 1], kFeatureSeed));
        }
    }
    std::sort(keys.begin(), keys.end());
    TextSketch sketch;
    for (auto key : keys) {
        if (!sketch.features.empty() && sketch.features.back().key == key) {
            sketch.features.back().count += 1.0;
        } else {
            sketch.features.push_back({key, 1.0});
        }
    }
    return sketch;
}

Vector SparseVector::to_dense(std::size_t dim) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& [i, x] : entries) v[i] = x;
    return v;
}

double SparseVector::squared_norm() const {
    double sq = 0.0;
    for (const auto& e : entries) sq += e.second * e.second;
    return sq;
}

SparseVector encode_pair_sparse(const TextSketch& a, const TextSketch& b) {
    std::array<double, kLeftWidth> left{};
    std::array<double, kRightWidth> right{};
    std::array<double, kOverlapWidth> overlap{};
    for (const auto& f : a.features) left[f.key % kLeftWidth] += f.count;
    for (const auto& f : b.features) right[f.key % kRightWidth] += f.count;

    auto ia = a.features.begin();
    auto ib = b.features.begin();
    while (ia != a.features.end() && ib != b.features.end()) {
        if (ia->key < ib->key) {
            ++ia;
        } else if (ib->key < ia->key) {
            ++ib;
        } else {
            overlap[slot_hash(ia->key, kOverlapSeed) % kOverlapWidth] += std::min(ia->count, ib->count);
            ++ia;
            ++ib;
        }
    }

    const double blocks = normalize(left) + normalize(right) + normalize(overlap);
    SparseVector out;
    if (blocks == 0.0) return out;
    out.entries.reserve(a.features.size() + b.features.size() + 8);
    const double scale = 1.0 / std::sqrt(blocks);
    add_block(out.entries, left, 0, scale);
    add_block(out.entries, right, kLeftWidth, scale);
    add_block(out.entries, overlap, kLeftWidth + kRightWidth, scale);
    return out;
}

Vector encode_pair(std::string_view a, std::string_view b) {
    return encode_pair_sparse(sketch_text(a), sketch_text(b)).to_dense();
}

Vector encode_single(std::string_view text) {
    const auto sketch = sketch_text(text);
    Vector v = Vector::Zero(kEncoderDim);
    for (const auto& f : sketch.features) v[static_cast<Eigen::Index>(slot_hash(f.key, kSingleSeed) % kEncoderDim)] += f.count;
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) {
        throw InvalidArgument("cosine: length mismatch (" + std::to_string(u.size()) + " vs " +
                              std::to_string(v.size()) + ")");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

std::uint32_t SketchCache::id(const std::string& text) {
    const auto [it, inserted] = ids_.try_emplace(text, static_cast<std::uint32_t>(sketches_.size()));
    if (inserted) sketches_.push_back(sketch_text(text));
    return it->second;
}

const SparseVector& PairEncoder::encode(const std::string& a, const std::string& b) {
    const std::uint64_t ia = cache_.id(a);
    const std::uint64_t ib = cache_.id(b);
    if (capacity_ == 0) {
        scratch_ = encode_pair_sparse(cache_.at(static_cast<std::uint32_t>(ia)), cache_.at(static_cast<std::uint32_t>(ib)));
        return scratch_;
    }
    const std::uint64_t key = (ia << 32) | ib;
    if (const auto it = pairs_.find(key); it != pairs_.end()) return it->second;
    if (pairs_.size() >= capacity_) pairs_.clear();
    return pairs_
        .emplace(key, encode_pair_sparse(cache_.at(static_cast<std::uint32_t>(ia)),
                                         cache_.at(static_cast<std::uint32_t>(ib))))
        .first->second;
}

}  // namespace dqrank
