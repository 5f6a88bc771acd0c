#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dqrank/encoder.hpp"
#include "dqrank/rng.hpp"
#include "dqrank/state.hpp"

namespace dqrank {

/// Appends a feedback sentence unless its text is already present; evicts the
/// oldest feedback first once E_max is reached. The query is never touched.
State append_feedback(State state, const std::string& sentence, std::size_t max_feedback);

/// Fixed-capacity ring buffer of transitions; the oldest entry is evicted first.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);

    void push(Transition transition);
    /// Uniform draws with replacement.
    std::vector<const Transition*> sample(Rng& rng, std::size_t batch) const;

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return items_.empty(); }
    /// i-th stored transition, oldest first.
    const Transition& at(std::size_t i) const;

private:
    std::size_t capacity_;
    std::vector<Transition> items_;
    std::size_t head_ = 0;  // position of the oldest entry once full
};

/// Best final state per query, searchable by query-embedding cosine.
class FeedbackPool {
public:
    struct Entry {
        std::string query_id;
        std::string query_text;
        std::vector<float> embedding;
        State state;
        double reward = 0.0;
    };

    /// Inserts, or replaces the stored entry when `reward` is strictly higher.
    /// Returns true when the pool changed.
    bool push_final_state(const Query& query, const State& state, double reward);

    struct Match {
        const Entry* entry;
        double cosine;
    };
    /// Highest-cosine entry (earliest inserted on ties), if its cosine exceeds psi.
    std::optional<Match> best_match(const Query& query, double psi) const;
    std::optional<State> retrieve_state(const Query& query, double psi) const;

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    const Entry* find(const std::string& query_id) const;

    /// JSONL: {"query_id", "query_text", "embedding", "feedback", "reward"}.
    void save(const std::filesystem::path& path) const;
    static FeedbackPool load(const std::filesystem::path& path);

private:
    std::vector<Entry> entries_;
};

/// Single-text embedding rounded to float, as stored in the pool.
std::vector<float> pool_embedding(const std::string& text);

}  // namespace dqrank
