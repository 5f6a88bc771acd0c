#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dqrank/corpus.hpp"

namespace dqrank {

/// A query plus the feedback sentences accumulated so far (oldest first).
struct State {
    Query query;
    std::vector<std::string> feedback;

    /// The left-hand texts fed to U: the query first, then each feedback sentence.
    std::vector<std::string> texts() const;

    bool operator==(const State&) const = default;
};

/// An ordered result slate. `representatives[k]` is the sentence index chosen
/// to stand for doc_ids[k]; empty until select_representative has run.
struct SlateAction {
    std::vector<std::string> doc_ids;
    std::vector<std::size_t> representatives;

    bool has_representatives() const noexcept {
        return representatives.size() == doc_ids.size() && !doc_ids.empty();
    }
    std::size_t size() const noexcept { return doc_ids.size(); }

    bool operator==(const SlateAction&) const = default;
};

/// Throws InvalidArgument when doc_ids contain duplicates.
void check_unique(const SlateAction& slate);

struct Transition {
    State state;
    SlateAction action;
    double reward = 0.0;
    State next_state;
    bool terminal = false;
    std::vector<State> augmentations;  // paraphrases of `state`
    SlateAction next_slate;            // U ranking of next_state at store time; empty when terminal
};

}  // namespace dqrank
