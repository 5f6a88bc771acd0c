#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dqrank/corpus.hpp"
#include "dqrank/encoder.hpp"
#include "dqrank/qnet.hpp"
#include "dqrank/rng.hpp"
#include "dqrank/state.hpp"
#include "dqrank/user_model.hpp"

namespace dqrank {

/// The re-ranked subset T_q of the initial retrieval pool, best first.
struct CandidateSet {
    std::string query_id;
    std::vector<std::string> doc_ids;
};

/// A slate from the ranking log W_q with an optional labelled reward.
struct LoggedSlate {
    std::vector<std::string> doc_ids;
    std::optional<double> reward;

    bool operator==(const LoggedSlate&) const = default;
};

/// Logged slates per query (JSONL: {"query_id", "doc_ids", "reward"?}).
class RankingLog {
public:
    static RankingLog load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void add(const std::string& query_id, LoggedSlate slate);
    const std::vector<LoggedSlate>& slates(std::string_view query_id) const;
    const std::map<std::string, std::vector<LoggedSlate>, std::less<>>& all() const noexcept { return by_query_; }
    bool empty() const noexcept { return by_query_.empty(); }

private:
    std::map<std::string, std::vector<LoggedSlate>, std::less<>> by_query_;
};

/// Everything action selection reads. Parameters are borrowed snapshots.
struct RankingContext {
    const CorpusIndex& corpus;
    const UserModelParams& user;
    const QNetParams& qnet;
    PairEncoder& encoder;
    std::size_t slate_size = 10;     // N
    std::size_t window = 4;          // m
    std::size_t max_sentences = 10;  // M
};

/// Top size_T docs of the pool by doc_score against the query; ties by doc_id.
CandidateSet candidate_set(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                           const Query& query, std::span<const std::string> pool, std::size_t candidate_count,
                           std::size_t max_sentences);

/// Top-N of the candidates by the v_score of each doc's representative sentence.
SlateAction initial_u_ranking(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                              const State& state, std::span<const std::string> candidates, std::size_t n,
                              std::size_t max_sentences);

struct WindowResult {
    SlateAction slate;
    std::size_t evaluations = 0;
    double q_initial = 0.0;
    double q_final = 0.0;
};

/// Backward sliding-window search. Each width-m window, from the tail to the
/// head, tries each of its m items at the window's first position and keeps the
/// best trial only if it strictly beats the incumbent. Exactly (G-m+1)*m
/// evaluations. The slate must carry representatives and G >= N.
WindowResult sliding_window_rank(const QNetParams& qnet, PairEncoder& encoder, const CorpusIndex& corpus,
                                 const State& state, const SlateAction& slate, std::size_t m);

struct WindowOrder {
    std::vector<std::size_t> order;
    double q_initial = 0.0;
    double q_final = 0.0;
};

/// Same search over a prepared scorer; `order` indexes the scorer's candidates.
WindowOrder sliding_window_order(SlateScorer& scorer, std::vector<std::size_t> order, std::size_t m);

/// Uniform N-permutation of T_q without replacement.
SlateAction random_slate(Rng& rng, std::span<const std::string> candidates, std::size_t n);

enum class Branch { Logged, Random, Greedy };
std::string_view to_string(Branch branch);

struct PolicyDecision {
    SlateAction action;  // with representatives
    Branch branch = Branch::Greedy;
    std::optional<SlateAction> u_ranking;  // set on the greedy branch
    double q_value = 0.0;
};

/// Greedy branch: initial U ranking followed by the sliding window search.
PolicyDecision greedy_action(const RankingContext& ctx, const State& state, const CandidateSet& candidates);

/// With probability epsilon explore (pop the next logged slate, or a random
/// slate once the log is exhausted); otherwise act greedily.
PolicyDecision epsilon_greedy(Rng& rng, double epsilon, std::deque<LoggedSlate>& logged,
                              const CandidateSet& candidates, const State& state, const RankingContext& ctx);

}  // namespace dqrank
