#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dqrank/augment.hpp"
#include "dqrank/checkpoint.hpp"
#include "dqrank/corpus.hpp"
#include "dqrank/error.hpp"
#include "dqrank/metrics.hpp"
#include "dqrank/policy.hpp"
#include "dqrank/replay.hpp"

namespace dqrank {

struct TrainerConfig {
    double epsilon = 0.9;
    double epsilon_decay = 0.95;
    double epsilon_min = 0.05;
    double gamma = 0.6;
    std::size_t c = 10;  // steps between target syncs
    std::size_t T = 15;  // steps per episode
    std::size_t episodes = 200;
    std::size_t N = 10;
    std::size_t m = 4;
    std::size_t M = 10;
    std::size_t E_max = 5;
    std::size_t size_I = 100;
    std::size_t size_T = 20;
    std::size_t batch = 16;
    double lr = 0.001;
    std::uint64_t seed = 0;
    std::size_t n_augment = 2;
    double psi = 0.85;
    double tau = 0.5;
    std::size_t z_capacity = 10000;
    std::size_t h = 128;
    std::size_t rearrange_every = 1;  // 0 disables rearrangement learning
    bool state_retrieval = true;
    bool average_targets = false;
    std::size_t pretrain_epochs = 50;  // used by kfold; 0 skips pretraining

    /// Throws InvalidArgument naming the first out-of-range field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Flat object; unknown keys and wrongly typed values are rejected.
    static TrainerConfig from_json(const nlohmann::json& obj);
    static TrainerConfig load(const std::filesystem::path& path);
};

struct StepRecord {
    std::size_t t = 0;
    Branch branch = Branch::Greedy;
    std::vector<std::string> doc_ids;
    double reward = 0.0;
    double q = 0.0;
    double td_loss = 0.0;
    double rearrange_loss = 0.0;
    std::size_t feedback_count = 0;
};

struct EpisodeTrace {
    std::size_t episode = 0;
    std::string query_id;
    bool state_retrieved = false;
    double epsilon = 0.0;
    std::vector<StepRecord> steps;
    std::vector<std::string> final_feedback;
    double best_reward = 0.0;

    nlohmann::json to_json() const;
};

void write_traces(const std::vector<EpisodeTrace>& traces, const std::filesystem::path& path);

/// Offline user: among the slate's relevant docs (every doc when the query has
/// no judgements) the representative sentence with the highest v_score that is
/// not yet in the state is appended iff its u_score against the query exceeds tau.
State simulate_feedback(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                        const QrelTable& qrels, const State& state, const SlateAction& action, double tau,
                        std::size_t max_feedback);

/// Retrieval pool I_q then U re-ranked candidates T_q; T_q is clamped to |I_q|.
/// Returns nullopt (with a warning) when fewer than N docs are retrieved.
std::optional<CandidateSet> build_candidates(const TrainerConfig& config, const UserModelParams& user,
                                             PairEncoder& encoder, const CorpusIndex& corpus, const Query& query);

/// s_0: the stored feedback of the closest pooled query when retrieval is on
/// and one clears psi, otherwise an empty state.
State initial_state(const Query& query, const FeedbackPool* pool, double psi, bool* retrieved = nullptr);

/// R(a, q): the labelled nDCG when the query has judgements, otherwise the
/// reward transition over the full ranking log, otherwise the slate's u-nDCG.
double step_reward(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                   const QrelTable& qrels, const RankingLog& log, const Query& query, const SlateAction& slate,
                   std::size_t max_sentences);

struct StepInfo {
    std::size_t global_step = 0;
    const Transition* transition = nullptr;
    const QNet* qnet = nullptr;
    const UserModel* user = nullptr;
    const ReplayMemory* replay = nullptr;
};

struct OfflineResult {
    Checkpoint model;
    std::vector<EpisodeTrace> traces;
    FeedbackPool pool;
    std::size_t steps = 0;
};

struct OfflineInputs {
    const CorpusIndex& corpus;
    const std::vector<Query>& queries;
    const QrelTable& qrels;
    const RankingLog& log;
    const SynonymLexicon& lexicon;
};

/// Episode loop: one query per episode (a seeded shuffle per pass over the
/// queries), T steps of epsilon-greedy acting, replayed TD updates,
/// rearrangement learning and periodic target syncs. Deterministic given the seed.
OfflineResult run_offline(const TrainerConfig& config, const OfflineInputs& inputs,
                          std::optional<UserModel> initial_user = std::nullopt,
                          const std::function<void(const StepInfo&)>& on_step = {});

/// A read-only model snapshot for serving and evaluation.
struct ModelSnapshot {
    UserModelParams user;
    QNetParams qnet;
};

ModelSnapshot snapshot_of(const Checkpoint& checkpoint);

/// Raised when retrieval cannot fill a slate of N documents.
class InsufficientCandidates : public Error {
public:
    using Error::Error;
};

/// Feedback naming a document that is not on the current slate.
class StaleFeedback : public Error {
public:
    using Error::Error;
};

/// One interactive search: pi_2 only, no weight updates.
class OnlineSession {
public:
    /// Throws InsufficientCandidates when retrieval cannot fill a slate.
    /// `qrels`, when given, labels the buffered transitions.
    OnlineSession(TrainerConfig config, std::shared_ptr<const ModelSnapshot> model, const CorpusIndex& corpus,
                  Query query, const FeedbackPool* pool, const QrelTable* qrels = nullptr);

    const SlateAction& slate() const noexcept { return slate_; }
    const State& state() const noexcept { return state_; }
    const Query& query() const noexcept { return state_.query; }
    const CandidateSet& candidates() const noexcept { return candidates_; }
    bool state_retrieved() const noexcept { return retrieved_; }
    double q_value() const noexcept { return q_value_; }
    std::size_t steps() const noexcept { return steps_; }
    const std::vector<Transition>& buffered() const noexcept { return buffered_; }

    /// Appends the sentence and re-ranks over the fixed candidates. Throws
    /// StaleFeedback when the doc is not on the current slate and
    /// InvalidArgument when the sentence index is out of range.
    void feedback(const std::string& doc_id, std::size_t sentence_idx);

    /// v_score of each slate document's representative sentence.
    std::vector<double> scores();

    /// Reward of the current slate (labelled when judgements exist, else u-nDCG).
    double reward();

private:
    void rank();

    TrainerConfig config_;
    std::shared_ptr<const ModelSnapshot> model_;
    const CorpusIndex& corpus_;
    const QrelTable* qrels_;
    PairEncoder encoder_;
    CandidateSet candidates_;
    State state_;
    SlateAction slate_;
    bool retrieved_ = false;
    double q_value_ = 0.0;
    std::size_t steps_ = 1;
    std::vector<Transition> buffered_;
};

struct FeedbackEvent {
    std::string doc_id;
    std::size_t sentence_idx = 0;
};

struct SessionTrace {
    bool state_retrieved = false;
    std::vector<SlateAction> slates;  // initial slate then one per event
    State final_state;
};

SessionTrace run_online_session(const TrainerConfig& config, const ModelSnapshot& model, const CorpusIndex& corpus,
                                const FeedbackPool* pool, const Query& query,
                                const std::vector<FeedbackEvent>& events);

enum class EvalMode { Bm25, UOnly, DQRank };
EvalMode parse_eval_mode(std::string_view name);
std::string_view to_string(EvalMode mode);

/// Per-query top-N slate from BM25, the U candidate order, or the full pi_2
/// policy (with state retrieval from `pool` when enabled), scored by nDCG@10 and MRR.
MetricReport evaluate(const TrainerConfig& config, const ModelSnapshot& model, const CorpusIndex& corpus,
                      const std::vector<Query>& queries, const QrelTable& qrels, EvalMode mode,
                      const FeedbackPool* pool = nullptr);

struct Fold {
    std::vector<Query> train;
    std::vector<Query> test;
};

/// Seeded shuffle dealt round-robin into k near-equal disjoint test folds.
std::vector<Fold> kfold_split(const std::vector<Query>& queries, std::size_t k, std::uint64_t seed);

}  // namespace dqrank
