#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqrank/corpus.hpp"
#include "dqrank/encoder.hpp"
#include "dqrank/policy.hpp"
#include "dqrank/user_model.hpp"

namespace dqrank {

/// sum_k gains[k] / ln(k + 2) over 0-based positions.
double dcg(std::span<const double> gains);

/// DCG of the slate's top-k grades over the DCG of the ideal top-k ordering
/// of every graded doc of the query; 0 when the query has no relevant doc.
double ndcg_at_k(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id,
                 std::size_t k);

/// 1 / rank of the first doc with grade > 0; 0 when none.
double mrr(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id);

/// nDCG of the slate at its own length.
double labeled_reward(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id);

/// u-based DCG with the ln(k+1) discount, 1-based positions.
double u_dcg(std::span<const double> u_scores);

/// u-based nDCG: u_dcg over the u_dcg of the same scores sorted descending.
double u_ndcg(std::span<const double> u_scores);

/// One logged slate's contribution to the reward estimate.
struct TransitionTerm {
    double xi = 0.0;
    double reward = 0.0;
    bool skipped = false;
};

struct RewardEstimate {
    double value = 0.0;
    std::vector<TransitionTerm> terms;
};

/// Reward transition from per-document u scores: the mean over logged slates of
/// xi_i * R_i with xi_i = u_dcg(slate) / u_dcg(logged_i). R_i is the logged reward
/// when present and the logged slate's u_ndcg otherwise. Zero-DCG logged slates
/// are skipped with a warning; if every term is skipped this throws.
RewardEstimate reward_transition_from_scores(const std::function<double(const std::string&)>& u,
                                             std::span<const std::string> slate,
                                             std::span<const LoggedSlate> logged);

/// Same, with u(q, D) = doc_score over the first M sentences.
double reward_transition(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                         const Query& query, std::span<const std::string> slate, std::span<const LoggedSlate> logged,
                         std::size_t max_sentences);

struct QueryMetrics {
    double ndcg_at_10 = 0.0;
    double mrr = 0.0;
};

struct MetricReport {
    double ndcg_at_10 = 0.0;
    double mrr = 0.0;
    std::map<std::string, QueryMetrics> per_query;

    /// Recomputes the aggregates as the mean of the per-query values.
    void finalize();
    nlohmann::json to_json() const;
};

}  // namespace dqrank
