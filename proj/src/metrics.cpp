#include "dqrank/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dqrank/error.hpp"

namespace dqrank {

double dcg(std::span<const double> gains) {
    double total = 0.0;
    for (std::size_t k = 0; k < gains.size(); ++k) total += gains[k] / std::log(static_cast<double>(k) + 2.0);
    return total;
}

double ndcg_at_k(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id,
                 std::size_t k) {
    if (k == 0) throw InvalidArgument("ndcg_at_k: k must be >= 1");
    std::vector<double> ideal;
    for (const auto& [doc, grade] : qrels.relevant(query_id)) ideal.push_back(grade);
    if (ideal.empty()) return 0.0;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    if (ideal.size() > k) ideal.resize(k);

    std::vector<double> gains;
    for (std::size_t i = 0; i < std::min(k, slate.size()); ++i) gains.push_back(qrels.grade(query_id, slate[i]));
    return dcg(gains) / dcg(ideal);
}

double mrr(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id) {
    for (std::size_t i = 0; i < slate.size(); ++i) {
        if (qrels.grade(query_id, slate[i]) > 0) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

double labeled_reward(std::span<const std::string> slate, const QrelTable& qrels, const std::string& query_id) {
    if (slate.empty()) return 0.0;
    return ndcg_at_k(slate, qrels, query_id, slate.size());
}

double u_dcg(std::span<const double> u_scores) {
    double total = 0.0;
    for (std::size_t k = 0; k < u_scores.size(); ++k) total += u_scores[k] / std::log(static_cast<double>(k) + 2.0);
    return total;
}

double u_ndcg(std::span<const double> u_scores) {
    std::vector<double> ideal(u_scores.begin(), u_scores.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double best = u_dcg(ideal);
    return best == 0.0 ? 0.0 : u_dcg(u_scores) / best;
}

RewardEstimate reward_transition_from_scores(const std::function<double(const std::string&)>& u,
                                             std::span<const std::string> slate,
                                             std::span<const LoggedSlate> logged) {
    if (logged.empty()) throw InvalidArgument("reward_transition: empty ranking log");
    std::vector<double> scores;
    for (const auto& id : slate) scores.push_back(u(id));
    const double numerator = u_dcg(scores);

    RewardEstimate estimate;
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& entry : logged) {
        std::vector<double> logged_scores;
        for (const auto& id : entry.doc_ids) logged_scores.push_back(u(id));
        const double denominator = u_dcg(logged_scores);
        TransitionTerm term;
        if (denominator == 0.0) {
            warn("reward_transition: logged slate with zero u-DCG skipped");
            term.skipped = true;
            estimate.terms.push_back(term);
            continue;
        }
        term.xi = numerator / denominator;
        term.reward = entry.reward ? *entry.reward : u_ndcg(logged_scores);
        total += term.xi * term.reward;
        ++used;
        estimate.terms.push_back(term);
    }
    if (used == 0) throw InvalidArgument("reward_transition: every logged slate was skipped");
    estimate.value = total / static_cast<double>(used);
    return estimate;
}

double reward_transition(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                         const Query& query, std::span<const std::string> slate, std::span<const LoggedSlate> logged,
                         std::size_t max_sentences) {
    std::map<std::string, double> memo;
    const auto u = [&](const std::string& id) {
        auto it = memo.find(id);
        if (it == memo.end()) {
            it = memo.emplace(id, doc_score(user, encoder, query.text, corpus.at(id), max_sentences).probability).first;
        }
        return it->second;
    };
    return reward_transition_from_scores(u, slate, logged).value;
}

void MetricReport::finalize() {
    ndcg_at_10 = 0.0;
    mrr = 0.0;
    if (per_query.empty()) return;
    for (const auto& [q, m] : per_query) {
        ndcg_at_10 += m.ndcg_at_10;
        mrr += m.mrr;
    }
    ndcg_at_10 /= static_cast<double>(per_query.size());
    mrr /= static_cast<double>(per_query.size());
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [q, m] : per_query) per[q] = {{"ndcg_at_10", m.ndcg_at_10}, {"mrr", m.mrr}};
    return {{"ndcg_at_10", ndcg_at_10}, {"mrr", mrr}, {"per_query", per}};
}

}  // namespace dqrank
