#include "dqrank/policy.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "dqrank/error.hpp"

namespace dqrank {

RankingLog RankingLog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    RankingLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            LoggedSlate slate;
            slate.doc_ids = obj.at("doc_ids").get<std::vector<std::string>>();
            if (obj.contains("reward") && !obj["reward"].is_null()) slate.reward = obj["reward"].get<double>();
            if (slate.doc_ids.empty()) throw ParseError(path.string(), line_no, "empty doc_ids");
            log.add(obj.at("query_id").get<std::string>(), std::move(slate));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), line_no, std::string("malformed ranking log record: ") + e.what());
        }
    }
    return log;
}

void RankingLog::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& [query_id, slates] : by_query_) {
        for (const auto& slate : slates) {
            nlohmann::json obj{{"query_id", query_id}, {"doc_ids", slate.doc_ids}};
            if (slate.reward) obj["reward"] = *slate.reward;
            out << obj.dump() << '\n';
        }
    }
}

void RankingLog::add(const std::string& query_id, LoggedSlate slate) { by_query_[query_id].push_back(std::move(slate)); }

const std::vector<LoggedSlate>& RankingLog::slates(std::string_view query_id) const {
    static const std::vector<LoggedSlate> kEmpty;
    const auto it = by_query_.find(query_id);
    return it == by_query_.end() ? kEmpty : it->second;
}

CandidateSet candidate_set(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                           const Query& query, std::span<const std::string> pool, std::size_t candidate_count,
                           std::size_t max_sentences) {
    if (pool.empty()) throw InvalidArgument("candidate_set: empty retrieval pool");
    if (candidate_count == 0 || candidate_count > pool.size()) {
        throw InvalidArgument("candidate_set: size must be in [1, " + std::to_string(pool.size()) + "]");
    }
    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(pool.size());
    for (const auto& id : pool) {
        scored.emplace_back(doc_score(user, encoder, query.text, corpus.at(id), max_sentences).probability, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    CandidateSet out{query.query_id, {}};
    for (std::size_t i = 0; i < candidate_count; ++i) out.doc_ids.push_back(scored[i].second);
    return out;
}

SlateAction initial_u_ranking(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                              const State& state, std::span<const std::string> candidates, std::size_t n,
                              std::size_t max_sentences) {
    if (n == 0 || n > candidates.size()) {
        throw InvalidArgument("initial_u_ranking: N must be in [1, |T_q|] (N=" + std::to_string(n) +
                              ", |T_q|=" + std::to_string(candidates.size()) + ")");
    }
    struct Scored {
        double v;
        const std::string* id;
        std::size_t rep;
    };
    std::vector<Scored> scored;
    scored.reserve(candidates.size());
    for (const auto& id : candidates) {
        const auto& doc = corpus.at(id);
        const auto rep = select_representative(user, encoder, state, doc, max_sentences);
        scored.push_back({v_score(user, encoder, state, doc.sentences[rep].text), &id, rep});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.v != b.v) return a.v > b.v;
        return *a.id < *b.id;
    });
    SlateAction slate;
    for (std::size_t i = 0; i < n; ++i) {
        slate.doc_ids.push_back(*scored[i].id);
        slate.representatives.push_back(scored[i].rep);
    }
    return slate;
}

WindowOrder sliding_window_order(SlateScorer& scorer, std::vector<std::size_t> order, std::size_t m) {
    const std::size_t g = order.size();
    if (m < 2 || m > g) {
        throw InvalidArgument("sliding window: m must be in [2, " + std::to_string(g) + "], got " + std::to_string(m));
    }
    WindowOrder result;
    std::vector<std::size_t> trial;
    for (std::size_t start = g - m + 1; start-- > 0;) {
        double best_q = scorer.evaluate(order);
        if (start == g - m) result.q_initial = best_q;
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < m; ++i) {
            trial = order;
            std::rotate(trial.begin() + static_cast<std::ptrdiff_t>(start),
                        trial.begin() + static_cast<std::ptrdiff_t>(start + i),
                        trial.begin() + static_cast<std::ptrdiff_t>(start + i + 1));
            const double q = scorer.evaluate(trial);
            if (q > best_q) {
                best_q = q;
                best_i = i;
            }
        }
        if (best_i != 0) {
            std::rotate(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(start + best_i),
                        order.begin() + static_cast<std::ptrdiff_t>(start + best_i + 1));
        }
        result.q_final = best_q;
    }
    result.order = std::move(order);
    return result;
}

WindowResult sliding_window_rank(const QNetParams& qnet, PairEncoder& encoder, const CorpusIndex& corpus,
                                 const State& state, const SlateAction& slate, std::size_t m) {
    check_unique(slate);
    SlateScorer scorer(qnet, slate_embeddings(encoder, corpus, state, slate));
    std::vector<std::size_t> order(slate.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto searched = sliding_window_order(scorer, std::move(order), m);

    WindowResult result;
    for (auto i : searched.order) {
        result.slate.doc_ids.push_back(slate.doc_ids[i]);
        result.slate.representatives.push_back(slate.representatives[i]);
    }
    result.evaluations = scorer.evaluations();
    result.q_initial = searched.q_initial;
    result.q_final = searched.q_final;
    return result;
}

SlateAction random_slate(Rng& rng, std::span<const std::string> candidates, std::size_t n) {
    if (n == 0 || n > candidates.size()) throw InvalidArgument("random_slate: N must be in [1, |T_q|]");
    std::vector<std::string> pool(candidates.begin(), candidates.end());
    for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
    pool.resize(n);
    return SlateAction{std::move(pool), {}};
}

std::string_view to_string(Branch branch) {
    switch (branch) {
        case Branch::Logged: return "logged";
        case Branch::Random: return "random";
        case Branch::Greedy: return "greedy";
    }
    return "unknown";
}

PolicyDecision greedy_action(const RankingContext& ctx, const State& state, const CandidateSet& candidates) {
    auto initial = initial_u_ranking(ctx.user, ctx.encoder, ctx.corpus, state, candidates.doc_ids, ctx.slate_size,
                                     ctx.max_sentences);
    PolicyDecision decision;
    decision.branch = Branch::Greedy;
    if (ctx.window >= 2 && ctx.window <= initial.size()) {
        auto searched = sliding_window_rank(ctx.qnet, ctx.encoder, ctx.corpus, state, initial, ctx.window);
        decision.action = std::move(searched.slate);
        decision.q_value = searched.q_final;
    } else {
        decision.action = initial;
        decision.q_value = q_forward(ctx.qnet, slate_embeddings(ctx.encoder, ctx.corpus, state, initial));
    }
    decision.u_ranking = std::move(initial);
    return decision;
}

PolicyDecision epsilon_greedy(Rng& rng, double epsilon, std::deque<LoggedSlate>& logged,
                              const CandidateSet& candidates, const State& state, const RankingContext& ctx) {
    if (epsilon < 0.0 || epsilon > 1.0) throw InvalidArgument("epsilon_greedy: epsilon must be in [0, 1]");
    if (candidates.doc_ids.size() < ctx.slate_size) {
        throw InvalidArgument("epsilon_greedy: candidate set smaller than the slate size");
    }
    if (!(rng.uniform01() < epsilon)) return greedy_action(ctx, state, candidates);

    PolicyDecision decision;
    while (!logged.empty()) {
        LoggedSlate slate = std::move(logged.front());
        logged.pop_front();
        if (slate.doc_ids.size() != ctx.slate_size) {
            warn("skipping logged slate of length " + std::to_string(slate.doc_ids.size()) + " for query " +
                 candidates.query_id);
            continue;
        }
        decision.action.doc_ids = std::move(slate.doc_ids);
        decision.branch = Branch::Logged;
        break;
    }
    if (decision.action.doc_ids.empty()) {
        decision.action = random_slate(rng, candidates.doc_ids, ctx.slate_size);
        decision.branch = Branch::Random;
    }
    check_unique(decision.action);
    ensure_representatives(decision.action, ctx.user, ctx.encoder, ctx.corpus, state, ctx.max_sentences);
    decision.q_value = q_forward(ctx.qnet, slate_embeddings(ctx.encoder, ctx.corpus, state, decision.action));
    return decision;
}

}  // namespace dqrank
