#include "dqrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
    f("epsilon", c.epsilon);
    f("epsilon_decay", c.epsilon_decay);
    f("epsilon_min", c.epsilon_min);
    f("gamma", c.gamma);
    f("c", c.c);
    f("T", c.T);
    f("episodes", c.episodes);
    f("N", c.N);
    f("m", c.m);
    f("M", c.M);
    f("E_max", c.E_max);
    f("size_I", c.size_I);
    f("size_T", c.size_T);
    f("batch", c.batch);
    f("lr", c.lr);
    f("seed", c.seed);
    f("n_augment", c.n_augment);
    f("psi", c.psi);
    f("tau", c.tau);
    f("z_capacity", c.z_capacity);
    f("h", c.h);
    f("rearrange_every", c.rearrange_every);
    f("state_retrieval", c.state_retrieval);
    f("average_targets", c.average_targets);
    f("pretrain_epochs", c.pretrain_epochs);
}

void require(bool ok, const char* field, const std::string& rule) {
    if (!ok) throw InvalidArgument(std::string("config field '") + field + "': " + rule);
}

}  // namespace

void TrainerConfig::validate() const {
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    require(in_unit(epsilon), "epsilon", "must be in [0, 1]");
    require(epsilon_decay > 0.0 && epsilon_decay <= 1.0, "epsilon_decay", "must be in (0, 1]");
    require(in_unit(epsilon_min), "epsilon_min", "must be in [0, 1]");
    require(in_unit(gamma), "gamma", "must be in [0, 1]");
    require(c >= 1, "c", "must be >= 1");
    require(T >= 1, "T", "must be >= 1");
    require(N >= 1, "N", "must be >= 1");
    require(m >= 2 && m <= N, "m", "must satisfy 2 <= m <= N");
    require(M >= 1, "M", "must be >= 1");
    require(size_T >= N, "size_T", "must be >= N");
    require(size_I >= size_T, "size_I", "must be >= size_T");
    require(batch >= 1, "batch", "must be >= 1");
    require(std::isfinite(lr) && lr >= 0.0, "lr", "must be finite and >= 0");
    require(in_unit(psi), "psi", "must be in [0, 1]");
    require(in_unit(tau), "tau", "must be in [0, 1]");
    require(z_capacity >= 1, "z_capacity", "must be >= 1");
    require(h >= 1, "h", "must be >= 1");
}

nlohmann::json TrainerConfig::to_json() const {
    nlohmann::json obj = nlohmann::json::object();
    for_each_field(*this, [&obj](const char* name, const auto& value) { obj[name] = value; });
    return obj;
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& obj) {
    if (!obj.is_object()) throw InvalidArgument("config must be a JSON object");
    TrainerConfig config;
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for_each_field(config, [&](const char* name, auto& field) {
            if (key != name) return;
            known = true;
            using T = std::decay_t<decltype(field)>;
            if constexpr (std::is_same_v<T, bool>) {
                require(value.is_boolean(), name, "expected a boolean");
            } else if constexpr (std::is_floating_point_v<T>) {
                require(value.is_number(), name, "expected a number");
            } else {
                require(value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0),
                        name, "expected a non-negative integer");
            }
            field = value.get<T>();
        });
        if (!known) throw InvalidArgument("unknown config field '" + key + "'");
    }
    config.validate();
    return config;
}

TrainerConfig TrainerConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": malformed config: " + e.what());
    }
    return from_json(obj);
}

nlohmann::json EpisodeTrace::to_json() const {
    nlohmann::json steps_json = nlohmann::json::array();
    for (const auto& s : steps) {
        steps_json.push_back({{"t", s.t},
                              {"branch", std::string(to_string(s.branch))},
                              {"doc_ids", s.doc_ids},
                              {"reward", s.reward},
                              {"q", s.q},
                              {"td_loss", s.td_loss},
                              {"rearrange_loss", s.rearrange_loss},
                              {"feedback_count", s.feedback_count}});
    }
    return {{"episode", episode},     {"query_id", query_id},       {"state_retrieved", state_retrieved},
            {"epsilon", epsilon},     {"steps", std::move(steps_json)}, {"final_feedback", final_feedback},
            {"best_reward", best_reward}};
}

void write_traces(const std::vector<EpisodeTrace>& traces, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& t : traces) out << t.to_json().dump() << '\n';
}

State simulate_feedback(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                        const QrelTable& qrels, const State& state, const SlateAction& action, double tau,
                        std::size_t max_feedback) {
    const bool judged = qrels.has_query(state.query.query_id);
    const std::string* best = nullptr;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < action.size(); ++k) {
        if (judged && qrels.grade(state.query.query_id, action.doc_ids[k]) <= 0) continue;
        const auto& doc = corpus.at(action.doc_ids[k]);
        const std::size_t rep = action.has_representatives()
                                    ? action.representatives[k]
                                    : select_representative(user, encoder, state, doc, doc.sentences.size());
        const auto& text = doc.sentences.at(rep).text;
        if (std::find(state.feedback.begin(), state.feedback.end(), text) != state.feedback.end()) continue;
        const double v = v_score(user, encoder, state, text);
        if (v > best_v) {
            best_v = v;
            best = &text;
        }
    }
    if (best == nullptr) return state;
    if (!(u_score(user, encoder, state.query.text, *best) > tau)) return state;
    return append_feedback(state, *best, max_feedback);
}

std::optional<CandidateSet> build_candidates(const TrainerConfig& config, const UserModelParams& user,
                                             PairEncoder& encoder, const CorpusIndex& corpus, const Query& query) {
    const auto hits = bm25_retrieve(corpus, query, config.size_I);
    if (hits.size() < config.N) {
        warn("query " + query.query_id + ": retrieved " + std::to_string(hits.size()) + " docs, fewer than N=" +
             std::to_string(config.N));
        return std::nullopt;
    }
    std::vector<std::string> pool;
    pool.reserve(hits.size());
    for (const auto& h : hits) pool.push_back(h.doc_id);
    return candidate_set(user, encoder, corpus, query, pool, std::min(config.size_T, pool.size()), config.M);
}

State initial_state(const Query& query, const FeedbackPool* pool, double psi, bool* retrieved) {
    State s{query, {}};
    bool found = false;
    if (pool != nullptr) {
        if (auto match = pool->retrieve_state(query, psi)) {
            s.feedback = std::move(match->feedback);
            found = true;
        }
    }
    if (retrieved != nullptr) *retrieved = found;
    return s;
}

double step_reward(const UserModelParams& user, PairEncoder& encoder, const CorpusIndex& corpus,
                   const QrelTable& qrels, const RankingLog& log, const Query& query, const SlateAction& slate,
                   std::size_t max_sentences) {
    if (qrels.has_query(query.query_id)) return labeled_reward(slate.doc_ids, qrels, query.query_id);
    const auto& logged = log.slates(query.query_id);
    if (!logged.empty()) {
        return reward_transition(user, encoder, corpus, query, slate.doc_ids, logged, max_sentences);
    }
    std::vector<double> scores;
    for (const auto& id : slate.doc_ids) {
        scores.push_back(doc_score(user, encoder, query.text, corpus.at(id), max_sentences).probability);
    }
    return u_ndcg(scores);
}

namespace {

struct Learner {
    const TrainerConfig& config;
    const OfflineInputs& in;
    PairEncoder& encoder;
    QNet& net;

    double target(const Transition& t) {
        if (t.terminal || config.gamma == 0.0) return t.reward;
        const auto searched = sliding_window_rank(net.target, encoder, in.corpus, t.next_state, t.next_slate, config.m);
        if (!config.average_targets) {
            return td_target(net.target, encoder, in.corpus, t, config.gamma, std::span(&searched.slate, 1));
        }
        double total = searched.q_final;
        const auto variants = augment_state(in.lexicon, t.next_state, config.n_augment);
        for (const auto& v : variants) {
            total += q_forward(net.target, slate_embeddings(encoder, in.corpus, v, searched.slate));
        }
        return t.reward + config.gamma * total / static_cast<double>(variants.size() + 1);
    }
};

}  // namespace

OfflineResult run_offline(const TrainerConfig& config, const OfflineInputs& inputs,
                          std::optional<UserModel> initial_user, const std::function<void(const StepInfo&)>& on_step) {
    config.validate();
    if (inputs.queries.empty()) throw InvalidArgument("run_offline: no training queries");

    Rng master(config.seed);
    Rng init_rng(master.next_u64());
    Rng policy_rng(master.next_u64());
    Rng replay_rng(master.next_u64());
    Rng order_rng(master.next_u64());

    OfflineResult result;
    UserModel& user = result.model.user;
    if (initial_user) {
        user = std::move(*initial_user);
    } else {
        user.params = UserModelParams::init(init_rng);
    }
    QNet net;
    net.online = QNetParams::init(init_rng, config.N, kEncoderDim, config.h);
    net.target = net.online;

    PairEncoder encoder;
    ReplayMemory replay(config.z_capacity);
    Learner learner{config, inputs, encoder, net};
    std::map<std::string, std::deque<LoggedSlate>> working_log;
    for (const auto& [qid, slates] : inputs.log.all()) working_log[qid].assign(slates.begin(), slates.end());

    std::vector<std::size_t> order(inputs.queries.size());
    double epsilon = config.epsilon;
    std::size_t global_step = 0;
    std::vector<double> targets;

    for (std::size_t episode = 0; episode < config.episodes; ++episode) {
        const std::size_t slot = episode % order.size();
        if (slot == 0) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            order_rng.shuffle(std::span(order));
        }
        const Query& query = inputs.queries[order[slot]];
        const double episode_epsilon = epsilon;
        epsilon = std::max(config.epsilon_min, epsilon * config.epsilon_decay);

        const auto candidates = build_candidates(config, user.params, encoder, inputs.corpus, query);
        if (!candidates) {
            warn("episode " + std::to_string(episode) + " skipped: insufficient retrieval for " + query.query_id);
            continue;
        }

        EpisodeTrace trace;
        trace.episode = episode;
        trace.query_id = query.query_id;
        trace.epsilon = episode_epsilon;
        State state = initial_state(query, config.state_retrieval ? &result.pool : nullptr, config.psi,
                                    &trace.state_retrieved);
        auto& logged = working_log[query.query_id];
        double last_reward = 0.0;
        trace.best_reward = -std::numeric_limits<double>::infinity();

        for (std::size_t t = 1; t <= config.T; ++t) {
            const RankingContext ctx{inputs.corpus, user.params, net.online, encoder, config.N, config.m, config.M};
            auto decision = epsilon_greedy(policy_rng, episode_epsilon, logged, *candidates, state, ctx);
            const double reward = step_reward(user.params, encoder, inputs.corpus, inputs.qrels, inputs.log, query,
                                              decision.action, config.M);
            if (!std::isfinite(reward)) throw NumericError("non-finite reward for " + query.query_id);

            Transition transition;
            transition.state = state;
            transition.action = decision.action;
            transition.reward = reward;
            transition.next_state = simulate_feedback(user.params, encoder, inputs.corpus, inputs.qrels, state,
                                                      decision.action, config.tau, config.E_max);
            transition.terminal = t == config.T;
            transition.augmentations = augment_state(inputs.lexicon, state, config.n_augment);
            if (!transition.terminal) {
                transition.next_slate = initial_u_ranking(user.params, encoder, inputs.corpus, transition.next_state,
                                                          candidates->doc_ids, config.N, config.M);
            }
            replay.push(transition);

            const auto batch = replay.sample(replay_rng, config.batch);
            targets.clear();
            for (const auto* sampled : batch) targets.push_back(learner.target(*sampled));
            const auto step = train_step(net, encoder, inputs.corpus, batch, targets, config.lr);

            double rearrange_loss = 0.0;
            if (config.rearrange_every > 0 && global_step % config.rearrange_every == 0) {
                SlateAction a_q = decision.action;
                SlateAction a_u;
                if (decision.u_ranking) {
                    a_u = *decision.u_ranking;
                } else {
                    auto greedy = greedy_action(ctx, state, *candidates);
                    a_q = std::move(greedy.action);
                    a_u = std::move(*greedy.u_ranking);
                }
                rearrange_loss = rearrangement_update(user, encoder, inputs.corpus, state, a_q, a_u, config.lr);
            }

            ++global_step;
            if (global_step % config.c == 0) sync_target(net);

            trace.steps.push_back({t, decision.branch, decision.action.doc_ids, reward, decision.q_value, step.loss,
                                   rearrange_loss, transition.next_state.feedback.size()});
            trace.best_reward = std::max(trace.best_reward, reward);
            last_reward = reward;
            state = transition.next_state;

            if (on_step) on_step({global_step, &transition, &net, &user, &replay});
        }
        result.pool.push_final_state(query, state, last_reward);
        trace.final_feedback = state.feedback;
        result.traces.push_back(std::move(trace));
    }
    result.model.qnet = std::move(net);
    result.steps = global_step;
    return result;
}

ModelSnapshot snapshot_of(const Checkpoint& checkpoint) {
    if (!checkpoint.qnet) throw InvalidArgument("checkpoint has no Q-network; run train first");
    return {checkpoint.user.params, checkpoint.qnet->online};
}

OnlineSession::OnlineSession(TrainerConfig config, std::shared_ptr<const ModelSnapshot> model,
                             const CorpusIndex& corpus, Query query, const FeedbackPool* pool,
                             const QrelTable* qrels)
    : config_(std::move(config)), model_(std::move(model)), corpus_(corpus), qrels_(qrels) {
    if (!model_) throw InvalidArgument("online session: no model");
    if (trim(query.text).empty()) throw InvalidArgument("empty query");
    if (model_->qnet.slate_size != config_.N) {
        throw InvalidArgument("online session: checkpoint slate size " + std::to_string(model_->qnet.slate_size) +
                              " does not match N=" + std::to_string(config_.N));
    }
    auto candidates = build_candidates(config_, model_->user, encoder_, corpus_, query);
    if (!candidates) throw InsufficientCandidates("insufficient candidates for query '" + query.text + "'");
    candidates_ = std::move(*candidates);
    state_ = initial_state(query, config_.state_retrieval ? pool : nullptr, config_.psi, &retrieved_);
    rank();
}

void OnlineSession::rank() {
    const RankingContext ctx{corpus_, model_->user, model_->qnet, encoder_, config_.N, config_.m, config_.M};
    auto decision = greedy_action(ctx, state_, candidates_);
    slate_ = std::move(decision.action);
    q_value_ = decision.q_value;
}

std::vector<double> OnlineSession::scores() {
    std::vector<double> out;
    for (std::size_t k = 0; k < slate_.size(); ++k) {
        const auto& doc = corpus_.at(slate_.doc_ids[k]);
        out.push_back(v_score(model_->user, encoder_, state_, doc.sentences[slate_.representatives[k]].text));
    }
    return out;
}

double OnlineSession::reward() {
    static const QrelTable kNoJudgements;
    static const RankingLog kNoLog;
    return step_reward(model_->user, encoder_, corpus_, qrels_ ? *qrels_ : kNoJudgements, kNoLog, state_.query,
                       slate_, config_.M);
}

void OnlineSession::feedback(const std::string& doc_id, std::size_t sentence_idx) {
    const auto it = std::find(slate_.doc_ids.begin(), slate_.doc_ids.end(), doc_id);
    if (it == slate_.doc_ids.end()) throw StaleFeedback("document " + doc_id + " is not on the current slate");
    const auto& doc = corpus_.at(doc_id);
    if (sentence_idx >= doc.sentences.size()) {
        throw InvalidArgument("sentence index " + std::to_string(sentence_idx) + " out of range for " + doc_id);
    }
    Transition t;
    t.state = state_;
    t.action = slate_;
    t.reward = reward();
    state_ = append_feedback(state_, doc.sentences[sentence_idx].text, config_.E_max);
    t.next_state = state_;
    rank();
    t.next_slate = slate_;
    buffered_.push_back(std::move(t));
    ++steps_;
}

SessionTrace run_online_session(const TrainerConfig& config, const ModelSnapshot& model, const CorpusIndex& corpus,
                                const FeedbackPool* pool, const Query& query,
                                const std::vector<FeedbackEvent>& events) {
    // Non-owning handle; the caller keeps `model` alive for the call.
    std::shared_ptr<const ModelSnapshot> handle(std::shared_ptr<const ModelSnapshot>(), &model);
    OnlineSession session(config, handle, corpus, query, pool);
    SessionTrace trace;
    trace.state_retrieved = session.state_retrieved();
    trace.slates.push_back(session.slate());
    for (const auto& e : events) {
        session.feedback(e.doc_id, e.sentence_idx);
        trace.slates.push_back(session.slate());
    }
    trace.final_state = session.state();
    return trace;
}

EvalMode parse_eval_mode(std::string_view name) {
    if (name == "bm25") return EvalMode::Bm25;
    if (name == "u_only") return EvalMode::UOnly;
    if (name == "dqrank") return EvalMode::DQRank;
    throw InvalidArgument("unknown eval mode '" + std::string(name) + "' (expected bm25, u_only or dqrank)");
}

std::string_view to_string(EvalMode mode) {
    switch (mode) {
        case EvalMode::Bm25: return "bm25";
        case EvalMode::UOnly: return "u_only";
        case EvalMode::DQRank: return "dqrank";
    }
    return "unknown";
}

MetricReport evaluate(const TrainerConfig& config, const ModelSnapshot& model, const CorpusIndex& corpus,
                      const std::vector<Query>& queries, const QrelTable& qrels, EvalMode mode,
                      const FeedbackPool* pool) {
    PairEncoder encoder;
    MetricReport report;
    for (const auto& query : queries) {
        std::vector<std::string> slate;
        if (mode == EvalMode::Bm25) {
            for (auto& hit : bm25_retrieve(corpus, query, config.N)) slate.push_back(std::move(hit.doc_id));
        } else if (auto candidates = build_candidates(config, model.user, encoder, corpus, query)) {
            if (mode == EvalMode::UOnly) {
                slate.assign(candidates->doc_ids.begin(),
                             candidates->doc_ids.begin() + static_cast<std::ptrdiff_t>(config.N));
            } else {
                const auto state = initial_state(query, config.state_retrieval ? pool : nullptr, config.psi);
                const RankingContext ctx{corpus, model.user, model.qnet, encoder, config.N, config.m, config.M};
                slate = greedy_action(ctx, state, *candidates).action.doc_ids;
            }
        }
        report.per_query[query.query_id] = {ndcg_at_k(slate, qrels, query.query_id, 10),
                                            mrr(slate, qrels, query.query_id)};
    }
    report.finalize();
    return report;
}

std::vector<Fold> kfold_split(const std::vector<Query>& queries, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("kfold: k must be >= 2");
    if (k > queries.size()) {
        throw InvalidArgument("kfold: k=" + std::to_string(k) + " exceeds the " + std::to_string(queries.size()) +
                              " queries");
    }
    std::vector<std::size_t> idx(queries.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(idx));
    std::vector<std::size_t> fold_of(queries.size());
    for (std::size_t i = 0; i < idx.size(); ++i) fold_of[idx[i]] = i % k;

    std::vector<Fold> folds(k);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t f = 0; f < k; ++f) (fold_of[q] == f ? folds[f].test : folds[f].train).push_back(queries[q]);
    }
    return folds;
}

}  // namespace dqrank
