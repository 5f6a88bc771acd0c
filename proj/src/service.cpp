#include "dqrank/service.hpp"

#include <random>

#include <httplib.h>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

ServiceResponse error_response(int status, const std::string& code) { return {status, {{"error", code}}}; }

}  // namespace

SearchService::SearchService(ServiceOptions options, FeedbackPool pool)
    : options_(std::move(options)), pool_(std::move(pool)), id_state_(std::random_device{}()) {
    options_.config.validate();
    id_state_ = (id_state_ << 32) ^ std::random_device{}();
}

void SearchService::load(ServiceModel model) {
    if (!model.corpus || !model.model) throw InvalidArgument("service: corpus and model are required");
    if (model.model->qnet.slate_size != options_.config.N) {
        throw InvalidArgument("service: checkpoint slate size does not match N");
    }
    auto shared = std::make_shared<const ServiceModel>(std::move(model));
    {
        std::lock_guard lock(model_mutex_);
        model_ = std::move(shared);
    }
    std::lock_guard lock(eval_mutex_);
    eval_cache_.reset();
}

bool SearchService::ready() const { return current_model() != nullptr; }

std::shared_ptr<const ServiceModel> SearchService::current_model() const {
    std::lock_guard lock(model_mutex_);
    return model_;
}

std::string SearchService::new_session_id() {
    std::lock_guard lock(sessions_mutex_);
    // splitmix64 over a randomly seeded counter
    std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
    return buf;
}

nlohmann::json SearchService::results_json(OnlineSession& session, const ServiceModel& model) const {
    const auto scores = session.scores();
    const auto& slate = session.slate();
    nlohmann::json results = nlohmann::json::array();
    for (std::size_t k = 0; k < slate.size(); ++k) {
        const auto& doc = model.corpus->at(slate.doc_ids[k]);
        std::vector<std::string> sentences;
        for (const auto& s : doc.sentences) sentences.push_back(s.text);
        results.push_back({{"doc_id", doc.doc_id},
                           {"score", scores[k]},
                           {"selected_idx", slate.representatives[k]},
                           {"sentences", std::move(sentences)}});
    }
    return results;
}

ServiceResponse SearchService::create_session(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
        return error_response(400, "invalid_request");
    }
    const std::string text = body["query"].get<std::string>();
    if (trim(text).empty()) return error_response(400, "empty_query");
    auto model = current_model();
    if (!model) return error_response(503, "not_ready");
    expire_idle();

    auto session = std::make_shared<Session>();
    session->model = model;
    const auto id = new_session_id();
    try {
        std::shared_lock pool_lock(pool_mutex_);
        session->online.emplace(options_.config, model->model, *model->corpus, Query{"session:" + text, text},
                                &pool_, &model->qrels);
    } catch (const InsufficientCandidates&) {
        return error_response(422, "insufficient_candidates");
    }
    session->created = session->updated = std::chrono::steady_clock::now();
    ServiceResponse response{200,
                             {{"session_id", id},
                              {"state_retrieved", session->online->state_retrieved()},
                              {"results", results_json(*session->online, *model)}}};
    {
        std::lock_guard lock(sessions_mutex_);
        sessions_[id] = std::move(session);
    }
    ++created_total_;
    return response;
}

std::shared_ptr<SearchService::Session> SearchService::find(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

ServiceResponse SearchService::post_feedback(const std::string& session_id, const nlohmann::json& body) {
    auto session = find(session_id);
    if (!session) return error_response(404, "unknown_session");
    if (!body.is_object() || !body.contains("doc_id") || !body["doc_id"].is_string() ||
        !body.contains("sentence_idx") || !body["sentence_idx"].is_number_integer()) {
        return error_response(400, "invalid_feedback");
    }
    const auto doc_id = body["doc_id"].get<std::string>();
    const auto idx = body["sentence_idx"].get<std::int64_t>();

    std::lock_guard lock(session->mutex);
    if (session->ended) return error_response(404, "unknown_session");
    if (idx < 0) return error_response(409, "invalid_feedback");
    try {
        session->online->feedback(doc_id, static_cast<std::size_t>(idx));
    } catch (const StaleFeedback&) {
        return error_response(409, "stale_feedback");
    } catch (const InvalidArgument&) {
        return error_response(409, "invalid_feedback");
    }
    session->updated = std::chrono::steady_clock::now();
    ++feedback_total_;
    return {200, {{"results", results_json(*session->online, *session->model)}}};
}

ServiceResponse SearchService::end_session(const std::string& session_id) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(sessions_mutex_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return error_response(404, "unknown_session");
        session = std::move(it->second);
        sessions_.erase(it);
    }
    std::lock_guard lock(session->mutex);
    session->ended = true;
    const double reward = session->online->reward();
    bool stored = false;
    {
        std::unique_lock pool_lock(pool_mutex_);
        stored = pool_.push_final_state(session->online->query(), session->online->state(), reward);
        if (stored && !options_.pool_path.empty()) pool_.save(options_.pool_path);
    }
    if (stored) {
        std::lock_guard eval_lock(eval_mutex_);
        eval_cache_.reset();
    }
    ++ended_total_;
    return {200, {{"stored", stored}}};
}

ServiceResponse SearchService::metrics() {
    nlohmann::json body;
    auto model = current_model();
    {
        std::lock_guard lock(eval_mutex_);
        if (!eval_cache_) {
            if (model && !model->eval_queries.empty()) {
                std::shared_lock pool_lock(pool_mutex_);
                eval_cache_ = evaluate(options_.config, *model->model, *model->corpus, model->eval_queries,
                                       model->qrels, EvalMode::DQRank, &pool_)
                                  .to_json();
            } else {
                eval_cache_ = nlohmann::json{{"ndcg_at_10", nullptr}, {"mrr", nullptr}, {"per_query", nlohmann::json::object()}};
            }
        }
        body = *eval_cache_;
    }
    body["pool_size"] = pool_size();
    body["active_sessions"] = active_sessions();
    body["sessions_created_total"] = created_total_.load();
    body["sessions_ended_total"] = ended_total_.load();
    body["feedback_total"] = feedback_total_.load();
    return {200, std::move(body)};
}

ServiceResponse SearchService::health() const { return {200, {{"status", "ok"}}}; }

std::size_t SearchService::expire_idle(std::chrono::steady_clock::time_point now) {
    std::lock_guard lock(sessions_mutex_);
    return std::erase_if(sessions_, [&](const auto& item) {
        std::unique_lock session_lock(item.second->mutex, std::try_to_lock);
        return session_lock.owns_lock() && now - item.second->updated > options_.idle_ttl;
    });
}

std::size_t SearchService::active_sessions() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

std::size_t SearchService::pool_size() const {
    std::shared_lock lock(pool_mutex_);
    return pool_.size();
}

FeedbackPool SearchService::pool_copy() const {
    std::shared_lock lock(pool_mutex_);
    return pool_;
}

void SearchService::install(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    };
    server.Post("/api/session", [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse(req);
        reply(res, body ? create_session(*body) : error_response(400, "invalid_json"));
    });
    server.Post(R"(/api/session/([^/]+)/feedback)",
                [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse(req);
                    reply(res, body ? post_feedback(req.matches[1], *body) : error_response(400, "invalid_json"));
                });
    server.Delete(R"(/api/session/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, end_session(req.matches[1]));
    });
    server.Get("/api/metrics", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, metrics()); });
    server.Get("/api/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
    server.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal_error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            warn(std::string("service: ") + e.what());
        }
        reply(res, error_response(500, what));
    });
}

}  // namespace dqrank
