#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqrank/trainer.hpp"

namespace httplib {
class Server;
}

namespace dqrank {

struct ServiceOptions {
    TrainerConfig config;
    std::chrono::seconds idle_ttl{30 * 60};
    std::filesystem::path pool_path;  // saved after every stored session when set
};

/// Everything a request needs; swapped as a whole on reload.
struct ServiceModel {
    std::shared_ptr<const CorpusIndex> corpus;
    std::shared_ptr<const ModelSnapshot> model;
    std::vector<Query> eval_queries;  // optional eval split
    QrelTable qrels;
};

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

/// Interactive search sessions over a frozen model. Thread-safe: requests on
/// one session are serialized, pool writes are serialized globally.
class SearchService {
public:
    explicit SearchService(ServiceOptions options, FeedbackPool pool = {});

    void load(ServiceModel model);
    bool ready() const;

    ServiceResponse create_session(const nlohmann::json& body);
    ServiceResponse post_feedback(const std::string& session_id, const nlohmann::json& body);
    ServiceResponse end_session(const std::string& session_id);
    ServiceResponse metrics();
    ServiceResponse health() const;

    /// Drops sessions idle for longer than the TTL; returns how many.
    std::size_t expire_idle(std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());

    std::size_t active_sessions() const;
    std::size_t pool_size() const;
    FeedbackPool pool_copy() const;

    /// Routes /api/* onto `server`; JSON bodies, JSON errors {"error": code}.
    void install(httplib::Server& server);

private:
    struct Session {
        std::mutex mutex;
        std::shared_ptr<const ServiceModel> model;
        std::optional<OnlineSession> online;
        std::chrono::steady_clock::time_point created;
        std::chrono::steady_clock::time_point updated;
        bool ended = false;
    };

    std::shared_ptr<const ServiceModel> current_model() const;
    std::shared_ptr<Session> find(const std::string& id);
    nlohmann::json results_json(OnlineSession& session, const ServiceModel& model) const;
    std::string new_session_id();

    ServiceOptions options_;
    mutable std::mutex model_mutex_;
    std::shared_ptr<const ServiceModel> model_;

    mutable std::shared_mutex pool_mutex_;
    FeedbackPool pool_;

    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t id_state_;

    std::atomic<std::size_t> created_total_{0};
    std::atomic<std::size_t> ended_total_{0};
    std::atomic<std::size_t> feedback_total_{0};

    std::mutex eval_mutex_;
    std::optional<nlohmann::json> eval_cache_;
};

}  // namespace dqrank
