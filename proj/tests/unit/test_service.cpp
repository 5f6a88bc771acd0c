#include <doctest.h>

#include <set>

#include "dqrank/pipeline.hpp"
#include "dqrank/service.hpp"
#include "helpers.hpp"

using namespace dqrank;
using nlohmann::json;

namespace {

TrainerConfig service_config() {
    TrainerConfig c;
    c.N = 5;
    c.m = 2;
    c.size_T = 8;
    c.size_I = 20;
    c.T = 3;
    c.episodes = 2;
    c.h = 8;
    c.batch = 4;
    c.c = 2;
    c.pretrain_epochs = 1;
    return c;
}

struct Fixture {
    Fixture() : data(dataset_from(generate_synthetic_corpus(3, 2, 15, 2))) {
        const OfflineInputs in{data.corpus, data.queries, data.qrels, data.log, data.lexicon};
        const auto trained = run_offline(service_config(), in);
        model.corpus = std::make_shared<const CorpusIndex>(data.corpus);
        model.model = std::make_shared<const ModelSnapshot>(snapshot_of(trained.model));
        model.eval_queries = {data.queries[0], data.queries[2]};
        model.qrels = data.qrels;
    }
    Dataset data;
    ServiceModel model;
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void check_results(const json& results, const CorpusIndex& corpus, std::size_t n) {
    REQUIRE(results.is_array());
    CHECK(results.size() == n);
    std::set<std::string> seen;
    for (const auto& r : results) {
        REQUIRE(r["doc_id"].is_string());
        REQUIRE(r["score"].is_number());
        REQUIRE(r["selected_idx"].is_number_integer());
        REQUIRE(r["sentences"].is_array());
        const auto& doc = corpus.at(r["doc_id"].get<std::string>());
        CHECK(r["sentences"].size() == doc.sentences.size());
        CHECK(r["selected_idx"].get<std::size_t>() < doc.sentences.size());
        CHECK(seen.insert(r["doc_id"].get<std::string>()).second);
    }
}

}  // namespace

TEST_CASE("service refuses requests before a model is loaded") {
    SearchService service({service_config()});
    CHECK_FALSE(service.ready());
    const auto r = service.create_session({{"query", "anything"}});
    CHECK(r.status == 503);
    CHECK(r.body == json{{"error", "not_ready"}});
    CHECK(service.health().body == json{{"status", "ok"}});
    const auto m = service.metrics();
    CHECK(m.status == 200);
    CHECK(m.body["active_sessions"] == 0);
    CHECK(m.body["ndcg_at_10"].is_null());
}

TEST_CASE("service session lifecycle") {
    const auto& f = fixture();
    SearchService service({service_config()});
    service.load(f.model);
    REQUIRE(service.ready());
    const auto& query = f.data.queries[0].text;

    auto created = service.create_session({{"query", query}});
    REQUIRE(created.status == 200);
    CHECK(created.body["state_retrieved"] == false);
    const auto id = created.body["session_id"].get<std::string>();
    CHECK_FALSE(id.empty());
    check_results(created.body["results"], *f.model.corpus, 5);
    CHECK(service.active_sessions() == 1);

    const auto doc = created.body["results"][0]["doc_id"].get<std::string>();
    auto fb = service.post_feedback(id, {{"doc_id", doc}, {"sentence_idx", 0}});
    REQUIRE(fb.status == 200);
    check_results(fb.body["results"], *f.model.corpus, 5);

    SUBCASE("errors") {
        CHECK(service.create_session({{"query", "   "}}).body == json{{"error", "empty_query"}});
        CHECK(service.create_session({{"query", "   "}}).status == 400);
        CHECK(service.create_session({{"q", "x"}}).status == 400);
        CHECK(service.create_session({{"query", "zzzz qqqq"}}).status == 422);
        CHECK(service.post_feedback("nope", {{"doc_id", doc}, {"sentence_idx", 0}}).status == 404);
        CHECK(service.post_feedback(id, {{"doc_id", doc}}).status == 400);

        const auto stale = service.post_feedback(id, {{"doc_id", "not-a-doc"}, {"sentence_idx", 0}});
        CHECK(stale.status == 409);
        CHECK(stale.body == json{{"error", "stale_feedback"}});
        const auto on_slate = fb.body["results"][0]["doc_id"].get<std::string>();
        for (const int bad : {999, -1}) {
            const auto out = service.post_feedback(id, {{"doc_id", on_slate}, {"sentence_idx", bad}});
            CHECK(out.status == 409);
            CHECK(out.body == json{{"error", "invalid_feedback"}});
        }
    }

    SUBCASE("end, double end and retrieval on repeat") {
        const auto ended = service.end_session(id);
        CHECK(ended.status == 200);
        CHECK(ended.body == json{{"stored", true}});
        CHECK(service.end_session(id).status == 404);
        CHECK(service.post_feedback(id, {{"doc_id", doc}, {"sentence_idx", 0}}).status == 404);
        CHECK(service.active_sessions() == 0);
        CHECK(service.pool_size() == 1);

        const auto again = service.create_session({{"query", query}});
        REQUIRE(again.status == 200);
        CHECK(again.body["state_retrieved"] == true);
    }

    SUBCASE("metrics counters") {
        const auto m = service.metrics();
        CHECK(m.status == 200);
        CHECK(m.body["active_sessions"] == 1);
        CHECK(m.body["sessions_created_total"] == 1);
        CHECK(m.body["feedback_total"] == 1);
        CHECK(m.body["pool_size"] == 0);
        CHECK(m.body["ndcg_at_10"].is_number());
        CHECK(m.body["mrr"].is_number());
        CHECK(m.body["per_query"].size() == 2);
        service.create_session({{"query", query}});
        CHECK(service.metrics().body["sessions_created_total"] == 2);
    }
}

TEST_CASE("ending immediately stores an empty state") {
    const auto& f = fixture();
    SearchService service({service_config()});
    service.load(f.model);
    const auto created = service.create_session({{"query", f.data.queries[1].text}});
    REQUIRE(created.status == 200);
    CHECK(service.end_session(created.body["session_id"]).body == json{{"stored", true}});
    const auto pool = service.pool_copy();
    REQUIRE(pool.size() == 1);
    CHECK(pool.entries()[0].state.feedback.empty());
}

TEST_CASE("sessions are isolated and expire when idle") {
    const auto& f = fixture();
    ServiceOptions options{service_config()};
    options.idle_ttl = std::chrono::seconds(60);
    SearchService service(options);
    service.load(f.model);
    const auto& query = f.data.queries[0].text;
    const auto a = service.create_session({{"query", query}});
    const auto b = service.create_session({{"query", query}});
    REQUIRE(a.status == 200);
    REQUIRE(b.status == 200);
    CHECK(a.body["session_id"] != b.body["session_id"]);
    CHECK(a.body["results"] == b.body["results"]);

    const auto doc = a.body["results"][0]["doc_id"].get<std::string>();
    REQUIRE(service.post_feedback(a.body["session_id"], {{"doc_id", doc}, {"sentence_idx", 0}}).status == 200);
    // b has not seen a's feedback: ending it stores an empty state
    service.end_session(b.body["session_id"]);
    CHECK(service.pool_copy().entries()[0].state.feedback.empty());

    CHECK(service.expire_idle(std::chrono::steady_clock::now()) == 0);
    CHECK(service.expire_idle(std::chrono::steady_clock::now() + std::chrono::seconds(61)) == 1);
    CHECK(service.active_sessions() == 0);
}

TEST_CASE("pool file persists across service restarts") {
    const auto& f = fixture();
    testutil::TempDir dir;
    ServiceOptions options{service_config()};
    options.pool_path = dir / "pool.json";
    const auto& query = f.data.queries[0].text;
    {
        SearchService service(options);
        service.load(f.model);
        const auto s = service.create_session({{"query", query}});
        service.end_session(s.body["session_id"]);
    }
    REQUIRE(std::filesystem::exists(options.pool_path));
    SearchService restarted(options, FeedbackPool::load(options.pool_path));
    restarted.load(f.model);
    CHECK(restarted.metrics().body["pool_size"] == 1);
    CHECK(restarted.create_session({{"query", query}}).body["state_retrieved"] == true);
}

TEST_CASE("service rejects a model with the wrong slate size") {
    auto config = service_config();
    config.N = 6;
    SearchService service({config});
    CHECK_THROWS_AS(service.load(fixture().model), InvalidArgument);
}
