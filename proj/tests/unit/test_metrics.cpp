#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "dqrank/error.hpp"
#include "dqrank/metrics.hpp"
#include "helpers.hpp"

using namespace dqrank;

namespace {

QrelTable graded(const std::vector<std::pair<std::string, int>>& grades) {
    QrelTable t;
    for (const auto& [doc, g] : grades) t.set("q", doc, g);
    return t;
}

}  // namespace

TEST_CASE("dcg arithmetic") {
    CHECK(dcg(std::vector<double>{}) == 0.0);
    CHECK(dcg(std::vector<double>{1.0}) == doctest::Approx(1.0 / std::log(2.0)).epsilon(1e-15));
    CHECK(dcg(std::vector<double>{1.0}) == doctest::Approx(1.4427).epsilon(1e-4));
    CHECK(dcg(std::vector<double>{1.0, 0.5, 0.2}) ==
          doctest::Approx(1.0 / std::log(2.0) + 0.5 / std::log(3.0) + 0.2 / std::log(4.0)).epsilon(1e-15));
    CHECK(dcg(std::vector<double>{1.0, 0.5, 0.2}) == doctest::Approx(2.0421).epsilon(1e-4));
    CHECK(dcg(std::vector<double>{1.0, 0.6, 0.2}) > dcg(std::vector<double>{1.0, 0.5, 0.2}));
}

TEST_CASE("ndcg_at_k cases") {
    const auto qrels = graded({{"a", 2}, {"b", 0}, {"c", 1}, {"d", 0}});
    const std::vector<std::string> ideal = {"a", "c", "b", "d"};
    CHECK(ndcg_at_k(ideal, qrels, "q", 4) == doctest::Approx(1.0));
    const std::vector<std::string> none = {"b", "d"};
    CHECK(ndcg_at_k(none, qrels, "q", 2) == 0.0);
    CHECK(ndcg_at_k(ideal, qrels, "unjudged", 4) == 0.0);

    // Grades [2,0,1,0] in slate order, normalized by the best of all 24 orderings.
    const std::vector<std::string> slate = {"a", "b", "c", "d"};
    std::vector<double> grades = {2, 0, 1, 0};
    std::sort(grades.begin(), grades.end());
    double best = 0.0;
    do {
        double v = 0.0;
        for (std::size_t k = 0; k < grades.size(); ++k) v += grades[k] / std::log(k + 2.0);
        best = std::max(best, v);
    } while (std::next_permutation(grades.begin(), grades.end()));
    const double got = 2.0 / std::log(2.0) + 1.0 / std::log(4.0);
    CHECK(ndcg_at_k(slate, qrels, "q", 4) == doctest::Approx(got / best).epsilon(1e-12));
    CHECK_THROWS_AS(ndcg_at_k(slate, qrels, "q", 0), InvalidArgument);

    // The ideal covers judged docs that were never retrieved.
    const std::vector<std::string> partial = {"c"};
    CHECK(ndcg_at_k(partial, qrels, "q", 10) ==
          doctest::Approx((1.0 / std::log(2.0)) / (2.0 / std::log(2.0) + 1.0 / std::log(3.0))));
}

TEST_CASE("mrr and labeled_reward") {
    const auto qrels = graded({{"x", 2}, {"y", 0}, {"z", 1}});
    CHECK(mrr(std::vector<std::string>{"x", "y"}, qrels, "q") == 1.0);
    CHECK(mrr(std::vector<std::string>{"y", "z"}, qrels, "q") == 0.5);
    CHECK(mrr(std::vector<std::string>{"y"}, qrels, "q") == 0.0);

    const auto two = graded({{"p", 0}, {"r", 2}});
    const double reversed = (2.0 / std::log(3.0)) / (2.0 / std::log(2.0));
    CHECK(labeled_reward(std::vector<std::string>{"p", "r"}, two, "q") == doctest::Approx(reversed).epsilon(1e-15));
    CHECK(labeled_reward(std::vector<std::string>{"r", "p"}, two, "q") == doctest::Approx(1.0));
    const auto zeros = graded({{"p", 0}, {"r", 0}});
    CHECK(labeled_reward(std::vector<std::string>{"p", "r"}, zeros, "q") == 0.0);
}

TEST_CASE("u_ndcg") {
    CHECK(u_ndcg(std::vector<double>{0.9, 0.5, 0.1}) == doctest::Approx(1.0));
    CHECK(u_ndcg(std::vector<double>{0.0, 0.0}) == 0.0);
    const std::vector<double> s = {0.1, 0.9};
    CHECK(u_ndcg(s) == doctest::Approx((0.1 / std::log(2.0) + 0.9 / std::log(3.0)) /
                                       (0.9 / std::log(2.0) + 0.1 / std::log(3.0))));
}

TEST_CASE("reward_transition_from_scores") {
    std::map<std::string, double> u = {{"a", 0.8}, {"b", 0.4}, {"c", 0.2}, {"d", 0.1}};
    const auto fn = [&](const std::string& id) { return u.at(id); };
    const std::vector<std::string> slate = {"a", "b"};

    SUBCASE("identical logged slate gives xi = 1") {
        const std::vector<LoggedSlate> log = {{{"a", "b"}, 0.37}};
        const auto est = reward_transition_from_scores(fn, slate, log);
        CHECK(est.terms[0].xi == 1.0);
        CHECK(est.value == 0.37);
    }
    SUBCASE("hand-computed xi and rewards average") {
        // Logged slate one has half the DCG of `slate`, logged slate two twice it.
        const double target = 0.8 / std::log(2.0) + 0.4 / std::log(3.0);
        u["h"] = target / 2.0 * std::log(2.0);
        u["t"] = target * 2.0 * std::log(2.0);
        const std::vector<LoggedSlate> log = {{{"h"}, 0.3}, {{"t"}, 0.8}};
        const auto est = reward_transition_from_scores(fn, slate, log);
        CHECK(est.terms[0].xi == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(est.terms[1].xi == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(est.value == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("unlabelled logged slates use their u-nDCG") {
        const std::vector<LoggedSlate> log = {{{"c", "a"}, std::nullopt}};
        const auto est = reward_transition_from_scores(fn, slate, log);
        CHECK(est.terms[0].reward == doctest::Approx(u_ndcg(std::vector<double>{0.2, 0.8})));
    }
    SUBCASE("zero-DCG slates are skipped, all skipped is an error") {
        u["zero"] = 0.0;
        testutil::WarningCapture w;
        const std::vector<LoggedSlate> log = {{{"zero"}, 0.9}, {{"a", "b"}, 0.4}};
        const auto est = reward_transition_from_scores(fn, slate, log);
        CHECK(est.terms[0].skipped);
        CHECK(est.value == 0.4);
        CHECK(w.messages.size() == 1);
        const std::vector<LoggedSlate> only_zero = {{{"zero"}, 0.9}};
        CHECK_THROWS_AS(reward_transition_from_scores(fn, slate, only_zero), InvalidArgument);
        CHECK_THROWS_AS(reward_transition_from_scores(fn, slate, std::vector<LoggedSlate>{}), InvalidArgument);
    }
}

TEST_CASE("MetricReport aggregates the per-query mean") {
    MetricReport r;
    r.per_query["a"] = {1.0, 0.5};
    r.per_query["b"] = {0.0, 1.0};
    r.finalize();
    CHECK(r.ndcg_at_10 == 0.5);
    CHECK(r.mrr == 0.75);
    const auto j = r.to_json();
    CHECK(j["per_query"]["a"]["mrr"] == 0.5);
    CHECK(j.contains("ndcg_at_10"));
}
