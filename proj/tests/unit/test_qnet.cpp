#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dqrank/error.hpp"
#include "dqrank/qnet.hpp"
#include "helpers.hpp"

using namespace dqrank;

namespace {

UserModelParams user_params(std::uint64_t seed) {
    Rng rng(seed);
    auto p = UserModelParams::init(rng);
    p.W *= 8.0;
    return p;
}

QNetParams qnet_params(std::uint64_t seed, std::size_t n, std::size_t hidden = 8) {
    Rng rng(seed);
    auto p = QNetParams::init(rng, n, kEncoderDim, hidden);
    p.W1 *= 6.0;
    return p;
}

// Dense scalar forward pass over the concatenated per-position encodings.
double oracle_q(const QNetParams& p, const std::vector<Vector>& xs) {
    double q = p.b2;
    for (Eigen::Index r = 0; r < p.W1.rows(); ++r) {
        double pre = p.b1[r];
        for (std::size_t k = 0; k < xs.size(); ++k) {
            for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
                pre += p.W1(r, static_cast<Eigen::Index>(k * kEncoderDim) + i) * xs[k][i];
            }
        }
        q += p.W2[r] * std::tanh(pre);
    }
    return q;
}

std::vector<Vector> dense_embeddings(const CorpusIndex& corpus, const State& state, const SlateAction& slate) {
    const auto w = ndcg_weights(state.feedback.size());
    const auto texts = state.texts();
    std::vector<Vector> out;
    for (std::size_t k = 0; k < slate.size(); ++k) {
        const auto& sentence = corpus.at(slate.doc_ids[k]).sentences[slate.representatives[k]].text;
        Vector x = Vector::Zero(kEncoderDim);
        for (std::size_t e = 0; e < texts.size(); ++e) x += w[e] * encode_pair(texts[e], sentence);
        out.push_back(x);
    }
    return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

}  // namespace

TEST_CASE("ndcg_weights") {
    CHECK(ndcg_weights(0) == std::vector<double>{1.0});
    const auto w1 = ndcg_weights(1);
    CHECK(w1[0] == doctest::Approx(0.6132).epsilon(1e-4));
    CHECK(w1[1] == doctest::Approx(0.3868).epsilon(1e-4));
    for (std::size_t e = 0; e < 8; ++e) {
        const auto w = ndcg_weights(e);
        CHECK(w.size() == e + 1);
        CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) <= 1e-12);
        for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] < w[i - 1]);
    }
}

TEST_CASE("v_score, representatives and weighted embeddings") {
    const auto corpus = testutil::small_corpus();
    const auto u = user_params(1);
    PairEncoder enc;
    const State empty{{"q", "solar power"}, {}};
    const State one{{"q", "solar power"}, {"battery storage holds solar power"}};
    const std::string s = "wind turbines spin in strong wind";

    CHECK(v_score(u, enc, empty, s) == u_score(u, enc, "solar power", s));
    const auto w = ndcg_weights(1);
    CHECK(v_score(u, enc, one, s) ==
          doctest::Approx(w[0] * u_score(u, "solar power", s) + w[1] * u_score(u, one.feedback[0], s)).epsilon(1e-12));
    auto flat = UserModelParams::zeros();
    flat.B << 0.0, 0.7;
    CHECK(v_score(flat, enc, one, s) == doctest::Approx(u_score(flat, "x", "y")).epsilon(1e-15));

    const auto& d5 = corpus.at("d5");
    CHECK(select_representative(u, enc, empty, d5, 10) == doc_score(u, enc, "solar power", d5, 10).sentence_index);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
        if (v_score(u, enc, one, d5.sentences[i].text) > v_score(u, enc, one, d5.sentences[best].text)) best = i;
    }
    CHECK(select_representative(u, enc, one, d5, 3) == best);
    CHECK(select_representative(u, enc, one, corpus.at("d6"), 3) == 0);

    CHECK(weighted_embed(enc, empty, s).to_dense() == encode_pair("solar power", s));
    const Vector mixed = weighted_embed(enc, one, s).to_dense();
    const Vector expected = w[0] * encode_pair("solar power", s) + w[1] * encode_pair(one.feedback[0], s);
    CHECK((mixed - expected).cwiseAbs().maxCoeff() < 1e-15);
    const State same{{"q", "solar power"}, {"solar power"}};
    CHECK((weighted_embed(enc, same, s).to_dense() - encode_pair("solar power", s)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("q_value forward pass") {
    const auto corpus = testutil::small_corpus();
    const auto u = user_params(2);
    PairEncoder enc;
    const State state{{"q", "solar power"}, {"battery storage holds solar power"}};
    SlateAction slate{{"d1", "d2", "d3"}, {}};

    const auto zeros = QNetParams::zeros(3, kEncoderDim, 8);
    auto with_bias = zeros;
    with_bias.b2 = 0.25;
    CHECK(q_value(with_bias, u, enc, corpus, state, slate) == 0.25);

    const auto p = qnet_params(3, 3);
    SlateAction filled = slate;
    ensure_representatives(filled, u, enc, corpus, state, 10);
    const double q = q_value(p, u, enc, corpus, state, filled);
    CHECK(q == doctest::Approx(oracle_q(p, dense_embeddings(corpus, state, filled))).epsilon(1e-12));
    // Missing representatives are selected over every sentence.
    CHECK(q_value(p, u, enc, corpus, state, slate) == q);

    SlateAction swapped = filled;
    std::swap(swapped.doc_ids[0], swapped.doc_ids[1]);
    std::swap(swapped.representatives[0], swapped.representatives[1]);
    CHECK(q_value(p, u, enc, corpus, state, swapped) != q);

    CHECK_THROWS_AS(q_value(p, u, enc, corpus, state, SlateAction{{"d1", "d2"}, {0, 0}}), InvalidArgument);
}

TEST_CASE("q_value_augmented") {
    const auto corpus = testutil::small_corpus();
    const auto u = user_params(2);
    PairEncoder enc;
    const auto p = qnet_params(4, 3);
    const State s{{"q", "solar power"}, {}};
    const SlateAction a{{"d1", "d2", "d3"}, {0, 1, 0}};
    const double q = q_value(p, u, enc, corpus, s, a);
    CHECK(q_value_augmented(p, u, enc, corpus, s, {}, a) == q);
    const std::vector<State> copies = {s, s};
    CHECK(q_value_augmented(p, u, enc, corpus, s, copies, a) == doctest::Approx(q).epsilon(1e-15));
    const std::vector<State> augs = {{{"q", "sun power"}, {}}, {{"q", "solar energy"}, {}}};
    const double mean = (q + q_value(p, u, enc, corpus, augs[0], a) + q_value(p, u, enc, corpus, augs[1], a)) / 3.0;
    CHECK(q_value_augmented(p, u, enc, corpus, s, augs, a) == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("td_target") {
    const auto corpus = testutil::small_corpus();
    PairEncoder enc;
    const auto target = qnet_params(5, 2);
    Transition t;
    t.state = {{"q", "solar power"}, {}};
    t.action = {{"d1", "d2"}, {0, 0}};
    t.reward = 1.0;
    t.next_state = {{"q", "solar power"}, {"solar panels convert sunlight into power"}};
    const std::vector<SlateAction> candidates = {{{"d1", "d2"}, {0, 0}}, {{"d3", "d4"}, {0, 1}}};

    t.terminal = true;
    CHECK(td_target(target, enc, corpus, t, 0.9, candidates) == 1.0);
    t.terminal = false;
    CHECK(td_target(target, enc, corpus, t, 0.0, candidates) == 1.0);

    double best = -1e300;
    for (const auto& c : candidates) best = std::max(best, oracle_q(target, dense_embeddings(corpus, t.next_state, c)));
    CHECK(td_target(target, enc, corpus, t, 0.9, candidates) == doctest::Approx(1.0 + 0.9 * best).epsilon(1e-12));
    CHECK(1.0 + 0.9 * std::max(0.2, 0.5) == doctest::Approx(1.45));

    CHECK_THROWS_AS(td_target(target, enc, corpus, t, 0.9, {}), InvalidArgument);
    CHECK_THROWS_AS(td_target(target, enc, corpus, t, 1.5, candidates), InvalidArgument);
}

TEST_CASE("td_loss gradient matches central differences") {
    const auto corpus = testutil::small_corpus();
    PairEncoder enc;
    Transition a;
    a.state = {{"q", "solar power"}, {"battery storage holds solar power"}};
    a.action = {{"d1", "d2"}, {0, 1}};
    a.augmentations = {{{"q", "sun power"}, {"battery storage holds solar power"}}};
    Transition b;
    b.state = {{"q", "bread"}, {}};
    b.action = {{"d5", "d4"}, {1, 0}};
    const std::vector<const Transition*> batch = {&a, &b};
    const std::vector<double> targets = {0.7, -0.2};

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = qnet_params(seed + 20, 2, 6);
        auto g = QNetParams::zeros(2, kEncoderDim, 6);
        td_loss(p, enc, corpus, batch, targets, &g);
        const auto loss_at = [&](const QNetParams& q) { return td_loss(q, enc, corpus, batch, targets); };
        const double h = 1e-5;
        const auto emb = slate_embeddings(enc, corpus, a.state, a.action);
        for (int trial = 0; trial < 6; ++trial) {
            const auto r = static_cast<Eigen::Index>(trial % 6);
            const auto k = static_cast<std::size_t>(trial % 2);
            const auto col = static_cast<Eigen::Index>(k * kEncoderDim + emb[k].entries[trial % emb[k].entries.size()].first);
            auto plus = p;
            auto minus = p;
            plus.W1(r, col) += h;
            minus.W1(r, col) -= h;
            CHECK(rel_err(g.W1(r, col), (loss_at(plus) - loss_at(minus)) / (2 * h)) < 1e-4);

            plus = p;
            minus = p;
            plus.b1[r] += h;
            minus.b1[r] -= h;
            CHECK(rel_err(g.b1[r], (loss_at(plus) - loss_at(minus)) / (2 * h)) < 1e-4);

            plus = p;
            minus = p;
            plus.W2[r] += h;
            minus.W2[r] -= h;
            CHECK(rel_err(g.W2[r], (loss_at(plus) - loss_at(minus)) / (2 * h)) < 1e-4);
        }
        auto plus = p;
        auto minus = p;
        plus.b2 += h;
        minus.b2 -= h;
        CHECK(rel_err(g.b2, (loss_at(plus) - loss_at(minus)) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("train_step and sync_target") {
    const auto corpus = testutil::small_corpus();
    PairEncoder enc;
    Rng rng(9);
    QNet net{QNetParams::init(rng, 2, kEncoderDim, 8), {}, {}};
    net.target = net.online;
    const auto initial_target = net.target;

    Transition a;
    a.state = {{"q", "solar power"}, {}};
    a.action = {{"d1", "d2"}, {0, 1}};
    Transition b;
    b.state = {{"q", "bread"}, {}};
    b.action = {{"d5", "d4"}, {1, 0}};
    const std::vector<const Transition*> batch = {&a, &b};

    SUBCASE("targets equal to Q give zero loss and no update") {
        const std::vector<double> y = {q_forward(net.online, slate_embeddings(enc, corpus, a.state, a.action)),
                                       q_forward(net.online, slate_embeddings(enc, corpus, b.state, b.action))};
        const auto before = net.online;
        const auto r = train_step(net, enc, corpus, batch, y, 0.001);
        CHECK(r.loss == 0.0);
        CHECK_FALSE(r.updated);
        CHECK(net.online == before);
    }
    SUBCASE("lr 0 leaves parameters unchanged") {
        const std::vector<double> y = {1.0, -1.0};
        const auto before = net.online;
        train_step(net, enc, corpus, batch, y, 0.0);
        CHECK(net.online == before);
    }
    SUBCASE("loss decreases over 20 steps") {
        const std::vector<double> y = {1.0, -1.0};
        double previous = td_loss(net.online, enc, corpus, batch, y);
        for (int i = 0; i < 20; ++i) {
            const auto r = train_step(net, enc, corpus, batch, y, 0.001);
            CHECK(r.loss == doctest::Approx(previous).epsilon(1e-12));
            const double now = td_loss(net.online, enc, corpus, batch, y);
            CHECK(now < previous);
            previous = now;
        }
        CHECK(net.target == initial_target);
        sync_target(net);
        CHECK(net.target == net.online);
        CHECK(q_forward(net.target, slate_embeddings(enc, corpus, a.state, a.action)) ==
              q_forward(net.online, slate_embeddings(enc, corpus, a.state, a.action)));
        train_step(net, enc, corpus, batch, y, 0.001);
        CHECK_FALSE(net.target == net.online);
    }
    CHECK_THROWS_AS(td_loss(net.online, enc, corpus, {}, {}), InvalidArgument);
}

TEST_CASE("SlateScorer is bit-identical to q_forward") {
    const auto corpus = testutil::small_corpus();
    PairEncoder enc;
    const auto p = qnet_params(11, 3);
    const State s{{"q", "solar power"}, {"battery storage holds solar power"}};
    const SlateAction all{{"d1", "d2", "d3", "d4", "d5"}, {0, 1, 0, 0, 3}};
    SlateScorer scorer(p, slate_embeddings(enc, corpus, s, all));
    const std::vector<std::vector<std::size_t>> orders = {{0, 1, 2}, {4, 3, 2, 1, 0}, {2, 0, 4}};
    for (const auto& o : orders) {
        SlateAction slate;
        for (std::size_t k = 0; k < 3; ++k) {
            slate.doc_ids.push_back(all.doc_ids[o[k]]);
            slate.representatives.push_back(all.representatives[o[k]]);
        }
        CHECK(scorer.evaluate(o) == q_forward(p, slate_embeddings(enc, corpus, s, slate)));
    }
    CHECK(scorer.evaluations() == 3);
    CHECK_THROWS_AS(SlateScorer(p, slate_embeddings(enc, corpus, s, SlateAction{{"d1"}, {0}})), InvalidArgument);
}
