#include "dqrank/qnet.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "dqrank/error.hpp"

namespace dqrank {

namespace {

Eigen::VectorXd tanh_of(const Eigen::VectorXd& v) {
    return v.unaryExpr([](double x) { return std::tanh(x); });
}

void check_slate_length(const QNetParams& params, std::size_t n) {
    if (n != params.slate_size) {
        throw InvalidArgument("wrong slate length: expected " + std::to_string(params.slate_size) + ", got " +
                              std::to_string(n));
    }
}

}  // namespace

std::vector<double> ndcg_weights(std::size_t feedback_count) {
    std::vector<double> w(feedback_count + 1);
    double total = 0.0;
    for (std::size_t e = 1; e <= feedback_count + 1; ++e) {
        w[e - 1] = 1.0 / std::log(static_cast<double>(e) + 1.0);
        total += w[e - 1];
    }
    for (double& x : w) x /= total;
    return w;
}

double v_score(const UserModelParams& user, PairEncoder& encoder, const State& state, const std::string& sentence) {
    const auto texts = state.texts();
    const auto w = ndcg_weights(texts.size() - 1);
    double v = 0.0;
    for (std::size_t e = 0; e < texts.size(); ++e) v += w[e] * u_score(user, encoder, texts[e], sentence);
    return v;
}

std::size_t select_representative(const UserModelParams& user, PairEncoder& encoder, const State& state,
                                  const Document& doc, std::size_t max_sentences) {
    if (doc.sentences.empty()) throw InvalidArgument("select_representative: empty document " + doc.doc_id);
    if (max_sentences == 0) throw InvalidArgument("select_representative: M must be >= 1");
    if (state.feedback.empty()) return doc_score(user, encoder, state.query.text, doc, max_sentences).sentence_index;
    const std::size_t limit = std::min(max_sentences, doc.sentences.size());
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < limit; ++i) {
        const double v = v_score(user, encoder, state, doc.sentences[i].text);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return best;
}

void ensure_representatives(SlateAction& slate, const UserModelParams& user, PairEncoder& encoder,
                            const CorpusIndex& corpus, const State& state, std::size_t max_sentences) {
    if (slate.has_representatives()) return;
    slate.representatives.clear();
    for (const auto& id : slate.doc_ids) {
        slate.representatives.push_back(select_representative(user, encoder, state, corpus.at(id), max_sentences));
    }
}

SparseVector weighted_embed(PairEncoder& encoder, const State& state, const std::string& sentence) {
    const auto texts = state.texts();
    const auto w = ndcg_weights(texts.size() - 1);
    std::array<double, kEncoderDim> dense{};
    std::array<bool, kEncoderDim> touched{};
    for (std::size_t e = 0; e < texts.size(); ++e) {
        for (const auto& [i, v] : encoder.encode(texts[e], sentence).entries) {
            dense[i] += w[e] * v;
            touched[i] = true;
        }
    }
    SparseVector out;
    for (std::uint32_t i = 0; i < kEncoderDim; ++i) {
        if (touched[i]) out.entries.emplace_back(i, dense[i]);
    }
    return out;
}

std::vector<SparseVector> slate_embeddings(PairEncoder& encoder, const CorpusIndex& corpus, const State& state,
                                           const SlateAction& slate) {
    if (!slate.has_representatives()) throw InvalidArgument("slate_embeddings: representatives not selected");
    std::vector<SparseVector> out;
    out.reserve(slate.size());
    for (std::size_t k = 0; k < slate.size(); ++k) {
        const auto& doc = corpus.at(slate.doc_ids[k]);
        const auto idx = slate.representatives[k];
        if (idx >= doc.sentences.size()) throw InvalidArgument("representative out of range for " + doc.doc_id);
        out.push_back(weighted_embed(encoder, state, doc.sentences[idx].text));
    }
    return out;
}

QNetParams QNetParams::zeros(std::size_t slate_size, std::size_t dim, std::size_t hidden) {
    QNetParams p;
    const auto h = static_cast<Eigen::Index>(hidden);
    p.W1 = Eigen::MatrixXd::Zero(h, static_cast<Eigen::Index>(slate_size * dim));
    p.b1 = Eigen::VectorXd::Zero(h);
    p.W2 = Eigen::VectorXd::Zero(h);
    p.b2 = 0.0;
    p.slate_size = slate_size;
    p.dim = dim;
    return p;
}

QNetParams QNetParams::init(Rng& rng, std::size_t slate_size, std::size_t dim, std::size_t hidden) {
    auto p = zeros(slate_size, dim, hidden);
    const auto uniform = [&rng](double bound) { return (2.0 * rng.uniform01() - 1.0) * bound; };
    const double b_in = 1.0 / std::sqrt(static_cast<double>(slate_size * dim));
    const double b_hidden = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Eigen::Index c = 0; c < p.W1.cols(); ++c) {
        for (Eigen::Index r = 0; r < p.W1.rows(); ++r) p.W1(r, c) = uniform(b_in);
    }
    for (Eigen::Index r = 0; r < p.b1.size(); ++r) p.b1[r] = uniform(b_in);
    for (Eigen::Index r = 0; r < p.W2.size(); ++r) p.W2[r] = uniform(b_hidden);
    p.b2 = uniform(b_hidden);
    return p;
}

Eigen::VectorXd position_contribution(const QNetParams& params, std::size_t position, const SparseVector& x) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(params.b1.size());
    const auto offset = static_cast<Eigen::Index>(position * params.dim);
    for (const auto& [i, v] : x.entries) h.noalias() += v * params.W1.col(offset + i);
    return h;
}

double q_forward(const QNetParams& params, std::span<const SparseVector> embeddings) {
    check_slate_length(params, embeddings.size());
    Eigen::VectorXd pre = params.b1;
    for (std::size_t k = 0; k < embeddings.size(); ++k) pre += position_contribution(params, k, embeddings[k]);
    return params.W2.dot(tanh_of(pre)) + params.b2;
}

double q_value(const QNetParams& params, const UserModelParams& user, PairEncoder& encoder,
               const CorpusIndex& corpus, const State& state, const SlateAction& action) {
    check_slate_length(params, action.size());
    if (action.has_representatives()) return q_forward(params, slate_embeddings(encoder, corpus, state, action));
    SlateAction filled = action;
    ensure_representatives(filled, user, encoder, corpus, state, std::numeric_limits<std::size_t>::max());
    return q_forward(params, slate_embeddings(encoder, corpus, state, filled));
}

double q_value_augmented(const QNetParams& params, const UserModelParams& user, PairEncoder& encoder,
                         const CorpusIndex& corpus, const State& state, std::span<const State> augmentations,
                         const SlateAction& action) {
    double total = q_value(params, user, encoder, corpus, state, action);
    if (augmentations.empty()) return total;
    for (const auto& aug : augmentations) total += q_value(params, user, encoder, corpus, aug, action);
    return total / static_cast<double>(augmentations.size() + 1);
}

double td_target(const QNetParams& target, PairEncoder& encoder, const CorpusIndex& corpus,
                 const Transition& transition, double gamma, std::span<const SlateAction> candidates) {
    if (gamma < 0.0 || gamma > 1.0) throw InvalidArgument("td_target: gamma must be in [0, 1]");
    if (transition.terminal) return transition.reward;
    if (candidates.empty()) throw InvalidArgument("td_target: no candidate actions for a non-terminal transition");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& candidate : candidates) {
        best = std::max(best, q_forward(target, slate_embeddings(encoder, corpus, transition.next_state, candidate)));
    }
    return transition.reward + gamma * best;
}

double td_loss(const QNetParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
               std::span<const Transition* const> batch, std::span<const double> targets, QNetParams* grad) {
    if (batch.empty()) throw InvalidArgument("td_loss: empty minibatch");
    if (targets.size() != batch.size()) throw InvalidArgument("td_loss: one target per transition required");
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    struct Variant {
        std::vector<SparseVector> embeddings;
        Eigen::VectorXd activation;
        double q;
    };
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = *batch[i];
        check_slate_length(params, t.action.size());
        std::vector<Variant> variants;
        variants.reserve(t.augmentations.size() + 1);
        double q_sum = 0.0;
        auto add_variant = [&](const State& s) {
            Variant v;
            v.embeddings = slate_embeddings(encoder, corpus, s, t.action);
            Eigen::VectorXd pre = params.b1;
            for (std::size_t k = 0; k < v.embeddings.size(); ++k) {
                pre += position_contribution(params, k, v.embeddings[k]);
            }
            v.activation = tanh_of(pre);
            v.q = params.W2.dot(v.activation) + params.b2;
            q_sum += v.q;
            variants.push_back(std::move(v));
        };
        add_variant(t.state);
        for (const auto& aug : t.augmentations) add_variant(aug);
        const double q_avg = variants.size() == 1 ? q_sum : q_sum / static_cast<double>(variants.size());
        const double residual = targets[i] - q_avg;
        loss += residual * residual;

        if (grad == nullptr || residual == 0.0) continue;
        const double g = -2.0 * residual * inv_b / static_cast<double>(variants.size());
        for (const auto& v : variants) {
            grad->W2 += g * v.activation;
            grad->b2 += g;
            const Eigen::VectorXd dpre =
                g * params.W2.cwiseProduct((1.0 - v.activation.array().square()).matrix());
            grad->b1 += dpre;
            for (std::size_t k = 0; k < v.embeddings.size(); ++k) {
                const auto offset = static_cast<Eigen::Index>(k * params.dim);
                for (const auto& [j, x] : v.embeddings[k].entries) grad->W1.col(offset + j) += x * dpre;
            }
        }
    }
    return loss * inv_b;
}

TrainStepResult train_step(QNet& net, PairEncoder& encoder, const CorpusIndex& corpus,
                           std::span<const Transition* const> batch, std::span<const double> targets, double lr) {
    auto& p = net.online;
    auto grad = QNetParams::zeros(p.slate_size, p.dim, p.hidden());
    TrainStepResult result;
    result.loss = td_loss(p, encoder, corpus, batch, targets, &grad);
    if (!std::isfinite(result.loss)) throw NumericError("train_step: non-finite TD loss");
    if (result.loss == 0.0) return result;

    AdamConfig adam;
    adam.lr = lr;
    const ParamRef refs[] = {
        {{p.W1.data(), static_cast<std::size_t>(p.W1.size())}, {grad.W1.data(), static_cast<std::size_t>(grad.W1.size())}},
        {{p.b1.data(), static_cast<std::size_t>(p.b1.size())}, {grad.b1.data(), static_cast<std::size_t>(grad.b1.size())}},
        {{p.W2.data(), static_cast<std::size_t>(p.W2.size())}, {grad.W2.data(), static_cast<std::size_t>(grad.W2.size())}},
        {{&p.b2, 1}, {&grad.b2, 1}},
    };
    adam_step(net.adam, refs, adam);
    result.updated = true;
    return result;
}

void sync_target(QNet& net) { net.target = net.online; }

SlateScorer::SlateScorer(const QNetParams& params, std::vector<SparseVector> candidate_embeddings)
    : params_(params),
      embeddings_(std::move(candidate_embeddings)),
      cache_(params.slate_size * embeddings_.size()) {
    if (embeddings_.size() < params.slate_size) {
        throw InvalidArgument("SlateScorer: fewer candidates than the slate size");
    }
}

const Eigen::VectorXd& SlateScorer::contribution(std::size_t position, std::size_t candidate) {
    auto& slot = cache_[position * embeddings_.size() + candidate];
    if (!slot) slot = position_contribution(params_, position, embeddings_[candidate]);
    return *slot;
}

double SlateScorer::evaluate(std::span<const std::size_t> arrangement) {
    if (arrangement.size() < params_.slate_size) throw InvalidArgument("SlateScorer: arrangement too short");
    ++evaluations_;
    Eigen::VectorXd pre = params_.b1;
    for (std::size_t k = 0; k < params_.slate_size; ++k) pre += contribution(k, arrangement[k]);
    return params_.W2.dot(tanh_of(pre)) + params_.b2;
}

}  // namespace dqrank
