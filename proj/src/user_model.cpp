#include "dqrank/user_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

constexpr double kProbabilityFloor = 1e-12;

struct Logits {
    double z0;
    double z1;
};

Logits logits(const UserModelParams& params, const SparseVector& x) {
    Logits z{params.B[0], params.B[1]};
    for (const auto& [i, v] : x.entries) {
        const double t = std::tanh(v);
        z.z0 += params.W(0, i) * t;
        z.z1 += params.W(1, i) * t;
    }
    return z;
}

double selected_probability(const Logits& z) {
    const double p = 1.0 / (1.0 + std::exp(z.z0 - z.z1));
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

/// Adds g0 * dz0 + g1 * dz1 for one encoded pair to `grad`.
void accumulate(UserModelGrad& grad, const SparseVector& x, double g0, double g1) {
    for (const auto& [i, v] : x.entries) {
        const double t = std::tanh(v);
        grad.W(0, i) += g0 * t;
        grad.W(1, i) += g1 * t;
    }
    grad.B[0] += g0;
    grad.B[1] += g1;
}

std::size_t distinct_overlap(const std::set<std::string>& query_terms, const std::string& sentence) {
    std::set<std::string> seen;
    for (auto& token : tokenize(sentence)) {
        if (query_terms.contains(token)) seen.insert(std::move(token));
    }
    return seen.size();
}

const std::string& sentence_text(const CorpusIndex& corpus, const SlateAction& slate, std::size_t j) {
    const auto& doc = corpus.at(slate.doc_ids[j]);
    const auto idx = slate.representatives[j];
    if (idx >= doc.sentences.size()) throw InvalidArgument("representative sentence out of range: " + doc.doc_id);
    return doc.sentences[idx].text;
}

void check_rearrangement_slates(const SlateAction& a_q, const SlateAction& a_u) {
    if (a_q.size() != a_u.size()) throw InvalidArgument("rearrangement: slates differ in length");
    if (!a_q.has_representatives() || !a_u.has_representatives()) {
        throw InvalidArgument("rearrangement: representative sentences not selected");
    }
    std::multiset<std::string> q(a_q.doc_ids.begin(), a_q.doc_ids.end());
    std::multiset<std::string> u(a_u.doc_ids.begin(), a_u.doc_ids.end());
    if (q != u) throw InvalidArgument("rearrangement: slates hold different documents");
}

}  // namespace

UserModelParams UserModelParams::zeros(std::size_t dim) {
    UserModelParams p;
    p.W = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(dim));
    p.B.setZero();
    return p;
}

UserModelParams UserModelParams::init(Rng& rng, std::size_t dim) {
    auto p = zeros(dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index c = 0; c < p.W.cols(); ++c) {
        for (Eigen::Index r = 0; r < 2; ++r) p.W(r, c) = (2.0 * rng.uniform01() - 1.0) * bound;
    }
    return p;
}

UserModelGrad UserModelGrad::zeros_like(const UserModelParams& p) {
    return {Eigen::MatrixXd::Zero(2, p.W.cols()), Eigen::Vector2d::Zero()};
}

double u_score(const UserModelParams& params, const SparseVector& x) {
    const auto z = logits(params, x);
    const double p = selected_probability(z);
    if (!std::isfinite(p)) throw NumericError("u_score: non-finite probability");
    return p;
}

double u_score(const UserModelParams& params, std::string_view left, std::string_view sentence) {
    return u_score(params, encode_pair_sparse(sketch_text(left), sketch_text(sentence)));
}

double u_score(const UserModelParams& params, PairEncoder& encoder, const std::string& left,
               const std::string& sentence) {
    return u_score(params, encoder.encode(left, sentence));
}

DocScore doc_score(const UserModelParams& params, PairEncoder& encoder, const std::string& left,
                   const Document& doc, std::size_t max_sentences) {
    if (max_sentences == 0) throw InvalidArgument("doc_score: M must be >= 1");
    if (doc.sentences.empty()) throw InvalidArgument("doc_score: document has no sentences: " + doc.doc_id);
    const std::size_t limit = std::min(max_sentences, doc.sentences.size());
    DocScore best{-1.0, 0};
    for (std::size_t i = 0; i < limit; ++i) {
        const double p = u_score(params, encoder, left, doc.sentences[i].text);
        if (p > best.probability) best = {p, i};
    }
    return best;
}

std::vector<PretrainPair> generate_pretrain_pairs(const CorpusIndex& corpus, const QrelTable& qrels,
                                                  const std::vector<Query>& queries, std::uint64_t seed) {
    if (qrels.empty()) throw InvalidArgument("generate_pretrain_pairs: empty qrels");
    Rng rng(seed);
    std::vector<PretrainPair> pairs;
    std::size_t positives = 0;
    for (const auto& query : queries) {
        const auto terms_list = tokenize(query.text);
        const std::set<std::string> terms(terms_list.begin(), terms_list.end());

        std::vector<PretrainPair> query_pos;
        for (const auto& [doc_id, grade] : qrels.relevant(query.query_id)) {
            const auto* doc = corpus.find(doc_id);
            if (doc == nullptr) continue;
            std::size_t best = 0;
            std::size_t best_overlap = 0;
            for (const auto& s : doc->sentences) {
                const auto overlap = distinct_overlap(terms, s.text);
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    best = s.index;
                }
            }
            query_pos.push_back({query.text, doc->sentences[best].text, Label::Selected});
        }
        if (query_pos.empty()) continue;

        std::set<std::size_t> sharing;
        for (const auto& term : terms) {
            for (const auto& p : corpus.postings(term)) sharing.insert(p.doc);
        }
        std::vector<std::size_t> hard;
        std::vector<std::size_t> all;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (qrels.grade(query.query_id, corpus.documents()[i].doc_id) != 0) continue;
            all.push_back(i);
            if (sharing.contains(i)) hard.push_back(i);
        }
        const auto& negatives = hard.empty() ? all : hard;

        for (auto& pos : query_pos) {
            pairs.push_back(std::move(pos));
            ++positives;
            if (negatives.empty()) continue;
            const auto& doc = corpus.documents()[negatives[rng.uniform_index(negatives.size())]];
            const auto& s = doc.sentences[rng.uniform_index(doc.sentences.size())];
            pairs.push_back({query.text, s.text, Label::NotSelected});
        }
    }
    if (positives == 0) throw InvalidArgument("no positives");
    return pairs;
}

double cross_entropy_loss(const UserModelParams& params, PairEncoder& encoder,
                          const std::vector<PretrainPair>& pairs, UserModelGrad* grad) {
    if (pairs.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    double loss = 0.0;
    for (const auto& pair : pairs) {
        const auto x = encoder.encode(pair.left_text, pair.sentence);
        const auto z = logits(params, x);
        const double zmax = std::max(z.z0, z.z1);
        const double lse = zmax + std::log(std::exp(z.z0 - zmax) + std::exp(z.z1 - zmax));
        const bool selected = pair.label == Label::Selected;
        loss += lse - (selected ? z.z1 : z.z0);
        if (grad != nullptr) {
            const double p0 = std::exp(z.z0 - lse);
            const double p1 = std::exp(z.z1 - lse);
            accumulate(*grad, x, (p0 - (selected ? 0.0 : 1.0)) * inv_n, (p1 - (selected ? 1.0 : 0.0)) * inv_n);
        }
    }
    return loss * inv_n;
}

PretrainReport pretrain(UserModel& model, PairEncoder& encoder, const std::vector<PretrainPair>& pairs,
                        const PretrainOptions& options) {
    if (pairs.empty()) throw InvalidArgument("pretrain: no training pairs");
    if (options.batch == 0) throw InvalidArgument("pretrain: batch must be >= 1");
    Rng rng(options.seed);
    PretrainReport report;
    report.initial_loss = cross_entropy_loss(model.params, encoder, pairs);
    if (!std::isfinite(report.initial_loss)) throw NumericError("pretrain: non-finite initial loss");

    AdamConfig adam;
    adam.lr = options.lr;
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<PretrainPair> batch;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += options.batch) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + options.batch); ++i) {
                batch.push_back(pairs[order[i]]);
            }
            auto grad = UserModelGrad::zeros_like(model.params);
            const double loss = cross_entropy_loss(model.params, encoder, batch, &grad);
            if (!std::isfinite(loss)) {
                throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                   std::to_string(start));
            }
            const ParamRef refs[] = {
                {{model.params.W.data(), static_cast<std::size_t>(model.params.W.size())},
                 {grad.W.data(), static_cast<std::size_t>(grad.W.size())}},
                {{model.params.B.data(), 2}, {grad.B.data(), 2}},
            };
            adam_step(model.adam, refs, adam);
        }
    }

    report.final_loss = cross_entropy_loss(model.params, encoder, pairs);
    if (!std::isfinite(report.final_loss)) throw NumericError("pretrain: non-finite final loss");
    std::size_t correct = 0;
    for (const auto& pair : pairs) {
        const bool predicted = u_score(model.params, encoder, pair.left_text, pair.sentence) > 0.5;
        if (predicted == (pair.label == Label::Selected)) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
    return report;
}

std::vector<std::vector<double>> rearrangement_targets(const UserModelParams& params, PairEncoder& encoder,
                                                       const CorpusIndex& corpus, const State& state,
                                                       const SlateAction& a_u) {
    std::vector<std::vector<double>> targets;
    for (const auto& f : state.texts()) {
        auto& row = targets.emplace_back();
        for (std::size_t j = 0; j < a_u.size(); ++j) {
            row.push_back(u_score(params, encoder, f, sentence_text(corpus, a_u, j)));
        }
    }
    return targets;
}

double rearrangement_loss(const UserModelParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
                          const State& state, const SlateAction& a_q,
                          const std::vector<std::vector<double>>& targets, UserModelGrad* grad) {
    const auto texts = state.texts();
    if (targets.size() != texts.size()) throw InvalidArgument("rearrangement: target rows do not match state");
    const std::size_t n = texts.size() * a_q.size();
    if (n == 0) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t f = 0; f < texts.size(); ++f) {
        if (targets[f].size() != a_q.size()) throw InvalidArgument("rearrangement: target width mismatch");
        for (std::size_t j = 0; j < a_q.size(); ++j) {
            const auto x = encoder.encode(texts[f], sentence_text(corpus, a_q, j));
            const double u = selected_probability(logits(params, x));
            const double r = u - targets[f][j];
            loss += r * r;
            if (grad != nullptr && r != 0.0) {
                const double g = 2.0 * r * inv_n * u * (1.0 - u);
                accumulate(*grad, x, -g, g);
            }
        }
    }
    return loss * inv_n;
}

double rearrangement_update(UserModel& model, PairEncoder& encoder, const CorpusIndex& corpus,
                            const State& state, const SlateAction& a_q, const SlateAction& a_u, double lr) {
    check_rearrangement_slates(a_q, a_u);
    const auto targets = rearrangement_targets(model.params, encoder, corpus, state, a_u);
    auto grad = UserModelGrad::zeros_like(model.params);
    const double loss = rearrangement_loss(model.params, encoder, corpus, state, a_q, targets, &grad);
    if (!std::isfinite(loss)) throw NumericError("rearrangement_update: non-finite loss");
    if (loss == 0.0) return loss;
    AdamConfig adam;
    adam.lr = lr;
    const ParamRef refs[] = {
        {{model.params.W.data(), static_cast<std::size_t>(model.params.W.size())},
         {grad.W.data(), static_cast<std::size_t>(grad.W.size())}},
        {{model.params.B.data(), 2}, {grad.B.data(), 2}},
    };
    adam_step(model.adam, refs, adam);
    return loss;
}

double selection_gap(const UserModelParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
                     const std::string& left, const SlateAction& a_q, const SlateAction& a_u) {
    check_rearrangement_slates(a_q, a_u);
    std::vector<double> q;
    std::vector<double> u;
    for (std::size_t j = 0; j < a_q.size(); ++j) {
        q.push_back(u_score(params, encoder, left, sentence_text(corpus, a_q, j)));
        u.push_back(u_score(params, encoder, left, sentence_text(corpus, a_u, j)));
    }
    std::sort(q.begin(), q.end());
    std::sort(u.begin(), u.end());
    double sq = 0.0;
    double su = 0.0;
    for (double v : q) sq += v;
    for (double v : u) su += v;
    return (sq - su) / static_cast<double>(q.size());
}

}  // namespace dqrank
