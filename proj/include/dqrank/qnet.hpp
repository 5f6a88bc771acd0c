#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqrank/adam.hpp"
#include "dqrank/corpus.hpp"
#include "dqrank/encoder.hpp"
#include "dqrank/rng.hpp"
#include "dqrank/state.hpp"
#include "dqrank/user_model.hpp"

namespace dqrank {

/// w_e proportional to 1/ln(e+1) for e = 1..E+1, normalized to sum to one.
std::vector<double> ndcg_weights(std::size_t feedback_count);

/// Discounted mix of U over the query and each feedback sentence, query weighted most.
double v_score(const UserModelParams& user, PairEncoder& encoder, const State& state, const std::string& sentence);

/// argmax of v_score over the first min(M, |sentences|) sentences; ties keep the lowest index.
std::size_t select_representative(const UserModelParams& user, PairEncoder& encoder, const State& state,
                                  const Document& doc, std::size_t max_sentences);

/// Fills slate.representatives when they are missing.
void ensure_representatives(SlateAction& slate, const UserModelParams& user, PairEncoder& encoder,
                            const CorpusIndex& corpus, const State& state, std::size_t max_sentences);

/// Discount-weighted combination of encode_pair(f_e, sentence) over the state's texts.
SparseVector weighted_embed(PairEncoder& encoder, const State& state, const std::string& sentence);

/// Weighted embeddings of each slate document's representative sentence.
std::vector<SparseVector> slate_embeddings(PairEncoder& encoder, const CorpusIndex& corpus, const State& state,
                                           const SlateAction& slate);

/// Two-layer value head over the concatenated per-position embeddings:
/// Q = W2 . tanh(W1 x + b1) + b2 with x = [x'_1 .. x'_N].
struct QNetParams {
    Eigen::MatrixXd W1;  // h x (N d)
    Eigen::VectorXd b1;  // h
    Eigen::VectorXd W2;  // h
    double b2 = 0.0;
    std::size_t slate_size = 0;
    std::size_t dim = 0;

    static QNetParams zeros(std::size_t slate_size, std::size_t dim = kEncoderDim, std::size_t hidden = 128);
    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
    static QNetParams init(Rng& rng, std::size_t slate_size, std::size_t dim = kEncoderDim, std::size_t hidden = 128);

    std::size_t hidden() const noexcept { return static_cast<std::size_t>(b1.size()); }
    bool operator==(const QNetParams& o) const {
        return W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2 && slate_size == o.slate_size && dim == o.dim;
    }
};

/// Online parameters, target copy and the Adam state of the online copy.
struct QNet {
    QNetParams online;
    QNetParams target;
    AdamState adam;
};

/// W1 restricted to slate position k, applied to a sparse embedding.
Eigen::VectorXd position_contribution(const QNetParams& params, std::size_t position, const SparseVector& x);

/// Forward pass over N per-position embeddings; sums contributions in position order.
double q_forward(const QNetParams& params, std::span<const SparseVector> embeddings);

/// Q(s, a). Missing representatives are selected with `user` first.
double q_value(const QNetParams& params, const UserModelParams& user, PairEncoder& encoder,
               const CorpusIndex& corpus, const State& state, const SlateAction& action);

/// Mean of Q over the state and its augmentations.
double q_value_augmented(const QNetParams& params, const UserModelParams& user, PairEncoder& encoder,
                         const CorpusIndex& corpus, const State& state, std::span<const State> augmentations,
                         const SlateAction& action);

/// y = r when terminal, otherwise r + gamma * max over candidates of Q(s', a'; target).
double td_target(const QNetParams& target, PairEncoder& encoder, const CorpusIndex& corpus,
                 const Transition& transition, double gamma, std::span<const SlateAction> candidates);

struct TrainStepResult {
    double loss = 0.0;  // before the update
    bool updated = false;
};

/// Mean squared TD error of the augmentation-averaged Q against fixed targets,
/// with the gradient w.r.t. the online parameters when `grad` is non-null.
double td_loss(const QNetParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
               std::span<const Transition* const> batch, std::span<const double> targets,
               QNetParams* grad = nullptr);

/// One Adam step on td_loss. Targets are constants; a zero loss performs no step.
TrainStepResult train_step(QNet& net, PairEncoder& encoder, const CorpusIndex& corpus,
                           std::span<const Transition* const> batch, std::span<const double> targets, double lr);

/// theta^- := theta.
void sync_target(QNet& net);

/// Evaluates Q for arrangements of a fixed candidate list, caching per-position
/// contributions. Values are bit-identical to q_forward on the same slate.
class SlateScorer {
public:
    SlateScorer(const QNetParams& params, std::vector<SparseVector> candidate_embeddings);

    /// Q of the first N candidates of `arrangement` (indices into the candidate list).
    double evaluate(std::span<const std::size_t> arrangement);

    std::size_t evaluations() const noexcept { return evaluations_; }
    std::size_t candidates() const noexcept { return embeddings_.size(); }

private:
    const Eigen::VectorXd& contribution(std::size_t position, std::size_t candidate);

    const QNetParams& params_;
    std::vector<SparseVector> embeddings_;
    std::vector<std::optional<Eigen::VectorXd>> cache_;  // position-major
    std::size_t evaluations_ = 0;
};

}  // namespace dqrank
