#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dqrank/adam.hpp"
#include "dqrank/corpus.hpp"
#include "dqrank/encoder.hpp"
#include "dqrank/rng.hpp"
#include "dqrank/state.hpp"

namespace dqrank {

/// Selection head U: softmax(W tanh(x) + B) over {NotSelected, Selected}.
struct UserModelParams {
    Eigen::MatrixXd W;  // 2 x d
    Eigen::Vector2d B = Eigen::Vector2d::Zero();

    static UserModelParams zeros(std::size_t dim = kEncoderDim);
    /// Uniform in [-1/sqrt(d), 1/sqrt(d)], bias zero.
    static UserModelParams init(Rng& rng, std::size_t dim = kEncoderDim);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(W.cols()); }
    bool operator==(const UserModelParams& other) const { return W == other.W && B == other.B; }
};

struct UserModelGrad {
    Eigen::MatrixXd W;
    Eigen::Vector2d B;

    static UserModelGrad zeros_like(const UserModelParams& p);
};

/// Parameters together with their optimizer state.
struct UserModel {
    UserModelParams params;
    AdamState adam;
};

/// P(Selected) for an already encoded pair, clamped to the open interval (0, 1).
double u_score(const UserModelParams& params, const SparseVector& x);
double u_score(const UserModelParams& params, std::string_view left, std::string_view sentence);
double u_score(const UserModelParams& params, PairEncoder& encoder, const std::string& left,
               const std::string& sentence);

struct DocScore {
    double probability = 0.0;
    std::size_t sentence_index = 0;
};

/// Max of u_score over the first min(M, |sentences|) sentences; ties keep the lowest index.
DocScore doc_score(const UserModelParams& params, PairEncoder& encoder, const std::string& left,
                   const Document& doc, std::size_t max_sentences);

enum class Label : int { NotSelected = 0, Selected = 1 };

struct PretrainPair {
    std::string left_text;
    std::string sentence;
    Label label = Label::NotSelected;

    bool operator==(const PretrainPair&) const = default;
};

/// For every (query, relevant doc): the sentence with the largest token overlap
/// with the query is Selected. For each positive one NotSelected sentence is
/// drawn from a grade-0 doc, preferring grade-0 docs that share a query term.
std::vector<PretrainPair> generate_pretrain_pairs(const CorpusIndex& corpus, const QrelTable& qrels,
                                                  const std::vector<Query>& queries, std::uint64_t seed);

/// Mean cross-entropy over `pairs`; accumulates the gradient when `grad` is non-null.
double cross_entropy_loss(const UserModelParams& params, PairEncoder& encoder,
                          const std::vector<PretrainPair>& pairs, UserModelGrad* grad = nullptr);

struct PretrainOptions {
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
};

struct PretrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double accuracy = 0.0;
};

/// Minibatch Adam on the cross-entropy loss.
PretrainReport pretrain(UserModel& model, PairEncoder& encoder, const std::vector<PretrainPair>& pairs,
                        const PretrainOptions& options);

/// Frozen targets y[f][j] = U(f, d_{U,j}) for every left text f of the state.
std::vector<std::vector<double>> rearrangement_targets(const UserModelParams& params, PairEncoder& encoder,
                                                       const CorpusIndex& corpus, const State& state,
                                                       const SlateAction& a_u);

/// Mean over f and j of (U(f, d_{Q,j}) - y[f][j])^2, with optional gradient.
double rearrangement_loss(const UserModelParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
                          const State& state, const SlateAction& a_q,
                          const std::vector<std::vector<double>>& targets, UserModelGrad* grad = nullptr);

/// One Adam step pulling U's scores of the Q-ordered slate toward the scores of
/// the U-ordered slate at the same positions. Returns the pre-step loss; a zero
/// loss performs no step.
double rearrangement_update(UserModel& model, PairEncoder& encoder, const CorpusIndex& corpus,
                            const State& state, const SlateAction& a_q, const SlateAction& a_u, double lr);

/// Mean over positions of U(f, d_{Q,j}) - U(f, d_{U,j}) for one left text f,
/// summed in a canonical (sorted) order so equal multisets cancel exactly.
double selection_gap(const UserModelParams& params, PairEncoder& encoder, const CorpusIndex& corpus,
                     const std::string& left, const SlateAction& a_q, const SlateAction& a_u);

}  // namespace dqrank
