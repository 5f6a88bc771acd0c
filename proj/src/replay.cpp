#include "dqrank/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dqrank/error.hpp"

namespace dqrank {

namespace {

double float_cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw InvalidArgument("feedback pool: embedding length mismatch");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace

State append_feedback(State state, const std::string& sentence, std::size_t max_feedback) {
    if (max_feedback == 0) return state;
    if (std::find(state.feedback.begin(), state.feedback.end(), sentence) != state.feedback.end()) return state;
    if (state.feedback.size() >= max_feedback) {
        state.feedback.erase(state.feedback.begin(),
                             state.feedback.begin() + static_cast<std::ptrdiff_t>(state.feedback.size() - max_feedback + 1));
    }
    state.feedback.push_back(sentence);
    return state;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidArgument("replay memory capacity must be >= 1");
}

void ReplayMemory::push(Transition transition) {
    if (!std::isfinite(transition.reward)) throw InvalidArgument("transition reward must be finite");
    if (items_.size() < capacity_) {
        items_.push_back(std::move(transition));
        return;
    }
    items_[head_] = std::move(transition);
    head_ = (head_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayMemory::sample(Rng& rng, std::size_t batch) const {
    if (items_.empty()) throw InvalidArgument("cannot sample from an empty replay memory");
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(&items_[rng.uniform_index(items_.size())]);
    return out;
}

const Transition& ReplayMemory::at(std::size_t i) const {
    if (i >= items_.size()) throw InvalidArgument("replay index out of range");
    return items_[(head_ + i) % items_.size()];
}

std::vector<float> pool_embedding(const std::string& text) {
    const auto v = encode_single(text);
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    return out;
}

bool FeedbackPool::push_final_state(const Query& query, const State& state, double reward) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.query_id == query.query_id; });
    if (it != entries_.end() && !(reward > it->reward)) return false;
    Entry entry{query.query_id, query.text, pool_embedding(query.text), state, reward};
    if (it == entries_.end()) {
        entries_.push_back(std::move(entry));
    } else {
        *it = std::move(entry);
    }
    return true;
}

std::optional<FeedbackPool::Match> FeedbackPool::best_match(const Query& query, double psi) const {
    if (psi < 0.0 || psi > 1.0) throw InvalidArgument("state retrieval threshold must be in [0, 1]");
    if (entries_.empty()) return std::nullopt;
    const auto probe = pool_embedding(query.text);
    std::optional<Match> best;
    for (const auto& entry : entries_) {
        const double c = float_cosine(probe, entry.embedding);
        if (!best || c > best->cosine) best = Match{&entry, c};
    }
    if (best && best->cosine > psi) return best;
    return std::nullopt;
}

std::optional<State> FeedbackPool::retrieve_state(const Query& query, double psi) const {
    const auto match = best_match(query, psi);
    if (!match) return std::nullopt;
    return match->entry->state;
}

const FeedbackPool::Entry* FeedbackPool::find(const std::string& query_id) const {
    for (const auto& e : entries_) {
        if (e.query_id == query_id) return &e;
    }
    return nullptr;
}

void FeedbackPool::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& e : entries_) {
        const nlohmann::json obj{{"query_id", e.query_id},
                                 {"query_text", e.query_text},
                                 {"embedding", e.embedding},
                                 {"feedback", e.state.feedback},
                                 {"reward", e.reward}};
        out << obj.dump() << '\n';
    }
}

FeedbackPool FeedbackPool::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    FeedbackPool pool;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            Entry e;
            e.query_id = obj.at("query_id").get<std::string>();
            e.query_text = obj.at("query_text").get<std::string>();
            e.embedding = obj.at("embedding").get<std::vector<float>>();
            e.state.query = {e.query_id, e.query_text};
            e.state.feedback = obj.at("feedback").get<std::vector<std::string>>();
            e.reward = obj.at("reward").get<double>();
            if (e.embedding.size() != kEncoderDim) throw ParseError(path.string(), line_no, "embedding length mismatch");
            if (pool.find(e.query_id) != nullptr) throw ParseError(path.string(), line_no, "duplicate query_id " + e.query_id);
            pool.entries_.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(path.string(), line_no, std::string("malformed pool record: ") + ex.what());
        }
    }
    return pool;
}

}  // namespace dqrank
