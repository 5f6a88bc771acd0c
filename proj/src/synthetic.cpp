#include "dqrank/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "dqrank/error.hpp"
#include "dqrank/metrics.hpp"
#include "dqrank/rng.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

constexpr std::size_t kCoreWords = 8;
constexpr std::size_t kAnswerWords = 6;
constexpr std::size_t kFillerWords = 160;
constexpr std::size_t kSlate = 10;
const std::vector<std::string> kStopwords = {"the", "of", "a", "in", "and", "to", "is", "for", "on", "with"};

class WordMaker {
public:
    explicit WordMaker(Rng& rng) : rng_(rng) {
        used_.insert(kStopwords.begin(), kStopwords.end());
    }

    std::string make() {
        static const std::string consonants = "bcdfghjklmnprstvz";
        static const std::string vowels = "aeiou";
        for (;;) {
            std::string w;
            const std::size_t syllables = 2 + rng_.uniform_index(2);
            for (std::size_t i = 0; i < syllables; ++i) {
                w += consonants[rng_.uniform_index(consonants.size())];
                w += vowels[rng_.uniform_index(vowels.size())];
            }
            if (rng_.uniform_index(2) == 0) w += consonants[rng_.uniform_index(consonants.size())];
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> make(std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(make());
        return out;
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

struct Topic {
    std::vector<std::string> core;
    std::vector<std::string> answer;
    std::map<std::string, std::string> synonym;
};

class Builder {
public:
    Builder(Rng& rng, const std::vector<std::string>& filler) : rng_(rng), filler_(filler) {}

    std::vector<std::string> pick(const std::vector<std::string>& from, std::size_t n) {
        std::vector<std::string> pool = from;
        rng_.shuffle(std::span(pool));
        pool.resize(std::min(n, pool.size()));
        return pool;
    }

    /// Content words padded with filler and stopwords to 7..10 tokens, shuffled.
    std::string sentence(std::vector<std::string> words) {
        const std::size_t length = std::max<std::size_t>(words.size() + 2, 7 + rng_.uniform_index(4));
        while (words.size() < length) {
            if (rng_.uniform_index(3) == 0) {
                words.push_back(kStopwords[rng_.uniform_index(kStopwords.size())]);
            } else {
                words.push_back(filler_[rng_.uniform_index(filler_.size())]);
            }
        }
        rng_.shuffle(std::span(words));
        std::string s = join(words, " ");
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
        return s + ".";
    }

    std::size_t count(std::size_t lo, std::size_t hi) { return lo + rng_.uniform_index(hi - lo + 1); }

    Rng& rng() { return rng_; }

private:
    Rng& rng_;
    const std::vector<std::string>& filler_;
};

}  // namespace

SyntheticDataset generate_synthetic_corpus(std::uint64_t seed, std::size_t n_topics, std::size_t docs_per_topic,
                                           std::size_t queries_per_topic) {
    if (n_topics == 0 || docs_per_topic == 0 || queries_per_topic == 0) {
        throw InvalidArgument("synthetic corpus sizes must be >= 1");
    }
    Rng rng(seed);
    WordMaker words(rng);
    const auto filler = words.make(kFillerWords);
    std::vector<Topic> topics(n_topics);
    SyntheticDataset data;
    for (const auto& s : kStopwords) data.lexicon.add_stopword(s);
    for (auto& t : topics) {
        t.core = words.make(kCoreWords);
        t.answer = words.make(kAnswerWords);
        for (const auto& c : t.core) {
            t.synonym[c] = words.make();
            data.lexicon.add(c, {t.synonym[c]});
        }
    }

    Builder b(rng, filler);
    // Documents write a core word as its synonym one time in four.
    auto vary = [&b](const Topic& topic, std::vector<std::string> content) {
        for (auto& w : content) {
            if (b.rng().uniform_index(4) == 0) w = topic.synonym.at(w);
        }
        return content;
    };
    // Category sizes, filled in order and clamped to the topic's documents.
    std::size_t left = docs_per_topic;
    auto take = [&left](std::size_t want) {
        const std::size_t n = std::min(std::max<std::size_t>(want, 1), left);
        left -= n;
        return n;
    };
    const std::size_t n_g2 = take(docs_per_topic * 2 / 15);
    const std::size_t n_g1 = take(docs_per_topic / 5);
    const std::size_t n_distractor = take(docs_per_topic / 4);
    const std::size_t n_other = left;

    std::vector<std::vector<std::pair<std::string, int>>> judged(n_topics);
    for (std::size_t ti = 0; ti < n_topics; ++ti) {
        const Topic& topic = topics[ti];
        const Topic& neighbour = topics[(ti + 1) % n_topics];
        std::size_t serial = 0;
        auto add_doc = [&](std::vector<std::string> sentences, int grade) {
            char id[64];
            std::snprintf(id, sizeof id, "t%02zu_d%03zu", ti, serial++);
            data.documents.push_back({id, std::move(sentences), {}});
            judged[ti].emplace_back(id, grade);
        };
        auto answer_doc = [&](std::size_t core_n, std::size_t answer_n, int grade) {
            const std::size_t n = b.count(5, 8);
            const std::size_t at = b.rng().uniform_index(n);
            std::vector<std::string> sentences;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == at) {
                    auto content = vary(topic, b.pick(topic.core, core_n));
                    for (auto& w : b.pick(topic.answer, answer_n)) content.push_back(std::move(w));
                    sentences.push_back(b.sentence(std::move(content)));
                } else if (grade == 2 && core_n > 1 && b.rng().uniform_index(2) == 0) {
                    sentences.push_back(b.sentence(vary(topic, b.pick(topic.core, 1))));
                } else {
                    sentences.push_back(b.sentence({}));
                }
            }
            add_doc(std::move(sentences), grade);
        };
        for (std::size_t i = 0; i < n_g2; ++i) answer_doc(3, 3, 2);
        for (std::size_t i = 0; i < n_g1; ++i) answer_doc(1, 2, 1);
        for (std::size_t i = 0; i < n_distractor; ++i) {
            std::vector<std::string> sentences;
            const std::size_t n = b.count(5, 8);
            for (std::size_t k = 0; k < n; ++k) sentences.push_back(b.sentence(vary(topic, b.pick(topic.core, b.count(2, 3)))));
            add_doc(std::move(sentences), 0);
        }
        for (std::size_t i = 0; i < n_other; ++i) {
            std::vector<std::string> sentences;
            const std::size_t n = b.count(5, 8);
            for (std::size_t k = 0; k < n; ++k) {
                sentences.push_back(b.sentence(vary(neighbour, b.pick(neighbour.core, b.count(0, 2)))));
            }
            add_doc(std::move(sentences), -1);
        }
    }

    for (std::size_t ti = 0; ti < n_topics; ++ti) {
        for (std::size_t qi = 0; qi < queries_per_topic; ++qi) {
            char id[64];
            std::snprintf(id, sizeof id, "t%02zu_q%02zu", ti, qi);
            auto terms = topics[ti].core;
            terms.push_back(words.make());
            data.queries.push_back({id, join(terms, " ")});
            for (const auto& [doc, grade] : judged[ti]) {
                if (grade >= 0) data.qrels.set(id, doc, grade);
            }
        }
    }

    // Ranking log from a BM25 pass over the generated collection.
    const auto index = CorpusIndex::build(data.documents);
    for (const auto& q : data.queries) {
        const auto hits = bm25_retrieve(index, q, 2 * kSlate);
        if (hits.size() < kSlate) continue;
        std::vector<std::string> pool;
        for (const auto& h : hits) pool.push_back(h.doc_id);
        std::vector<std::string> top(pool.begin(), pool.begin() + kSlate);
        data.log.add(q.query_id, {top, labeled_reward(top, data.qrels, q.query_id)});
        for (int r = 0; r < 2; ++r) {
            auto shuffled = pool;
            rng.shuffle(std::span(shuffled));
            shuffled.resize(kSlate);
            data.log.add(q.query_id, {std::move(shuffled), std::nullopt});
        }
    }
    return data;
}

void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&dir](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw Error("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("corpus.jsonl");
        for (const auto& d : data.documents) out << nlohmann::json{{"doc_id", d.doc_id}, {"sentences", d.sentences}}.dump() << '\n';
    }
    {
        auto out = open("queries.tsv");
        for (const auto& q : data.queries) out << q.query_id << '\t' << q.text << '\n';
    }
    {
        auto out = open("qrels.tsv");
        for (const auto& [qid, docs] : data.qrels.rows()) {
            for (const auto& [doc, grade] : docs) out << qid << "\t0\t" << doc << '\t' << grade << '\n';
        }
    }
    data.log.save(dir / "wq.jsonl");
    {
        auto out = open("lexicon.tsv");
        for (const auto& [token, syns] : data.lexicon.entries()) out << token << '\t' << join(syns, ",") << '\n';
    }
    {
        auto out = open("stopwords.txt");
        for (const auto& s : data.lexicon.stopwords()) out << s << '\n';
    }
}

}  // namespace dqrank
