#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dqrank/augment.hpp"
#include "dqrank/corpus.hpp"
#include "dqrank/policy.hpp"

namespace dqrank {

/// A generated topical collection with judgements, a ranking log and a lexicon.
///
/// Each topic has core words shared by its queries, answer words that only its
/// relevant documents use, and one synonym per core word. Per topic:
/// grade-2 documents carry an answer sentence (three core words, three answer
/// words); grade-1 documents a weaker one (one core word, two answer words);
/// grade-0 distractors repeat core words in every sentence without answer
/// words; the rest mix filler with a neighbouring topic's core words.
/// Every query of a topic is its eight core words plus one query-specific word
/// and shares the topic's judgements.
struct SyntheticDataset {
    std::vector<DocumentRecord> documents;
    std::vector<Query> queries;
    QrelTable qrels;
    RankingLog log;  // per query: the BM25 top-10 labelled with its nDCG, plus two unlabelled random slates
    SynonymLexicon lexicon;
};

SyntheticDataset generate_synthetic_corpus(std::uint64_t seed, std::size_t n_topics, std::size_t docs_per_topic,
                                           std::size_t queries_per_topic);

/// corpus.jsonl, queries.tsv, qrels.tsv, wq.jsonl, lexicon.tsv, stopwords.txt
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace dqrank
