#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dqrank {

struct Sentence {
    std::string text;
    std::size_t index = 0;

    bool operator==(const Sentence&) const = default;
};

struct Document {
    std::string doc_id;
    std::vector<Sentence> sentences;
    std::size_t token_count = 0;
};

struct Query {
    std::string query_id;
    std::string text;

    bool operator==(const Query&) const = default;
};

/// Splits on '.', '!' or '?' followed by whitespace (or end of input).
/// Fragments with fewer than two tokens are merged into the previous
/// sentence; a short leading fragment is carried into the next one.
std::vector<Sentence> split_sentences(std::string_view text);

/// One corpus record before indexing: pre-split sentences or raw text.
struct DocumentRecord {
    std::string doc_id;
    std::vector<std::string> sentences;  // used when non-empty
    std::string text;
};

struct Posting {
    std::size_t doc;  // index into CorpusIndex::documents(), ordered by doc_id
    std::size_t tf;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Immutable inverted index over a document collection.
///
/// Documents are stored sorted by doc_id so that postings ordered by document
/// index are also ordered by doc_id.
class CorpusIndex {
public:
    static CorpusIndex build(std::vector<DocumentRecord> records);

    const std::vector<Document>& documents() const noexcept { return documents_; }
    std::size_t size() const noexcept { return documents_.size(); }

    const Document* find(std::string_view doc_id) const;
    const Document& at(std::string_view doc_id) const;
    std::optional<std::size_t> index_of(std::string_view doc_id) const;

    double average_length() const noexcept { return avg_length_; }
    std::size_t document_frequency(std::string_view term) const;
    const std::vector<Posting>& postings(std::string_view term) const;
    const std::map<std::string, std::vector<Posting>, std::less<>>& terms() const noexcept {
        return postings_;
    }

private:
    std::vector<Document> documents_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;
    double avg_length_ = 0.0;
};

/// Reads corpus JSONL: {"doc_id", "sentences": [...]} or {"doc_id", "text"}.
std::vector<DocumentRecord> read_corpus_records(const std::filesystem::path& path);
CorpusIndex ingest_corpus(const std::filesystem::path& path);

/// Okapi BM25 with idf = ln(1 + (n - df + 0.5) / (df + 0.5)); each distinct
/// query term counts once. Descending score, ties by ascending doc_id.
std::vector<ScoredDoc> bm25_retrieve(const CorpusIndex& index, const Query& query, std::size_t k,
                                     const Bm25Params& params = {});

/// Graded relevance judgements; absent pairs have grade 0.
class QrelTable {
public:
    /// Returns true when an existing grade was overwritten.
    bool set(const std::string& query_id, const std::string& doc_id, int grade);
    int grade(std::string_view query_id, std::string_view doc_id) const;
    bool has_query(std::string_view query_id) const;
    bool empty() const noexcept { return by_query_.empty(); }
    std::size_t size() const noexcept;

    /// All judged docs of a query with grade > 0, ordered by doc_id.
    std::vector<std::pair<std::string, int>> relevant(std::string_view query_id) const;
    const std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>>& rows() const noexcept {
        return by_query_;
    }

private:
    std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> by_query_;
};

/// TSV `query_id \t text`.
std::vector<Query> load_queries(const std::filesystem::path& path);
/// TREC TSV `query_id \t 0 \t doc_id \t grade`; duplicate pairs keep the last grade.
QrelTable load_qrels(const std::filesystem::path& path);

}  // namespace dqrank
