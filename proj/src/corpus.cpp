#include "dqrank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
        fields.back().pop_back();
    }
    return fields;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return is_space(c); });
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text) {
    struct Span {
        std::size_t begin;
        std::size_t end;
    };
    std::vector<Span> fragments;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_terminal(text[i]) && (i + 1 == text.size() || is_space(text[i + 1]))) {
            fragments.push_back({start, i + 1});
            start = i + 1;
        }
    }
    if (start < text.size()) fragments.push_back({start, text.size()});

    std::vector<Span> merged;
    std::optional<std::size_t> carried;
    for (auto frag : fragments) {
        if (trim(text.substr(frag.begin, frag.end - frag.begin)).empty()) continue;
        if (carried) {
            frag.begin = *carried;
            carried.reset();
        }
        const auto tokens = tokenize(text.substr(frag.begin, frag.end - frag.begin)).size();
        if (tokens >= 2) {
            merged.push_back(frag);
        } else if (!merged.empty()) {
            merged.back().end = frag.end;
        } else {
            carried = frag.begin;
        }
    }
    if (carried) merged.push_back({*carried, fragments.back().end});

    std::vector<Sentence> sentences;
    sentences.reserve(merged.size());
    for (const auto& span : merged) {
        sentences.push_back({trim(text.substr(span.begin, span.end - span.begin)), sentences.size()});
    }
    return sentences;
}

CorpusIndex CorpusIndex::build(std::vector<DocumentRecord> records) {
    if (records.empty()) throw InvalidArgument("empty corpus");
    std::sort(records.begin(), records.end(),
              [](const DocumentRecord& a, const DocumentRecord& b) { return a.doc_id < b.doc_id; });
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].doc_id == records[i - 1].doc_id) {
            throw InvalidArgument("duplicate doc_id: " + records[i].doc_id);
        }
    }

    CorpusIndex index;
    index.documents_.reserve(records.size());
    std::size_t total_length = 0;
    for (auto& record : records) {
        Document doc;
        doc.doc_id = std::move(record.doc_id);
        if (!record.sentences.empty()) {
            for (auto& s : record.sentences) doc.sentences.push_back({trim(s), doc.sentences.size()});
        } else {
            doc.sentences = split_sentences(record.text);
        }
        if (doc.sentences.empty()) throw InvalidArgument("document has no sentences: " + doc.doc_id);

        std::map<std::string, std::size_t> tf;
        for (const auto& sentence : doc.sentences) {
            for (auto& token : tokenize(sentence.text)) {
                ++tf[std::move(token)];
                ++doc.token_count;
            }
        }
        const std::size_t doc_index = index.documents_.size();
        for (const auto& [term, count] : tf) {
            auto it = index.postings_.find(term);
            if (it == index.postings_.end()) it = index.postings_.emplace(term, std::vector<Posting>{}).first;
            it->second.push_back({doc_index, count});
        }
        total_length += doc.token_count;
        index.by_id_.emplace(doc.doc_id, doc_index);
        index.documents_.push_back(std::move(doc));
    }
    index.avg_length_ = static_cast<double>(total_length) / static_cast<double>(index.documents_.size());
    return index;
}

const Document* CorpusIndex::find(std::string_view doc_id) const {
    const auto it = by_id_.find(std::string(doc_id));
    return it == by_id_.end() ? nullptr : &documents_[it->second];
}

const Document& CorpusIndex::at(std::string_view doc_id) const {
    const auto* doc = find(doc_id);
    if (doc == nullptr) throw InvalidArgument("unknown doc_id: " + std::string(doc_id));
    return *doc;
}

std::optional<std::size_t> CorpusIndex::index_of(std::string_view doc_id) const {
    const auto it = by_id_.find(std::string(doc_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::size_t CorpusIndex::document_frequency(std::string_view term) const {
    return postings(term).size();
}

const std::vector<Posting>& CorpusIndex::postings(std::string_view term) const {
    static const std::vector<Posting> kEmpty;
    const auto it = postings_.find(term);
    return it == postings_.end() ? kEmpty : it->second;
}

std::vector<DocumentRecord> read_corpus_records(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<DocumentRecord> records;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("doc_id") || !obj["doc_id"].is_string()) {
            throw ParseError(path.string(), line_no, "record needs a string doc_id");
        }
        DocumentRecord record;
        record.doc_id = obj["doc_id"].get<std::string>();
        if (record.doc_id.empty()) throw ParseError(path.string(), line_no, "empty doc_id");
        if (obj.contains("sentences")) {
            const auto& sentences = obj["sentences"];
            if (!sentences.is_array() || sentences.empty()) {
                throw ParseError(path.string(), line_no, "sentences must be a non-empty array");
            }
            for (const auto& s : sentences) {
                if (!s.is_string() || trim(s.get<std::string>()).empty()) {
                    throw ParseError(path.string(), line_no, "sentences must be non-empty strings");
                }
                record.sentences.push_back(s.get<std::string>());
            }
        } else if (obj.contains("text") && obj["text"].is_string()) {
            record.text = obj["text"].get<std::string>();
            if (split_sentences(record.text).empty()) {
                throw ParseError(path.string(), line_no, "text has no sentences");
            }
        } else {
            throw ParseError(path.string(), line_no, "record needs sentences or text");
        }
        if (!seen.insert(record.doc_id).second) {
            throw ParseError(path.string(), line_no, "duplicate doc_id: " + record.doc_id);
        }
        records.push_back(std::move(record));
    }
    if (records.empty()) throw InvalidArgument("empty corpus");
    return records;
}

CorpusIndex ingest_corpus(const std::filesystem::path& path) {
    return CorpusIndex::build(read_corpus_records(path));
}

std::vector<ScoredDoc> bm25_retrieve(const CorpusIndex& index, const Query& query, std::size_t k,
                                     const Bm25Params& params) {
    if (k == 0) throw InvalidArgument("bm25_retrieve: k must be >= 1");
    auto terms = tokenize(query.text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n = static_cast<double>(index.size());
    const double avgdl = index.average_length();
    std::vector<double> scores(index.size(), 0.0);
    std::vector<char> matched(index.size(), 0);
    for (const auto& term : terms) {
        const auto& postings = index.postings(term);
        if (postings.empty()) continue;
        const double df = static_cast<double>(postings.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& p : postings) {
            const double tf = static_cast<double>(p.tf);
            const double dl = static_cast<double>(index.documents()[p.doc].token_count);
            const double norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            scores[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + norm);
            matched[p.doc] = 1;
        }
    }

    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (matched[i] != 0) hits.push_back(i);
    }
    // Document indices follow doc_id order, so index order breaks ties.
    std::stable_sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    if (hits.size() > k) hits.resize(k);

    std::vector<ScoredDoc> out;
    out.reserve(hits.size());
    for (auto i : hits) out.push_back({index.documents()[i].doc_id, scores[i]});
    return out;
}

bool QrelTable::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw InvalidArgument("negative relevance grade");
    auto& docs = by_query_[query_id];
    const auto [it, inserted] = docs.insert_or_assign(doc_id, grade);
    return !inserted;
}

int QrelTable::grade(std::string_view query_id, std::string_view doc_id) const {
    const auto q = by_query_.find(query_id);
    if (q == by_query_.end()) return 0;
    const auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

bool QrelTable::has_query(std::string_view query_id) const { return by_query_.contains(query_id); }

std::size_t QrelTable::size() const noexcept {
    std::size_t n = 0;
    for (const auto& [q, docs] : by_query_) n += docs.size();
    return n;
}

std::vector<std::pair<std::string, int>> QrelTable::relevant(std::string_view query_id) const {
    std::vector<std::pair<std::string, int>> out;
    const auto q = by_query_.find(query_id);
    if (q == by_query_.end()) return out;
    for (const auto& [doc, grade] : q->second) {
        if (grade > 0) out.emplace_back(doc, grade);
    }
    return out;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<Query> queries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 2) {
            throw ParseError(path.string(), line_no, "expected 2 tab-separated columns, got " +
                                                         std::to_string(fields.size()));
        }
        Query q{trim(fields[0]), trim(fields[1])};
        if (q.query_id.empty()) throw ParseError(path.string(), line_no, "empty query_id");
        if (q.text.empty()) throw ParseError(path.string(), line_no, "empty query text");
        queries.push_back(std::move(q));
    }
    return queries;
}

QrelTable load_qrels(const std::filesystem::path& path) {
    auto in = open_input(path);
    QrelTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 4) {
            throw ParseError(path.string(), line_no, "expected 4 tab-separated columns, got " +
                                                         std::to_string(fields.size()));
        }
        const auto grade_text = trim(fields[3]);
        int grade = 0;
        std::size_t consumed = 0;
        try {
            grade = std::stoi(grade_text, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (grade_text.empty() || consumed != grade_text.size()) {
            throw ParseError(path.string(), line_no, "non-integer grade: " + grade_text);
        }
        if (grade < 0) throw ParseError(path.string(), line_no, "negative grade");
        const auto query_id = trim(fields[0]);
        const auto doc_id = trim(fields[2]);
        if (table.set(query_id, doc_id, grade)) {
            warn(path.string() + ":" + std::to_string(line_no) + ": duplicate qrel (" + query_id + ", " +
                 doc_id + "), keeping the last grade");
        }
    }
    return table;
}

}  // namespace dqrank
