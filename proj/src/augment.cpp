#include "dqrank/augment.hpp"

#include <fstream>

#include "dqrank/error.hpp"
#include "dqrank/text.hpp"

namespace dqrank {

namespace {

bool is_single_token(const std::string& s) {
    const auto tokens = tokenize(s);
    return tokens.size() == 1 && tokens[0] == s;
}

}  // namespace

void SynonymLexicon::add(const std::string& token, std::vector<std::string> synonyms) {
    if (!is_single_token(token)) throw InvalidArgument("lexicon: '" + token + "' is not a lowercase token");
    if (synonyms.empty()) throw InvalidArgument("lexicon: no synonyms for '" + token + "'");
    for (const auto& s : synonyms) {
        if (!is_single_token(s)) throw InvalidArgument("lexicon: synonym '" + s + "' is not a lowercase token");
        if (s == token) throw InvalidArgument("lexicon: '" + token + "' maps to itself");
    }
    synonyms_[token] = std::move(synonyms);
}

void SynonymLexicon::add_stopword(const std::string& token) {
    if (!is_single_token(token)) throw InvalidArgument("stopword '" + token + "' is not a lowercase token");
    stopwords_.insert(token);
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& lexicon, const std::filesystem::path& stopwords) {
    SynonymLexicon out;
    std::ifstream in(lexicon);
    if (!in) throw Error("cannot open " + lexicon.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(lexicon.string(), line_no, "expected 2 tab-separated columns");
        }
        std::vector<std::string> synonyms;
        std::string rest = line.substr(tab + 1);
        std::size_t start = 0;
        while (start <= rest.size()) {
            const auto comma = rest.find(',', start);
            const auto end = comma == std::string::npos ? rest.size() : comma;
            synonyms.push_back(trim(std::string_view(rest).substr(start, end - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        try {
            out.add(trim(line.substr(0, tab)), std::move(synonyms));
        } catch (const InvalidArgument& e) {
            throw ParseError(lexicon.string(), line_no, e.what());
        }
    }
    if (stopwords.empty()) return out;
    std::ifstream sw(stopwords);
    if (!sw) throw Error("cannot open " + stopwords.string());
    line_no = 0;
    while (std::getline(sw, line)) {
        ++line_no;
        const auto token = trim(line);
        if (token.empty()) continue;
        try {
            out.add_stopword(token);
        } catch (const InvalidArgument& e) {
            throw ParseError(stopwords.string(), line_no, e.what());
        }
    }
    return out;
}

const std::vector<std::string>* SynonymLexicon::synonyms(std::string_view token) const {
    const auto it = synonyms_.find(token);
    return it == synonyms_.end() ? nullptr : &it->second;
}

bool SynonymLexicon::is_stopword(std::string_view token) const { return stopwords_.find(token) != stopwords_.end(); }

Paraphrase paraphrase(const SynonymLexicon& lexicon, std::string_view text, std::size_t variant) {
    auto tokens = tokenize(text);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (lexicon.synonyms(tokens[i]) != nullptr) eligible.push_back(i);
    }
    if (eligible.empty()) return {std::string(text), false};

    const std::size_t k = eligible.size();
    const std::size_t pos = eligible[variant % k];
    const auto& syns = *lexicon.synonyms(tokens[pos]);
    const std::size_t round = variant / k;
    tokens[pos] = syns[round % syns.size()];
    if ((round / syns.size()) % 2 == 1 && tokens.size() > 1) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i != pos && lexicon.is_stopword(tokens[i])) {
                tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
        }
    }
    return {join(tokens, " "), true};
}

std::vector<State> augment_state(const SynonymLexicon& lexicon, const State& state, std::size_t n) {
    std::vector<State> out;
    out.reserve(n);
    for (std::size_t v = 0; v < n; ++v) {
        State s = state;
        s.query.text = paraphrase(lexicon, state.query.text, v).text;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dqrank
