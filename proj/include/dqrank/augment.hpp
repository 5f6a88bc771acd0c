#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dqrank/state.hpp"

namespace dqrank {

/// Token substitutes plus the stopwords a paraphrase may drop.
class SynonymLexicon {
public:
    /// Throws InvalidArgument on self-mappings or non-token substitutes.
    void add(const std::string& token, std::vector<std::string> synonyms);
    void add_stopword(const std::string& token);

    /// TSV `token \t syn1,syn2,...`; stopwords one per line (optional path).
    static SynonymLexicon load(const std::filesystem::path& lexicon, const std::filesystem::path& stopwords = {});

    const std::vector<std::string>* synonyms(std::string_view token) const;
    bool is_stopword(std::string_view token) const;
    bool empty() const noexcept { return synonyms_.empty(); }
    const std::map<std::string, std::vector<std::string>, std::less<>>& entries() const noexcept { return synonyms_; }
    const std::set<std::string, std::less<>>& stopwords() const noexcept { return stopwords_; }

private:
    std::map<std::string, std::vector<std::string>, std::less<>> synonyms_;
    std::set<std::string, std::less<>> stopwords_;
};

struct Paraphrase {
    std::string text;
    bool changed = false;
};

/// Variant v over k eligible positions E and the chosen token's synonyms S:
/// position E[v % k] takes S[(v / k) % |S|], and the first stopword is dropped
/// when (v / k / |S|) is odd. Output is the lowercased tokens joined by spaces.
/// Without an eligible token the input comes back unchanged.
Paraphrase paraphrase(const SynonymLexicon& lexicon, std::string_view text, std::size_t variant);

/// n copies of the state whose query text is paraphrased with variants 0..n-1.
std::vector<State> augment_state(const SynonymLexicon& lexicon, const State& state, std::size_t n);

}  // namespace dqrank
