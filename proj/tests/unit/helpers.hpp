#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dqrank/error.hpp"

namespace testutil {

// Removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("dqrank-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Captures warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        previous_ = dqrank::set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() { dqrank::set_warning_handler(previous_); }

    std::vector<std::string> messages;

private:
    dqrank::WarningHandler previous_;
};

}  // namespace testutil

#include "dqrank/corpus.hpp"

namespace testutil {

// Six short documents about two topics; d1..d3 are judged relevant to "q".
inline dqrank::CorpusIndex small_corpus() {
    return dqrank::CorpusIndex::build({
        {"d1", {"solar panels convert sunlight into power", "they sit on rooftops", "output drops at night"}, ""},
        {"d2", {"wind turbines spin in strong wind", "solar farms need open land", "storage smooths supply"}, ""},
        {"d3", {"battery storage holds solar power", "prices keep falling"}, ""},
        {"d4", {"the recipe needs flour and sugar", "bake for twenty minutes"}, ""},
        {"d5", {"bread rises with yeast", "knead the dough well", "let it rest overnight", "sunlight helps proofing"}, ""},
        {"d6", {"cakes cool on a rack"}, ""},
    });
}

inline dqrank::QrelTable small_qrels() {
    dqrank::QrelTable q;
    q.set("q", "d1", 2);
    q.set("q", "d2", 1);
    q.set("q", "d3", 1);
    q.set("q", "d4", 0);
    q.set("q", "d5", 0);
    return q;
}

}  // namespace testutil
