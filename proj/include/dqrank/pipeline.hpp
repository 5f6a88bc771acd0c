#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dqrank/synthetic.hpp"
#include "dqrank/trainer.hpp"

namespace dqrank {

struct Dataset {
    CorpusIndex corpus;
    std::vector<Query> queries;
    QrelTable qrels;
    RankingLog log;
    SynonymLexicon lexicon;
};

struct DatasetPaths {
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::filesystem::path qrels;
    std::filesystem::path log;        // optional
    std::filesystem::path lexicon;    // optional
    std::filesystem::path stopwords;  // optional

    /// The file names written by write_synthetic.
    static DatasetPaths in_directory(const std::filesystem::path& dir);
};

Dataset load_dataset(const DatasetPaths& paths);
Dataset dataset_from(const SyntheticDataset& data);

/// U initialised from the seed and pretrained on pairs built from `queries`.
/// With zero epochs the initialisation is returned untouched.
UserModel pretrain_user(const Dataset& data, const std::vector<Query>& queries, std::size_t epochs, double lr,
                        std::uint64_t seed, PretrainReport* report = nullptr);

struct SplitResult {
    OfflineResult trained;
    MetricReport bm25;
    MetricReport u_only;
    MetricReport dqrank;
};

/// Pretrain (config.pretrain_epochs, 0 = random U), train on `train`, evaluate
/// all three modes on `test`.
SplitResult train_and_evaluate(const TrainerConfig& config, const Dataset& data, const std::vector<Query>& train,
                               const std::vector<Query>& test);

}  // namespace dqrank
