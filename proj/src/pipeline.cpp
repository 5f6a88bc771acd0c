#include "dqrank/pipeline.hpp"

#include "dqrank/error.hpp"

namespace dqrank {

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
    return {dir / "corpus.jsonl", dir / "queries.tsv", dir / "qrels.tsv",
            dir / "wq.jsonl",     dir / "lexicon.tsv", dir / "stopwords.txt"};
}

Dataset load_dataset(const DatasetPaths& paths) {
    Dataset d{ingest_corpus(paths.corpus), load_queries(paths.queries), load_qrels(paths.qrels), {}, {}};
    if (!paths.log.empty()) d.log = RankingLog::load(paths.log);
    if (!paths.lexicon.empty()) d.lexicon = SynonymLexicon::load(paths.lexicon, paths.stopwords);
    return d;
}

Dataset dataset_from(const SyntheticDataset& data) {
    return {CorpusIndex::build(data.documents), data.queries, data.qrels, data.log, data.lexicon};
}

UserModel pretrain_user(const Dataset& data, const std::vector<Query>& queries, std::size_t epochs, double lr,
                        std::uint64_t seed, PretrainReport* report) {
    Rng rng(seed ^ 0x5eed0f0e5eed0f0eULL);
    UserModel user{UserModelParams::init(rng), {}};
    if (epochs == 0) return user;
    const auto pairs = generate_pretrain_pairs(data.corpus, data.qrels, queries, seed);
    PairEncoder encoder;
    PretrainOptions options;
    options.epochs = epochs;
    options.lr = lr;
    options.seed = seed;
    const auto r = pretrain(user, encoder, pairs, options);
    if (report != nullptr) *report = r;
    return user;
}

SplitResult train_and_evaluate(const TrainerConfig& config, const Dataset& data, const std::vector<Query>& train,
                               const std::vector<Query>& test) {
    auto user = pretrain_user(data, train, config.pretrain_epochs, config.lr, config.seed);
    SplitResult out;
    out.trained = run_offline(config, {data.corpus, train, data.qrels, data.log, data.lexicon}, std::move(user));
    const auto model = snapshot_of(out.trained.model);
    out.bm25 = evaluate(config, model, data.corpus, test, data.qrels, EvalMode::Bm25);
    out.u_only = evaluate(config, model, data.corpus, test, data.qrels, EvalMode::UOnly);
    out.dqrank = evaluate(config, model, data.corpus, test, data.qrels, EvalMode::DQRank, &out.trained.pool);
    return out;
}

}  // namespace dqrank
