#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "dqrank/checkpoint.hpp"
#include "dqrank/error.hpp"
#include "dqrank/pipeline.hpp"
#include "dqrank/service.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace dqrank;
namespace fs = std::filesystem;

namespace {

struct DataFlags {
    std::string corpus;
    std::string queries;
    std::string qrels;
    std::string wq;
    std::string lexicon;
    std::string stopwords;

    void add(CLI::App* app, bool with_log) {
        app->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
        app->add_option("--queries", queries, "Queries TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--qrels", qrels, "Qrels TSV")->required()->check(CLI::ExistingFile);
        if (with_log) {
            app->add_option("--wq", wq, "Ranking log JSONL")->check(CLI::ExistingFile);
            app->add_option("--lexicon", lexicon, "Synonym lexicon TSV")->check(CLI::ExistingFile);
            app->add_option("--stopwords", stopwords, "Stopword list")->check(CLI::ExistingFile);
        }
    }

    Dataset load() const { return load_dataset({corpus, queries, qrels, wq, lexicon, stopwords}); }
};

TrainerConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    TrainerConfig config = path.empty() ? TrainerConfig{} : TrainerConfig::load(path);
    if (seed) config.seed = *seed;
    config.validate();
    return config;
}

void write_json(const fs::path& path, const nlohmann::json& value) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

nlohmann::json index_json(const CorpusIndex& index) {
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& d : index.documents()) {
        std::vector<std::string> sentences;
        for (const auto& s : d.sentences) sentences.push_back(s.text);
        docs.push_back({{"doc_id", d.doc_id}, {"token_count", d.token_count}, {"sentences", std::move(sentences)}});
    }
    nlohmann::json df = nlohmann::json::object();
    for (const auto& [term, postings] : index.terms()) df[term] = postings.size();
    return {{"num_documents", index.size()},
            {"average_length", index.average_length()},
            {"documents", std::move(docs)},
            {"document_frequency", std::move(df)}};
}

// Random scorer for the window benchmark: sparse unit embeddings and a seeded head.
struct BenchRow {
    std::size_t g, m, evaluations;
    double q_initial, q_window;
    std::optional<double> q_exhaustive;
    double wall_ms;
};

BenchRow bench_once(Rng& rng, std::size_t g, std::size_t m) {
    const auto params = QNetParams::init(rng, g, kEncoderDim, 32);
    std::vector<SparseVector> embeddings(g);
    for (auto& e : embeddings) {
        double norm = 0.0;
        for (std::uint32_t i = 0; i < kEncoderDim; i += 1 + static_cast<std::uint32_t>(rng.uniform_index(16))) {
            const double v = 2.0 * rng.uniform01() - 1.0;
            e.entries.emplace_back(i, v);
            norm += v * v;
        }
        for (auto& entry : e.entries) entry.second /= std::sqrt(norm);
    }
    SlateScorer scorer(params, embeddings);
    std::vector<std::size_t> order(g);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto start = std::chrono::steady_clock::now();
    const auto result = sliding_window_order(scorer, order, m);
    const auto wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    BenchRow row{g, m, scorer.evaluations(), result.q_initial, result.q_final, std::nullopt, wall};
    if (g <= 6) {
        SlateScorer brute(params, embeddings);
        double best = -std::numeric_limits<double>::infinity();
        do {
            best = std::max(best, brute.evaluate(order));
        } while (std::next_permutation(order.begin(), order.end()));
        row.q_exhaustive = best;
    }
    return row;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dqrank: deep Q-learning over ranked result slates"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    std::string config_path;

    auto* ingest = app.add_subcommand("ingest", "Build and validate the corpus index");
    std::string ingest_corpus_path, ingest_out;
    ingest->add_option("--corpus", ingest_corpus_path, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", ingest_out, "Index JSON to write")->required();

    auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
    std::uint64_t synth_seed = 7;
    std::size_t topics = 8, docs_per_topic = 30, queries_per_topic = 8;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--topics", topics, "Number of topics")->capture_default_str();
    synth->add_option("--docs-per-topic", docs_per_topic, "Documents per topic")->capture_default_str();
    synth->add_option("--queries-per-topic", queries_per_topic, "Queries per topic")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();

    auto* pre = app.add_subcommand("pretrain-u", "Pretrain the user-simulation head");
    DataFlags pre_data;
    pre_data.add(pre, false);
    std::string pre_out;
    std::size_t pre_epochs = 50;
    double pre_lr = 0.001;
    pre->add_option("--out", pre_out, "Checkpoint to write")->required();
    pre->add_option("--epochs", pre_epochs, "Epochs")->capture_default_str();
    pre->add_option("--lr", pre_lr, "Learning rate")->capture_default_str();
    pre->add_option("--seed", seed, "Seed (default 0)");

    auto* train = app.add_subcommand("train", "Offline training");
    DataFlags train_data;
    train_data.add(train, true);
    std::string train_out, train_init;
    train->add_option("--config", config_path, "Trainer config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    train->add_option("--init-u", train_init, "Pretrained U checkpoint")->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--seed", seed, "Override the config seed");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    DataFlags eval_data;
    eval_data.add(eval, false);
    std::string eval_model, eval_pool, eval_mode = "dqrank";
    eval->add_option("--model", eval_model, "Checkpoint (not needed for bm25)")->check(CLI::ExistingFile);
    eval->add_option("--pool", eval_pool, "Feedback pool JSONL for state retrieval")->check(CLI::ExistingFile);
    eval->add_option("--mode", eval_mode, "bm25 | u_only | dqrank")
        ->capture_default_str()
        ->check(CLI::IsMember({"bm25", "u_only", "dqrank"}));
    eval->add_option("--config", config_path, "Trainer config JSON")->check(CLI::ExistingFile);
    eval->add_option("--seed", seed, "Unused; accepted for uniformity");

    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    std::string serve_corpus, serve_model, serve_pool, serve_host = "127.0.0.1", serve_static, serve_queries,
                                                       serve_qrels;
    int port = 8080;
    std::size_t ttl_minutes = 30;
    serve->add_option("--corpus", serve_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    serve->add_option("--model", serve_model, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    serve->add_option("--pool", serve_pool, "Feedback pool JSONL (created if missing, updated on session end)");
    serve->add_option("--config", config_path, "Trainer config JSON")->check(CLI::ExistingFile);
    serve->add_option("--queries", serve_queries, "Eval queries TSV for /api/metrics")->check(CLI::ExistingFile);
    serve->add_option("--qrels", serve_qrels, "Qrels TSV for /api/metrics")->check(CLI::ExistingFile);
    serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port")->capture_default_str();
    serve->add_option("--ttl-minutes", ttl_minutes, "Idle session TTL")->capture_default_str();
    serve->add_option("--static-dir", serve_static, "Directory served at /")->check(CLI::ExistingDirectory);
    serve->add_option("--seed", seed, "Unused; accepted for uniformity");

    auto* bench = app.add_subcommand("bench-window", "Sliding-window evaluation counts and quality");
    std::size_t bench_g = 10, bench_m = 4, bench_trials = 1;
    bench->add_option("--g", bench_g, "Slate length G")->capture_default_str();
    bench->add_option("--m", bench_m, "Window size m")->capture_default_str();
    bench->add_option("--trials", bench_trials, "Random instances")->capture_default_str();
    bench->add_option("--seed", seed, "Seed (default 0)");

    auto* kfold = app.add_subcommand("kfold", "k-fold pretrain/train/evaluate");
    DataFlags kfold_data;
    kfold_data.add(kfold, true);
    std::size_t k = 5;
    std::string kfold_out;
    kfold->add_option("--k", k, "Folds")->capture_default_str();
    kfold->add_option("--config", config_path, "Trainer config JSON")->check(CLI::ExistingFile);
    kfold->add_option("--seed", seed, "Override the config seed (also the split seed)");
    kfold->add_option("--out", kfold_out, "Optional directory for per-fold checkpoints and traces");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const auto index = ingest_corpus(ingest_corpus_path);
            write_json(ingest_out, index_json(index));
            std::cerr << "indexed " << index.size() << " documents\n";
        } else if (*synth) {
            const auto data = generate_synthetic_corpus(synth_seed, topics, docs_per_topic, queries_per_topic);
            write_synthetic(data, synth_out);
            std::cerr << "wrote " << data.documents.size() << " documents, " << data.queries.size() << " queries to "
                      << synth_out << "\n";
        } else if (*pre) {
            const auto data = pre_data.load();
            PretrainReport report;
            Checkpoint ckpt;
            ckpt.user = pretrain_user(data, data.queries, pre_epochs, pre_lr, seed.value_or(0), &report);
            save_checkpoint(ckpt, pre_out);
            std::cout << nlohmann::json{{"initial_loss", report.initial_loss},
                                        {"final_loss", report.final_loss},
                                        {"accuracy", report.accuracy}}
                             .dump()
                      << '\n';
        } else if (*train) {
            const auto config = load_config(config_path, seed);
            const auto data = train_data.load();
            std::optional<UserModel> init;
            if (!train_init.empty()) init = load_checkpoint(train_init).user;
            const auto result =
                run_offline(config, {data.corpus, data.queries, data.qrels, data.log, data.lexicon}, std::move(init));
            fs::create_directories(train_out);
            save_checkpoint(result.model, fs::path(train_out) / "model.ckpt");
            write_traces(result.traces, fs::path(train_out) / "traces.jsonl");
            result.pool.save(fs::path(train_out) / "pool.jsonl");
            write_json(fs::path(train_out) / "config.json", config.to_json());
            std::cerr << "trained " << result.steps << " steps over " << result.traces.size() << " episodes\n";
        } else if (*eval) {
            const auto config = load_config(config_path, seed);
            const auto data = eval_data.load();
            const auto mode = parse_eval_mode(eval_mode);
            ModelSnapshot model{UserModelParams::zeros(), QNetParams::zeros(config.N, kEncoderDim, 1)};
            if (!eval_model.empty()) {
                model = snapshot_of(load_checkpoint(eval_model));
            } else if (mode != EvalMode::Bm25) {
                throw InvalidArgument("--model is required for mode " + eval_mode);
            }
            std::optional<FeedbackPool> pool;
            if (!eval_pool.empty()) pool = FeedbackPool::load(eval_pool);
            const auto report =
                evaluate(config, model, data.corpus, data.queries, data.qrels, mode, pool ? &*pool : nullptr);
            std::cout << report.to_json().dump() << '\n';
        } else if (*serve) {
            ServiceOptions options;
            options.config = load_config(config_path, seed);
            options.idle_ttl = std::chrono::minutes(ttl_minutes);
            options.pool_path = serve_pool;
            FeedbackPool pool;
            if (!serve_pool.empty() && fs::exists(serve_pool)) pool = FeedbackPool::load(serve_pool);
            SearchService service(options, std::move(pool));
            ServiceModel model;
            model.corpus = std::make_shared<const CorpusIndex>(ingest_corpus(serve_corpus));
            model.model = std::make_shared<const ModelSnapshot>(snapshot_of(load_checkpoint(serve_model)));
            if (!serve_queries.empty() && !serve_qrels.empty()) {
                model.eval_queries = load_queries(serve_queries);
                model.qrels = load_qrels(serve_qrels);
            }
            service.load(std::move(model));
            httplib::Server server;
            service.install(server);
            if (!serve_static.empty()) server.set_mount_point("/", serve_static);
            static httplib::Server* running = &server;
            std::signal(SIGINT, [](int) { running->stop(); });
            std::signal(SIGTERM, [](int) { running->stop(); });
            std::cerr << "listening on " << serve_host << ":" << port << "\n";
            if (!server.listen(serve_host, port)) throw Error("cannot listen on " + serve_host + ":" + std::to_string(port));
        } else if (*bench) {
            if (bench_m < 2 || bench_m > bench_g) throw InvalidArgument("--m must satisfy 2 <= m <= G");
            Rng rng(seed.value_or(0));
            std::cout << "G,m,evaluations,q_initial,q_window,q_exhaustive,wall_ms\n";
            for (std::size_t t = 0; t < bench_trials; ++t) {
                const auto row = bench_once(rng, bench_g, bench_m);
                char exhaustive[32] = "";
                if (row.q_exhaustive) std::snprintf(exhaustive, sizeof exhaustive, "%.12g", *row.q_exhaustive);
                char line[256];
                std::snprintf(line, sizeof line, "%zu,%zu,%zu,%.12g,%.12g,%s,%.3f\n", row.g, row.m, row.evaluations,
                              row.q_initial, row.q_window, exhaustive, row.wall_ms);
                std::cout << line;
            }
        } else if (*kfold) {
            const auto config = load_config(config_path, seed);
            const auto data = kfold_data.load();
            const auto folds = kfold_split(data.queries, k, config.seed);
            nlohmann::json out = nlohmann::json::array();
            for (std::size_t f = 0; f < folds.size(); ++f) {
                const auto r = train_and_evaluate(config, data, folds[f].train, folds[f].test);
                out.push_back({{"fold", f},
                               {"train_queries", folds[f].train.size()},
                               {"test_queries", folds[f].test.size()},
                               {"bm25", r.bm25.to_json()},
                               {"u_only", r.u_only.to_json()},
                               {"dqrank", r.dqrank.to_json()}});
                if (!kfold_out.empty()) {
                    const auto dir = fs::path(kfold_out) / ("fold" + std::to_string(f));
                    fs::create_directories(dir);
                    save_checkpoint(r.trained.model, dir / "model.ckpt");
                    write_traces(r.trained.traces, dir / "traces.jsonl");
                    r.trained.pool.save(dir / "pool.jsonl");
                }
                std::cerr << "fold " << f << ": bm25 " << r.bm25.ndcg_at_10 << " u_only " << r.u_only.ndcg_at_10
                          << " dqrank " << r.dqrank.ndcg_at_10 << "\n";
            }
            std::cout << out.dump() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
