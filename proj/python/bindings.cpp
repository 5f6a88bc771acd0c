#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dqrank/checkpoint.hpp"
#include "dqrank/encoder.hpp"
#include "dqrank/metrics.hpp"
#include "dqrank/pipeline.hpp"
#include "dqrank/service.hpp"
#include "dqrank/trainer.hpp"

namespace py = pybind11;
using namespace dqrank;

namespace {

TrainerConfig parse_config(const std::string& text) {
    auto config = text.empty() ? TrainerConfig{} : TrainerConfig::from_json(nlohmann::json::parse(text));
    config.validate();
    return config;
}

std::vector<Query> select_queries(const Dataset& data, const std::optional<std::vector<std::string>>& ids) {
    if (!ids) return data.queries;
    std::vector<Query> out;
    for (const auto& id : *ids) {
        const auto it = std::find_if(data.queries.begin(), data.queries.end(),
                                     [&](const Query& q) { return q.query_id == id; });
        if (it == data.queries.end()) throw InvalidArgument("unknown query id " + id);
        out.push_back(*it);
    }
    return out;
}

QrelTable qrels_from(const std::map<std::string, int>& grades) {
    QrelTable table;
    for (const auto& [doc, grade] : grades) table.set("q", doc, grade);
    return table;
}

// A trained model with the pool and traces of its run.
struct Model {
    Checkpoint checkpoint;
    FeedbackPool pool;
    std::vector<EpisodeTrace> traces;
};

class Service {
public:
    Service(const std::string& config, const Model& model, const Dataset& data,
            const std::optional<std::vector<std::string>>& eval_ids)
        : service_(ServiceOptions{parse_config(config)}, model.pool) {
        ServiceModel m;
        m.corpus = std::make_shared<const CorpusIndex>(data.corpus);
        m.model = std::make_shared<const ModelSnapshot>(snapshot_of(model.checkpoint));
        if (eval_ids) m.eval_queries = select_queries(data, eval_ids);
        m.qrels = data.qrels;
        service_.load(std::move(m));
    }

    py::tuple call(const ServiceResponse& r) { return py::make_tuple(r.status, r.body.dump()); }

    SearchService service_;
};

}  // namespace

PYBIND11_MODULE(_dqrank, m) {
    m.doc() = "Slate re-ranking with deep Q-learning over sentence-level feedback";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

    m.attr("ENCODER_DIM") = kEncoderDim;

    m.def("default_config", [] { return TrainerConfig{}.to_json().dump(); });
    m.def("validate_config", [](const std::string& text) { return parse_config(text).to_json().dump(); });

    m.def("dcg", [](const std::vector<double>& gains) { return dcg(gains); });
    m.def(
        "ndcg_at_k",
        [](const std::vector<std::string>& slate, const std::map<std::string, int>& grades, std::size_t k) {
            return ndcg_at_k(slate, qrels_from(grades), "q", k);
        },
        py::arg("slate"), py::arg("grades"), py::arg("k"));
    m.def("mrr", [](const std::vector<std::string>& slate, const std::map<std::string, int>& grades) {
        return mrr(slate, qrels_from(grades), "q");
    });

    m.def("encode_pair", [](const std::string& a, const std::string& b) { return Eigen::VectorXd(encode_pair(a, b)); });
    m.def("encode_single", [](const std::string& a) { return Eigen::VectorXd(encode_single(a)); });

    py::class_<Dataset>(m, "Dataset")
        .def_static(
            "load",
            [](const std::filesystem::path& dir) { return load_dataset(DatasetPaths::in_directory(dir)); },
            py::arg("directory"))
        .def_static(
            "synthetic",
            [](std::uint64_t seed, std::size_t topics, std::size_t docs, std::size_t queries) {
                return dataset_from(generate_synthetic_corpus(seed, topics, docs, queries));
            },
            py::arg("seed") = 7, py::arg("topics") = 8, py::arg("docs_per_topic") = 30,
            py::arg("queries_per_topic") = 8)
        .def_property_readonly("num_documents", [](const Dataset& d) { return d.corpus.size(); })
        .def_property_readonly("queries",
                               [](const Dataset& d) {
                                   std::vector<std::pair<std::string, std::string>> out;
                                   for (const auto& q : d.queries) out.emplace_back(q.query_id, q.text);
                                   return out;
                               })
        .def("sentences", [](const Dataset& d, const std::string& doc_id) {
            std::vector<std::string> out;
            for (const auto& s : d.corpus.at(doc_id).sentences) out.push_back(s.text);
            return out;
        })
        .def(
            "bm25",
            [](const Dataset& d, const std::string& text, std::size_t k) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& hit : bm25_retrieve(d.corpus, Query{"q", text}, k)) out.emplace_back(hit.doc_id, hit.score);
                return out;
            },
            py::arg("query"), py::arg("k") = 10);

    m.def(
        "write_synthetic",
        [](const std::filesystem::path& dir, std::uint64_t seed, std::size_t topics, std::size_t docs,
           std::size_t queries) { write_synthetic(generate_synthetic_corpus(seed, topics, docs, queries), dir); },
        py::arg("directory"), py::arg("seed") = 7, py::arg("topics") = 8, py::arg("docs_per_topic") = 30,
        py::arg("queries_per_topic") = 8);

    m.def(
        "kfold_split",
        [](const Dataset& d, std::size_t k, std::uint64_t seed) {
            std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
            for (const auto& fold : kfold_split(d.queries, k, seed)) {
                std::vector<std::string> train, test;
                for (const auto& q : fold.train) train.push_back(q.query_id);
                for (const auto& q : fold.test) test.push_back(q.query_id);
                out.emplace_back(std::move(train), std::move(test));
            }
            return out;
        },
        py::arg("dataset"), py::arg("k") = 5, py::arg("seed") = 0);

    py::class_<Model>(m, "Model")
        .def("save", [](const Model& model, const std::filesystem::path& path) { save_checkpoint(model.checkpoint, path); })
        .def("save_pool", [](const Model& model, const std::filesystem::path& path) { model.pool.save(path); })
        .def("save_traces", [](const Model& model, const std::filesystem::path& path) { write_traces(model.traces, path); })
        .def_property_readonly("pool_size", [](const Model& model) { return model.pool.size(); })
        .def_property_readonly("episodes", [](const Model& model) { return model.traces.size(); })
        .def("traces", [](const Model& model) {
            std::vector<std::string> out;
            for (const auto& t : model.traces) out.push_back(t.to_json().dump());
            return out;
        });

    m.def(
        "load_model",
        [](const std::filesystem::path& path, const std::optional<std::filesystem::path>& pool) {
            Model model{load_checkpoint(path), {}, {}};
            if (pool) model.pool = FeedbackPool::load(*pool);
            return model;
        },
        py::arg("path"), py::arg("pool") = std::nullopt);

    m.def(
        "train",
        [](const std::string& config_text, const Dataset& data, const std::optional<std::vector<std::string>>& ids) {
            const auto config = parse_config(config_text);
            const auto queries = select_queries(data, ids);
            auto user = pretrain_user(data, queries, config.pretrain_epochs, config.lr, config.seed);
            py::gil_scoped_release release;
            auto result = run_offline(config, {data.corpus, queries, data.qrels, data.log, data.lexicon}, std::move(user));
            return Model{std::move(result.model), std::move(result.pool), std::move(result.traces)};
        },
        py::arg("config"), py::arg("dataset"), py::arg("query_ids") = std::nullopt);

    m.def(
        "evaluate",
        [](const std::string& config_text, const Model& model, const Dataset& data, const std::string& mode,
           const std::optional<std::vector<std::string>>& ids) {
            const auto config = parse_config(config_text);
            const auto queries = select_queries(data, ids);
            const auto snapshot = snapshot_of(model.checkpoint);
            py::gil_scoped_release release;
            return evaluate(config, snapshot, data.corpus, queries, data.qrels, parse_eval_mode(mode), &model.pool)
                .to_json()
                .dump();
        },
        py::arg("config"), py::arg("model"), py::arg("dataset"), py::arg("mode") = "dqrank",
        py::arg("query_ids") = std::nullopt);

    py::class_<Service>(m, "Service")
        .def(py::init<const std::string&, const Model&, const Dataset&, const std::optional<std::vector<std::string>>&>(),
             py::arg("config"), py::arg("model"), py::arg("dataset"), py::arg("eval_query_ids") = std::nullopt)
        .def("create_session",
             [](Service& s, const std::string& body) {
                 return s.call(s.service_.create_session(nlohmann::json::parse(body)));
             })
        .def("feedback",
             [](Service& s, const std::string& id, const std::string& body) {
                 return s.call(s.service_.post_feedback(id, nlohmann::json::parse(body)));
             })
        .def("end_session", [](Service& s, const std::string& id) { return s.call(s.service_.end_session(id)); })
        .def("metrics", [](Service& s) { return s.call(s.service_.metrics()); })
        .def("health", [](Service& s) { return s.call(s.service_.health()); });
}
