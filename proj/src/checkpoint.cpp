#include "dqrank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dqrank/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace dqrank {

namespace {

constexpr char kMagic[8] = {'D', 'Q', 'R', 'A', 'N', 'K', 'C', 'K'};

struct Array {
    std::string name;
    std::int64_t rows;
    std::int64_t cols;
    double* data;
};

std::vector<Array> layout(Checkpoint& c) {
    std::vector<Array> out;
    auto& u = c.user.params;
    out.push_back({"user.W", u.W.rows(), u.W.cols(), u.W.data()});
    out.push_back({"user.B", 2, 1, u.B.data()});
    auto add_adam = [&out](const std::string& prefix, AdamState& adam) {
        for (std::size_t i = 0; i < adam.m.size(); ++i) {
            out.push_back({prefix + ".m" + std::to_string(i), static_cast<std::int64_t>(adam.m[i].size()), 1,
                           adam.m[i].data()});
            out.push_back({prefix + ".v" + std::to_string(i), static_cast<std::int64_t>(adam.v[i].size()), 1,
                           adam.v[i].data()});
        }
    };
    add_adam("user.adam", c.user.adam);
    if (c.qnet) {
        for (auto* p : {&c.qnet->online, &c.qnet->target}) {
            const std::string prefix = p == &c.qnet->online ? "qnet.online" : "qnet.target";
            out.push_back({prefix + ".W1", p->W1.rows(), p->W1.cols(), p->W1.data()});
            out.push_back({prefix + ".b1", p->b1.size(), 1, p->b1.data()});
            out.push_back({prefix + ".W2", p->W2.size(), 1, p->W2.data()});
            out.push_back({prefix + ".b2", 1, 1, &p->b2});
        }
        add_adam("qnet.adam", c.qnet->adam);
    }
    return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    Checkpoint copy = checkpoint;
    const auto arrays = layout(copy);
    nlohmann::json header{{"encoder_id", std::string(kEncoderId)},
                          {"d", copy.user.params.dim()},
                          {"model_version", kModelVersion},
                          {"user_adam_step", copy.user.adam.step},
                          {"user_adam_tensors", copy.user.adam.m.size()}};
    if (copy.qnet) {
        header["qnet"] = {{"slate_size", copy.qnet->online.slate_size},
                          {"hidden", copy.qnet->online.hidden()},
                          {"adam_step", copy.qnet->adam.step},
                          {"adam_tensors", copy.qnet->adam.m.size()}};
    }
    auto& list = header["arrays"] = nlohmann::json::array();
    for (const auto& a : arrays) list.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});

    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    const auto length = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays) {
        out.write(reinterpret_cast<const char*>(a.data), static_cast<std::streamsize>(a.rows * a.cols * sizeof(double)));
    }
    if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[sizeof kMagic];
    std::uint32_t length = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&length), sizeof length);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(path.string() + ": not a dqrank checkpoint");
    std::string text(length, '\0');
    in.read(text.data(), length);
    if (!in) throw Error(path.string() + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": malformed header: " + e.what());
    }
    const auto encoder_id = header.value("encoder_id", std::string());
    const auto dim = header.value("d", std::size_t{0});
    if (encoder_id != kEncoderId || dim != kEncoderDim) {
        throw Error(path.string() + ": encoder mismatch (checkpoint " + encoder_id + "/" + std::to_string(dim) +
                    ", runtime " + std::string(kEncoderId) + "/" + std::to_string(kEncoderDim) + ")");
    }
    if (header.value("model_version", 0) != kModelVersion) throw Error(path.string() + ": unsupported model_version");

    Checkpoint c;
    c.user.params = UserModelParams::zeros(dim);
    c.user.adam.step = header.at("user_adam_step").get<std::int64_t>();
    const auto user_tensors = header.at("user_adam_tensors").get<std::size_t>();
    c.user.adam.m.resize(user_tensors);
    c.user.adam.v.resize(user_tensors);
    if (header.contains("qnet")) {
        const auto& q = header["qnet"];
        QNet net;
        net.online = QNetParams::zeros(q.at("slate_size").get<std::size_t>(), dim, q.at("hidden").get<std::size_t>());
        net.target = net.online;
        net.adam.step = q.at("adam_step").get<std::int64_t>();
        net.adam.m.resize(q.at("adam_tensors").get<std::size_t>());
        net.adam.v.resize(net.adam.m.size());
        c.qnet = std::move(net);
    }
    // Adam buffers take their sizes from the header before the layout is built.
    const auto& listed = header.at("arrays");
    for (const auto& entry : listed) {
        const auto name = entry.at("name").get<std::string>();
        const auto rows = entry.at("rows").get<std::size_t>();
        auto size_buffer = [&](const std::string& prefix, AdamState& adam) {
            if (name.rfind(prefix, 0) != 0) return;
            const char kind = name[prefix.size()];
            const auto idx = std::stoul(name.substr(prefix.size() + 1));
            if (idx >= adam.m.size()) throw Error(path.string() + ": bad optimizer tensor " + name);
            (kind == 'm' ? adam.m : adam.v)[idx].resize(rows);
        };
        size_buffer("user.adam.", c.user.adam);
        if (c.qnet) size_buffer("qnet.adam.", c.qnet->adam);
    }

    const auto arrays = layout(c);
    if (arrays.size() != listed.size()) throw Error(path.string() + ": array count mismatch");
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& a = arrays[i];
        if (listed[i].at("name") != a.name || listed[i].at("rows").get<std::int64_t>() != a.rows ||
            listed[i].at("cols").get<std::int64_t>() != a.cols) {
            throw Error(path.string() + ": unexpected array " + listed[i].dump());
        }
        in.read(reinterpret_cast<char*>(a.data), static_cast<std::streamsize>(a.rows * a.cols * sizeof(double)));
        if (!in) throw Error(path.string() + ": truncated array " + a.name);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(path.string() + ": trailing bytes");
    return c;
}

}  // namespace dqrank
