#include "imitate/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>

#include "imitate/io.hpp"

namespace imitate::unet {

namespace {
constexpr char kMagic[8] = {'I', 'M', 'C', 'K', 'P', 'T', '0', '1'};
}

nlohmann::json model_config_json(const ModelConfig& c) {
    return {{"n_inputs", c.n_inputs},
            {"depth", c.depth},
            {"channels", c.channels},
            {"embed_dim", c.embed_dim},
            {"use_attention_gates", c.use_attention_gates},
            {"head_init_scale", c.head_init_scale},
            {"with_fixed", c.with_fixed},
            {"conditioned", c.conditioned}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_inputs = j.at("n_inputs").get<int>();
    c.depth = j.at("depth").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.use_attention_gates = j.at("use_attention_gates").get<bool>();
    c.head_init_scale = j.at("head_init_scale").get<double>();
    c.with_fixed = j.at("with_fixed").get<bool>();
    c.conditioned = j.at("conditioned").get<bool>();
    c.validate();
    return c;
}

void save_checkpoint(const CondUNet& net, const std::string& path,
                     const std::string& train_config_hash) {
    nlohmann::json header;
    header["model"] = model_config_json(net.config);
    header["train_config_hash"] = train_config_hash;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& name : net.params.names()) {
        table.push_back({{"name", name}, {"shape", net.params.get(name).shape()}});
    }
    header["params"] = table;
    std::string hs = header.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out.write(kMagic, 8);
        uint64_t len = hs.size();
        out.write(reinterpret_cast<const char*>(&len), 8);
        out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& name : net.params.names()) {
            const Tensor& t = net.params.get(name);
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);

    nlohmann::json sidecar;
    sidecar["model"] = model_config_json(net.config);
    sidecar["train_config_hash"] = train_config_hash;
    sidecar["parameter_count"] = net.params.names().size();
    io::atomic_write(path + ".model.json", sidecar.dump(2) + "\n");
}

CondUNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("not a checkpoint file: " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    CondUNet net;
    net.config = model_config_from_json(header.at("model"));
    for (const auto& entry : header.at("params")) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
        net.params.add(name, std::move(t));
    }
    return net;
}

}  // namespace imitate::unet
