#include "finmamba/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "finmamba/errors.hpp"

namespace finmamba {

void save_checkpoint(std::ostream& out, const ModelParams& params, const TrainConfig& config) {
    std::ostringstream cfg;
    write_config(cfg, config);
    std::size_t cfg_lines = 0;
    for (char c : cfg.str()) cfg_lines += c == '\n';
    out << "finmamba-checkpoint " << kCheckpointVersion << '\n';
    out << "config " << cfg_lines << '\n' << cfg.str();
    const auto names = params.names();
    const auto tensors = params.tensors();
    out << "tensors " << tensors.size() << '\n';
    char buf[64];
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Tensor& v = *tensors[t];
        out << names[t] << ' ' << v.rank();
        for (std::size_t d : v.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t e = 0; e < v.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%a", v[e]);
            out << (e ? " " : "") << buf;
        }
        out << '\n';
    }
}

void save_checkpoint_file(const std::string& path, const ModelParams& params, const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    save_checkpoint(out, params, config);
}

Checkpoint load_checkpoint(std::istream& in) {
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "finmamba-checkpoint")
        throw CheckpointError("not a checkpoint file");
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    std::size_t cfg_lines = 0;
    if (!(in >> tag >> cfg_lines) || tag != "config") throw CheckpointError("missing config block");
    std::string line;
    std::getline(in, line);
    std::ostringstream cfg;
    for (std::size_t k = 0; k < cfg_lines; ++k) {
        if (!std::getline(in, line)) throw CheckpointError("truncated config block");
        cfg << line << '\n';
    }
    std::istringstream cfg_in(cfg.str());
    TrainConfig config = parse_config(cfg_in);

    ModelParams params = ModelParams::init(config.model(), config.seed);
    const auto names = params.names();
    auto tensors = params.tensors();
    std::map<std::string, Tensor*> by_name;
    for (std::size_t t = 0; t < names.size(); ++t) by_name[names[t]] = tensors[t];

    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "tensors") throw CheckpointError("missing tensor block");
    if (count != tensors.size())
        throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(tensors.size()));
    for (std::size_t t = 0; t < count; ++t) {
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank)) throw CheckpointError("truncated tensor header");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape)
            if (!(in >> d)) throw CheckpointError("truncated shape for " + name);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("unknown tensor " + name);
        Tensor& dst = *it->second;
        if (dst.shape() != shape) throw CheckpointError("shape mismatch for " + name);
        std::string token;
        for (std::size_t e = 0; e < dst.size(); ++e) {
            if (!(in >> token)) throw CheckpointError("truncated values for " + name);
            char* end = nullptr;
            dst[e] = std::strtod(token.c_str(), &end);
            if (end != token.c_str() + token.size()) throw CheckpointError("bad value in " + name);
        }
        by_name.erase(it);
    }
    return Checkpoint{std::move(config), std::move(params)};
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("checkpoint not found: " + path);
    return load_checkpoint(in);
}

}  // namespace finmamba
