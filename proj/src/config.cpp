#include "finmamba/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "finmamba/errors.hpp"

namespace finmamba {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field numeric(T TrainConfig::*member) {
    return Field{[member](TrainConfig& c, const std::string& k, const std::string& v) {
                     c.*member = parse_value<T>(k, v);
                 },
                 [member](const TrainConfig& c) {
                     if constexpr (std::is_floating_point_v<T>)
                         return format_double(c.*member);
                     else
                         return std::to_string(c.*member);
                 }};
}

Field text(std::string TrainConfig::*member) {
    return Field{[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
                 [member](const TrainConfig& c) { return c.*member; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"lookback", numeric(&TrainConfig::lookback)},
        {"learning_rate", numeric(&TrainConfig::learning_rate)},
        {"epochs", numeric(&TrainConfig::epochs)},
        {"seed", numeric(&TrainConfig::seed)},
        {"eta", numeric(&TrainConfig::eta)},
        {"lambda", numeric(&TrainConfig::lambda)},
        {"lambda_kappa", numeric(&TrainConfig::lambda_kappa)},
        {"tau", numeric(&TrainConfig::tau)},
        {"delta1", numeric(&TrainConfig::delta1)},
        {"delta2", numeric(&TrainConfig::delta2)},
        {"levels", numeric(&TrainConfig::levels)},
        {"heads", numeric(&TrainConfig::heads)},
        {"gnn_layers", numeric(&TrainConfig::gnn_layers)},
        {"d_model", numeric(&TrainConfig::d_model)},
        {"d_out", numeric(&TrainConfig::d_out)},
        {"d_state", numeric(&TrainConfig::d_state)},
        {"sparsifier_channels", numeric(&TrainConfig::sparsifier_channels)},
        {"patience", numeric(&TrainConfig::patience)},
        {"batch_days", numeric(&TrainConfig::batch_days)},
        {"beta1", numeric(&TrainConfig::beta1)},
        {"beta2", numeric(&TrainConfig::beta2)},
        {"adam_eps", numeric(&TrainConfig::adam_eps)},
        {"grad_clip", numeric(&TrainConfig::grad_clip)},
        {"train_end", text(&TrainConfig::train_end)},
        {"valid_end", text(&TrainConfig::valid_end)},
        {"top_k", numeric(&TrainConfig::top_k)},
        {"execution", text(&TrainConfig::execution)},
    };
    return table;
}

}  // namespace

ModelConfig TrainConfig::model() const {
    ModelConfig m;
    m.heads = heads;
    m.gnn_layers = gnn_layers;
    m.sparsifier_channels = sparsifier_channels;
    m.tau = tau;
    m.mamba = MambaConfig{levels, d_model, d_out, d_state};
    return m;
}

LossSettings TrainConfig::loss() const { return LossSettings{LossWeights{eta, lambda}, lambda_kappa}; }

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(lookback >= 5, "lookback must be >= 5 (largest sparsifier kernel)");
    require(learning_rate >= 0.0, "learning_rate must be >= 0");
    require(epochs >= 1, "epochs must be >= 1");
    require(eta >= 0.0 && lambda >= 0.0 && lambda_kappa >= 0.0, "loss weights must be >= 0");
    require(tau > 0.0, "tau must be > 0");
    require(delta2 >= 0.0 && delta2 <= delta1 && delta1 <= 1.0, "need 0 <= delta2 <= delta1 <= 1");
    require(levels >= 1 && heads >= 1 && gnn_layers >= 1, "levels, heads and gnn_layers must be >= 1");
    require(d_model >= 1 && d_out >= 1 && d_state >= 1 && sparsifier_channels >= 1, "model widths must be >= 1");
    require(batch_days >= 1, "batch_days must be >= 1");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0, "bad Adam constants");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(top_k >= 1, "top_k must be >= 1");
    require(execution == "close" || execution == "open", "execution must be 'close' or 'open'");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : fields()) out.push_back(k);
    return out;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
    for (const auto& [k, field] : fields())
        if (k == key) {
            field.set(config, key, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.validate();
    return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const TrainConfig& config) {
    for (const auto& [k, field] : fields()) out << k << " = " << field.get(config) << '\n';
}

}  // namespace finmamba
