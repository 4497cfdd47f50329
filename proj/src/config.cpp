#include "gd/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gd {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    Config c;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                                     ": expected key=value, got '" + line + "'");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void Config::apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("config override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

std::string Config::get_string(const std::string& key, const std::string& def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_[key] = def;
        return def;
    }
    return it->second;
}

int Config::get_int(const std::string& key, int def) {
    return static_cast<int>(get_i64(key, def));
}

std::int64_t Config::get_i64(const std::string& key, std::int64_t def) {
    const std::string s = get_string(key, std::to_string(def));
    try {
        size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + "=" + s + " is not an integer");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) {
    const std::string s = get_string(key, std::to_string(def));
    try {
        size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + "=" + s + " is not an unsigned integer");
    }
}

Real Config::get_real(const std::string& key, Real def) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", def);
    const std::string s = get_string(key, buf);
    try {
        size_t pos = 0;
        const Real v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + "=" + s + " is not a number");
    }
}

bool Config::get_bool(const std::string& key, bool def) {
    const std::string s = get_string(key, def ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config: " + key + "=" + s + " is not a boolean");
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::string Config::hash_hex() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : canonical()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void Config::check_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
        if (!known.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
}

const std::set<std::string>& known_run_keys() {
    static const std::set<std::string> keys = {
        "data.path",
        "train.epochs",
        "train.batch_size",
        "train.lr",
        "train.warmup_epochs",
        "train.weight_decay",
        "train.seed",
        "train.eval_every",
        "train.early_stop_patience",
        "train.baseline",
        "model.hidden_dim",
        "model.num_layers",
        "model.heads",
        "model.k",
        "model.dropout",
        "model.attention_dropout",
        "model.weighted_adjacency",
        "model.positional_attention",
        "model.self_edge_encoding",
        "model.edge_ffn",
        "model.share_w_p",
        "model.norm_type",
        "model.ffn_hidden",
        "model.edge_ffn_hidden",
        "model.edge_ffn_layers",
        "model.input_dim",
        "model.num_classes",
    };
    return keys;
}

TrainConfig train_config_from(Config& config) {
    TrainConfig tc;
    tc.epochs = config.get_int("train.epochs", tc.epochs);
    tc.batch_size = config.get_int("train.batch_size", tc.batch_size);
    tc.base_lr = config.get_real("train.lr", tc.base_lr);
    tc.warmup_epochs = config.get_int("train.warmup_epochs", tc.warmup_epochs);
    tc.weight_decay = config.get_real("train.weight_decay", tc.weight_decay);
    tc.seed = config.get_u64("train.seed", tc.seed);
    tc.eval_every = config.get_int("train.eval_every", tc.eval_every);
    tc.early_stop_patience = config.get_int("train.early_stop_patience", tc.early_stop_patience);
    const std::string baseline = config.get_string("train.baseline", "diffuser");
    if (baseline == "diffuser")
        tc.baseline_mode = BaselineMode::diffuser;
    else if (baseline == "vanilla_transformer" || baseline == "vanilla")
        tc.baseline_mode = BaselineMode::vanilla_transformer;
    else
        throw std::invalid_argument("config: train.baseline=" + baseline +
                                    " (want diffuser or vanilla_transformer)");

    DiffuserConfig& mc = tc.model;
    mc.hidden_dim = config.get_int("model.hidden_dim", mc.hidden_dim);
    mc.num_layers = config.get_int("model.num_layers", mc.num_layers);
    mc.heads = config.get_int("model.heads", mc.heads);
    mc.k = config.get_int("model.k", mc.k);
    mc.dropout = config.get_real("model.dropout", mc.dropout);
    mc.attention_dropout = config.get_real("model.attention_dropout", mc.attention_dropout);
    mc.use_weighted_adjacency = config.get_bool("model.weighted_adjacency", mc.use_weighted_adjacency);
    mc.use_positional_attention =
        config.get_bool("model.positional_attention", mc.use_positional_attention);
    mc.use_self_edge_encoding =
        config.get_bool("model.self_edge_encoding", mc.use_self_edge_encoding);
    mc.use_edge_ffn = config.get_bool("model.edge_ffn", mc.use_edge_ffn);
    mc.share_w_p = config.get_bool("model.share_w_p", mc.share_w_p);
    mc.norm_type = config.get_string("model.norm_type", mc.norm_type);
    mc.ffn_hidden = config.get_int("model.ffn_hidden", mc.ffn_hidden);
    mc.edge_ffn_hidden = config.get_int("model.edge_ffn_hidden", mc.edge_ffn_hidden);
    mc.edge_ffn_layers = config.get_int("model.edge_ffn_layers", mc.edge_ffn_layers);
    mc.input_dim = config.get_int("model.input_dim", 0);
    mc.num_classes = config.get_int("model.num_classes", 0);
    return tc;
}

}  // namespace gd
