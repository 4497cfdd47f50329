#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "gd/train.hpp"

namespace gd {

// Flat key=value configuration with dotted keys ("model.hidden_dim=32").
// '#' starts a comment; blank lines are ignored. Overrides apply after file
// parsing. Getters with a default materialize the default into the map, so
// the echoed configuration pins every knob of the run.
class Config {
public:
    Config() = default;
    static Config from_file(const std::string& path);  // std::runtime_error on IO failure

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void apply_override(const std::string& kv);  // "key=value", std::invalid_argument otherwise
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& def);
    int get_int(const std::string& key, int def);
    std::int64_t get_i64(const std::string& key, std::int64_t def);
    std::uint64_t get_u64(const std::string& key, std::uint64_t def);
    Real get_real(const std::string& key, Real def);
    bool get_bool(const std::string& key, bool def);

    const std::map<std::string, std::string>& values() const { return values_; }

    // Sorted "key=value" lines; the canonical serialization hashed below.
    std::string canonical() const;
    // FNV-1a 64 of canonical(), as 16 hex digits. Names run directories.
    std::string hash_hex() const;

    // Rejects keys outside `known` (std::invalid_argument names the key).
    void check_known(const std::set<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

// Keys consumed by train_config_from, plus data/output plumbing.
const std::set<std::string>& known_run_keys();

// Materializes a TrainConfig (defaults included) from a Config. input_dim and
// num_classes stay 0 unless overridden; the caller fills them from the
// dataset manifest.
TrainConfig train_config_from(Config& config);

}  // namespace gd
