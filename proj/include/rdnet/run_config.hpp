#pragma once

// Flat key=value run configuration. '#' starts a comment; blank lines are
// ignored; unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rdnet/losses.hpp"
#include "rdnet/model.hpp"
#include "rdnet/param_store.hpp"

namespace rdnet {

struct RunConfig {
    ModelConfig model{};
    RmspropConfig optim{};
    LossOptions loss{};
    std::size_t steps = 300;
    std::filesystem::path data_dir = "data";
    std::filesystem::path out_dir = "runs/toy";
    std::size_t checkpoint_every = 100;
    bool augment = true;
    std::filesystem::path resume;  // empty: start fresh

    /// Every key with its current value, in a fixed order.
    std::string to_text() const;
};

namespace config_detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline Field size_field(std::size_t RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<std::size_t>(k, v); },
            [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

template <class Member>
Field model_size_field(Member ModelConfig::*m) {
    return {[m](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.*m = parse_number<std::size_t>(k, v);
            },
            [m](const RunConfig& c) { return std::to_string(c.model.*m); }};
}

template <class Owner>
Field double_field(Owner RunConfig::*owner, double Owner::*m) {
    return {[owner, m](RunConfig& c, const std::string& k, const std::string& v) {
                (c.*owner).*m = parse_number<double>(k, v);
            },
            [owner, m](const RunConfig& c) { return fmt_double((c.*owner).*m); }};
}

inline const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              c.model.seed = parse_number<std::uint64_t>(k, v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.seed); }}},
        {"steps", size_field(&RunConfig::steps)},
        {"data_dir",
         {[](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
          [](const RunConfig& c) { return c.data_dir.string(); }}},
        {"out_dir",
         {[](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
          [](const RunConfig& c) { return c.out_dir.string(); }}},
        {"model.input_size", model_size_field(&ModelConfig::input_size)},
        {"model.batch", model_size_field(&ModelConfig::batch)},
        {"model.channels",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              std::array<std::size_t, 5> ch{};
              std::stringstream ss(v);
              std::string item;
              std::size_t i = 0;
              while (std::getline(ss, item, ',')) {
                  if (i == ch.size()) throw ConfigError("config key '" + k + "': expected 5 comma-separated widths");
                  ch[i++] = parse_number<std::size_t>(k, trim(item));
              }
              if (i != ch.size()) throw ConfigError("config key '" + k + "': expected 5 comma-separated widths");
              c.model.channels = ch;
          },
          [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.model.channels.size(); ++i)
                  s += (i ? "," : "") + std::to_string(c.model.channels[i]);
              return s;
          }}},
        {"fce.common_channels", model_size_field(&ModelConfig::common_channels)},
        {"rpl.reduction_ratio", model_size_field(&ModelConfig::reduction_ratio)},
        {"rpl.cross_gating",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.cross_gating = parse_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.model.cross_gating ? "true" : "false"); }}},
        {"pg.hidden", model_size_field(&ModelConfig::pg_hidden)},
        {"bins.lo",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.bins.lo = parse_number<double>(k, v); },
          [](const RunConfig& c) { return fmt_double(c.model.bins.lo); }}},
        {"bins.hi",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.bins.hi = parse_number<double>(k, v); },
          [](const RunConfig& c) { return fmt_double(c.model.bins.hi); }}},
        {"dad.train_gate",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "gt") c.model.train_gate = TrainGate::GroundTruth;
              else if (v == "predicted") c.model.train_gate = TrainGate::Predicted;
              else throw ConfigError("config key '" + k + "': expected gt or predicted, got '" + v + "'");
          },
          [](const RunConfig& c) {
              return std::string(c.model.train_gate == TrainGate::GroundTruth ? "gt" : "predicted");
          }}},
        {"loss.beta2", double_field(&RunConfig::loss, &LossOptions::beta2)},
        {"loss.eps", double_field(&RunConfig::loss, &LossOptions::eps)},
        {"optim.lr", double_field(&RunConfig::optim, &RmspropConfig::lr)},
        {"optim.momentum", double_field(&RunConfig::optim, &RmspropConfig::momentum)},
        {"optim.decay", double_field(&RunConfig::optim, &RmspropConfig::decay)},
        {"optim.eps", double_field(&RunConfig::optim, &RmspropConfig::eps)},
        {"train.checkpoint_every", size_field(&RunConfig::checkpoint_every)},
        {"train.augment",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.augment = parse_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.augment ? "true" : "false"); }}},
        {"train.resume",
         {[](RunConfig& c, const std::string&, const std::string& v) { c.resume = v; },
          [](const RunConfig& c) { return c.resume.string(); }}},
    };
    return table;
}

}  // namespace config_detail

inline std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [key, field] : config_detail::fields()) out += key + " = " + field.get(*this) + "\n";
    return out;
}

/// Parses config text. `source` names the file in diagnostics.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>") {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
        const std::string key = config_detail::trim(line.substr(0, eq));
        const std::string value = config_detail::trim(line.substr(eq + 1));
        const auto& table = config_detail::fields();
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& kv) { return kv.first == key; });
        if (it == table.end()) throw ConfigError(where + ": unknown config key '" + key + "'");
        if (seen.contains(key))
            throw ConfigError(where + ": duplicate config key '" + key + "' (first set on line " +
                              std::to_string(seen[key]) + ")");
        seen[key] = lineno;
        try {
            it->second.set(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    try {
        cfg.model.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), path.string());
}

}  // namespace rdnet
