#include "core/config.hpp"

#include <fstream>
#include <sstream>

#include "core/checkpoint.hpp"
#include "core/error.hpp"

namespace steerlab {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
    Config c;
    auto& kv = c.kv_;
    kv["seed"] = "42";

    kv["unet.image_size"] = "32";
    kv["unet.base_channels"] = "32";
    kv["unet.channel_mult"] = "1,2";
    kv["unet.blocks_per_level"] = "2";
    kv["unet.groups"] = "8";
    kv["unet.cond_dim"] = "32";
    kv["unet.time_dim"] = "64";

    kv["sched.timesteps"] = "1000";
    kv["sched.beta_start"] = "1e-4";
    kv["sched.beta_end"] = "0.02";

    kv["sampler.steps"] = "30";
    kv["sampler.guidance"] = "7.5";
    kv["sampler.eta"] = "0";

    kv["steering.k"] = "16";
    kv["steering.placement"] = "mid,up";
    kv["steering.gate_center"] = "0.5";
    kv["steering.gate_steepness"] = "10";
    kv["steering.scale"] = "1.0";

    kv["lora.rank"] = "2";
    kv["lora.alpha"] = "4";
    kv["lora.mode"] = "standard";  // or rank_stabilized
    kv["lora.multiplier"] = "1.0";

    kv["rank1.alpha"] = "1.0";
    kv["sidebranch.multiplier"] = "1.0";

    kv["corpus.pretrain"] = "512";
    kv["corpus.per_style"] = "256";
    kv["corpus.style_ref"] = "32";
    kv["corpus.feat_train"] = "512";
    kv["corpus.target_style"] = "3";  // sepia

    kv["train.pretrain_steps"] = "3000";
    kv["train.adapter_steps"] = "1000";
    kv["train.batch"] = "4";
    kv["train.pretrain_lr"] = "2e-3";
    kv["train.adapter_lr"] = "1e-3";
    kv["train.weight_decay"] = "0.01";
    kv["train.adapter_weight_decay"] = "0.0";
    kv["train.clip_norm"] = "1.0";
    kv["train.cond_dropout"] = "0.1";

    kv["feat.dim"] = "64";
    kv["feat.steps"] = "800";
    kv["feat.batch"] = "16";
    kv["feat.lr"] = "2e-3";
    kv["feat.accuracy_gate"] = "0.9";
    kv["feat.holdout"] = "64";

    kv["eval.prompts"] = "20";
    kv["eval.seeds"] = "3";
    kv["eval.scales"] = "0,0.25,0.5,0.75,1.0,1.25,1.5";
    kv["eval.k_grid"] = "4,8,16";
    kv["eval.multipliers"] = "0,0.25,0.5,0.75,1.0,1.5";
    kv["eval.eff_grid"] = "0,0.25,0.5,0.75,1.0,1.25,1.5";
    kv["eval.rank1_alphas"] = "0,0.5,1,2,4,8";
    kv["eval.match_tol"] = "0.01";
    kv["eval.perm_shuffles"] = "10000";

    kv["bench.calls"] = "50";
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = kv_.find(key);
    if (it == kv_.end())
        throw ConfigError("unknown config key: " + key);
    it->second = value;
}

void Config::set_kv(const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("expected key=value, got: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key = value");
        set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

int Config::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t used = 0;
        int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not an integer: " + v);
    }
}

double Config::get_f64(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t used = 0;
        double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: " + v);
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string v = get_str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": not a boolean: " + v);
}

std::vector<std::string> Config::get_str_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get_str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<double> Config::get_f64_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_str_list(key)) {
        try {
            out.push_back(std::stod(s));
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": bad list element: " + s);
        }
    }
    return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& s : get_str_list(key)) {
        try {
            out.push_back(std::stoi(s));
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": bad list element: " + s);
        }
    }
    return out;
}

uint64_t Config::fingerprint() const {
    std::string text;
    for (const auto& [k, v] : kv_) {
        text += k;
        text += '=';
        text += v;
        text += '\n';
    }
    return fnv1a(text.data(), text.size());
}

}  // namespace steerlab
