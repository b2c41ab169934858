#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace steerlab {

// Flat key=value configuration with dotted section keys (steering.k = 16).
// Every key is declared once in defaults(); setting an unknown key is a
// configuration error so typos die loudly instead of silently using a
// default. Values stay strings until read through a typed getter.
class Config {
  public:
    static Config defaults();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    // "key=value" as passed on a command line.
    void set_kv(const std::string& assignment);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_f64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_f64_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::string> get_str_list(const std::string& key) const;

    const std::map<std::string, std::string>& items() const { return kv_; }
    uint64_t fingerprint() const;  // hash of the canonical key=value text

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace steerlab
