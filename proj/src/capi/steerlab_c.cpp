#include "steerlab/steerlab.h"

#include <cstring>
#include <functional>
#include <string>

#include "core/config.hpp"
#include "core/error.hpp"
#include "harness/report.hpp"
#include "harness/session.hpp"
#include "harness/sweep.hpp"
#include "model/lora.hpp"

struct slb_session {
    steerlab::Config cfg = steerlab::Config::defaults();
    std::string out_dir = "out";
    std::string err;
};

namespace {

int wrap(slb_session* s, const std::function<void()>& fn) {
    if (!s) return SLB_ERR;
    s->err.clear();
    try {
        fn();
        return SLB_OK;
    } catch (const steerlab::ConfigError& e) {
        s->err = e.what();
        return SLB_ERR_CONFIG;
    } catch (const steerlab::NumericError& e) {
        s->err = e.what();
        return SLB_ERR_NUMERIC;
    } catch (const steerlab::GateError& e) {
        s->err = e.what();
        return SLB_ERR_GATE;
    } catch (const std::exception& e) {
        s->err = e.what();
        return SLB_ERR;
    } catch (...) {
        s->err = "unknown error";
        return SLB_ERR;
    }
}

}  // namespace

extern "C" {

slb_session* slb_session_new(void) {
    try {
        return new slb_session();
    } catch (...) {
        return nullptr;
    }
}

void slb_session_free(slb_session* s) { delete s; }

int slb_load_config(slb_session* s, const char* path) {
    return wrap(s, [&] {
        if (!path) throw steerlab::ConfigError("null config path");
        s->cfg.load_file(path);
    });
}

int slb_set(slb_session* s, const char* key, const char* value) {
    return wrap(s, [&] {
        if (!key || !value) throw steerlab::ConfigError("null key or value");
        s->cfg.set(key, value);
    });
}

int slb_set_kv(slb_session* s, const char* assignment) {
    return wrap(s, [&] {
        if (!assignment) throw steerlab::ConfigError("null assignment");
        s->cfg.set_kv(assignment);
    });
}

int slb_get(const slb_session* s, const char* key, char* buf, size_t buflen) {
    // const session: report errors through the return code only.
    if (!s || !key || !buf || buflen == 0) return SLB_ERR;
    try {
        std::string v = s->cfg.get_str(key);
        size_t n = v.size() < buflen - 1 ? v.size() : buflen - 1;
        std::memcpy(buf, v.data(), n);
        buf[n] = '\0';
        return SLB_OK;
    } catch (const steerlab::ConfigError&) {
        buf[0] = '\0';
        return SLB_ERR_CONFIG;
    } catch (...) {
        buf[0] = '\0';
        return SLB_ERR;
    }
}

int slb_set_out_dir(slb_session* s, const char* dir) {
    return wrap(s, [&] {
        if (!dir || !*dir)
            throw steerlab::ConfigError("empty output directory");
        s->out_dir = dir;
    });
}

int slb_pretrain(slb_session* s) {
    return wrap(s, [&] { steerlab::cmd_pretrain(s->cfg, s->out_dir); });
}

int slb_train_adapter(slb_session* s, const char* kind) {
    return wrap(s, [&] {
        if (!kind) throw steerlab::ConfigError("null adapter kind");
        steerlab::cmd_train_adapter(s->cfg, s->out_dir, kind);
    });
}

int slb_sweep(slb_session* s, const char* kind) {
    return wrap(s, [&] {
        if (!kind) throw steerlab::ConfigError("null sweep kind");
        steerlab::run_sweep(s->cfg, s->out_dir, kind);
    });
}

int slb_k_sweep(slb_session* s) {
    return wrap(s, [&] { steerlab::run_k_sweep(s->cfg, s->out_dir); });
}

int slb_report(slb_session* s) {
    return wrap(s, [&] { steerlab::cmd_report(s->cfg, s->out_dir); });
}

int slb_compare(slb_session* s) {
    return wrap(s, [&] { steerlab::cmd_compare(s->cfg, s->out_dir); });
}

int slb_bench(slb_session* s) {
    return wrap(s, [&] { steerlab::cmd_bench(s->cfg, s->out_dir); });
}

int slb_selftest(slb_session* s) {
    return wrap(s, [&] { steerlab::cmd_selftest(s->cfg); });
}

int slb_lora_multiplier_for_effective(slb_session* s, double eff,
                                      double* out) {
    return wrap(s, [&] {
        if (!out) throw steerlab::ConfigError("null output pointer");
        steerlab::LoraConfig lc = steerlab::lora_config_from(s->cfg);
        *out = steerlab::multiplier_for_effective(eff, lc.alpha, lc.rank,
                                                  lc.mode);
    });
}

const char* slb_last_error(const slb_session* s) {
    return s ? s->err.c_str() : "null session";
}

const char* slb_version(void) { return "steerlab 1.0.0"; }

}  // extern "C"
