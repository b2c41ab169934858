// Command-line front end. Everything goes through the C API in
// steerlab/steerlab.h; this translation unit never sees the C++ core.
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "steerlab/steerlab.h"

namespace {

struct SessionDeleter {
    void operator()(slb_session* s) const { slb_session_free(s); }
};

int fail(slb_session* s, int rc) {
    std::fprintf(stderr, "error: %s\n", slb_last_error(s));
    return rc;
}

int run_stage(const char* name, int rc) {
    std::printf("[%s] %s\n", name, rc == SLB_OK ? "ok" : "failed");
    std::fflush(stdout);
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steerlab: activation steering laboratory for a frozen "
                 "diffusion backbone"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> sets;
    const char* env_out = std::getenv("STEERLAB_OUT");
    out_dir = env_out && *env_out ? env_out : "out";
    app.add_option("--config", config_path, "config file (key = value lines)");
    app.add_option("--set", sets, "override, key=value (repeatable)")
        ->take_all();
    app.add_option("--out", out_dir,
                   "output directory (default $STEERLAB_OUT or ./out)");

    // Convenience spellings for the common knobs; applied after --set.
    double scale = 0, gate_center = 0, gate_steepness = 0, alpha = 0,
           multiplier = 0, eff_scale = 0;
    int seed = 0, k = 0, rank = 0;
    std::string placement, scaling_mode;
    auto* o_seed = app.add_option("--seed", seed, "seed");
    auto* o_scale = app.add_option("--scale", scale, "steering.scale");
    auto* o_k = app.add_option("--k", k, "steering.k");
    auto* o_pl = app.add_option("--placement", placement, "steering.placement");
    auto* o_gc = app.add_option("--gate-center", gate_center,
                                "steering.gate_center");
    auto* o_gs = app.add_option("--gate-steepness", gate_steepness,
                                "steering.gate_steepness");
    auto* o_rank = app.add_option("--rank", rank, "lora.rank");
    auto* o_alpha = app.add_option("--alpha", alpha, "lora.alpha");
    auto* o_mult = app.add_option("--multiplier", multiplier,
                                  "lora.multiplier");
    auto* o_mode = app.add_option("--scaling-mode", scaling_mode,
                                  "lora.mode: standard|rank_stabilized");
    auto* o_eff = app.add_option(
        "--eff-scale", eff_scale,
        "set lora.multiplier to reach this effective scale under the "
        "current rank/alpha/mode");

    std::string adapter_kind, sweep_kind;
    auto* sub_self = app.add_subcommand("selftest",
                                        "fast numeric + container checks");
    auto* sub_pre = app.add_subcommand("pretrain",
                                       "train and freeze the backbone");
    auto* sub_ta = app.add_subcommand("train-adapter",
                                      "train one adapter against the frozen "
                                      "backbone");
    sub_ta->add_option("kind", adapter_kind,
                       "steering|lora|rslora|rank1|sidebranch")
        ->required();
    auto* sub_sw = app.add_subcommand("sweep",
                                      "evaluate a trained adapter over its "
                                      "knob grid");
    sub_sw->add_option("kind", sweep_kind,
                       "steering|lora|rslora|rank1|sidebranch")
        ->required();
    auto* sub_ksw = app.add_subcommand("k-sweep",
                                       "train + sweep steering at every "
                                       "eval.k_grid width");
    auto* sub_rep = app.add_subcommand("report",
                                       "assemble results.json/csv, plots, "
                                       "summary.md");
    auto* sub_cmp = app.add_subcommand("compare",
                                       "matched-operating-point comparison "
                                       "vs baselines");
    auto* sub_bench = app.add_subcommand("bench",
                                         "median sampling latency per "
                                         "configuration");
    auto* sub_pipe = app.add_subcommand("pipeline",
                                        "pretrain, all adapters, all sweeps, "
                                        "report, compare, bench");
    auto* sub_ver = app.add_subcommand("version", "print library version");

    CLI11_PARSE(app, argc, argv);

    if (sub_ver->parsed()) {
        std::printf("%s\n", slb_version());
        return 0;
    }

    std::unique_ptr<slb_session, SessionDeleter> sess(slb_session_new());
    if (!sess) {
        std::fprintf(stderr, "error: cannot allocate session\n");
        return SLB_ERR;
    }
    slb_session* s = sess.get();

    if (int rc = slb_set_out_dir(s, out_dir.c_str())) return fail(s, rc);
    if (!config_path.empty())
        if (int rc = slb_load_config(s, config_path.c_str()))
            return fail(s, rc);
    for (const auto& kv : sets)
        if (int rc = slb_set_kv(s, kv.c_str())) return fail(s, rc);

    auto set_if = [&](CLI::Option* o, const char* key,
                      const std::string& v) -> int {
        if (o->count() == 0) return SLB_OK;
        return slb_set(s, key, v.c_str());
    };
    if (int rc = set_if(o_seed, "seed", std::to_string(seed)))
        return fail(s, rc);
    if (int rc = set_if(o_scale, "steering.scale", std::to_string(scale)))
        return fail(s, rc);
    if (int rc = set_if(o_k, "steering.k", std::to_string(k)))
        return fail(s, rc);
    if (int rc = set_if(o_pl, "steering.placement", placement))
        return fail(s, rc);
    if (int rc = set_if(o_gc, "steering.gate_center",
                        std::to_string(gate_center)))
        return fail(s, rc);
    if (int rc = set_if(o_gs, "steering.gate_steepness",
                        std::to_string(gate_steepness)))
        return fail(s, rc);
    if (int rc = set_if(o_rank, "lora.rank", std::to_string(rank)))
        return fail(s, rc);
    if (int rc = set_if(o_alpha, "lora.alpha", std::to_string(alpha)))
        return fail(s, rc);
    if (int rc = set_if(o_mult, "lora.multiplier", std::to_string(multiplier)))
        return fail(s, rc);
    if (int rc = set_if(o_mode, "lora.mode", scaling_mode))
        return fail(s, rc);
    if (o_eff->count() > 0) {
        double m = 0;
        if (int rc = slb_lora_multiplier_for_effective(s, eff_scale, &m))
            return fail(s, rc);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", m);
        if (int rc = slb_set(s, "lora.multiplier", buf)) return fail(s, rc);
    }

    if (sub_self->parsed()) {
        if (int rc = slb_selftest(s)) return fail(s, rc);
        std::printf("selftest ok\n");
        return 0;
    }
    if (sub_pre->parsed()) {
        if (int rc = slb_pretrain(s)) return fail(s, rc);
        return 0;
    }
    if (sub_ta->parsed()) {
        if (int rc = slb_train_adapter(s, adapter_kind.c_str()))
            return fail(s, rc);
        return 0;
    }
    if (sub_sw->parsed()) {
        if (int rc = slb_sweep(s, sweep_kind.c_str())) return fail(s, rc);
        return 0;
    }
    if (sub_ksw->parsed()) {
        if (int rc = slb_k_sweep(s)) return fail(s, rc);
        return 0;
    }
    if (sub_rep->parsed()) {
        if (int rc = slb_report(s)) return fail(s, rc);
        return 0;
    }
    if (sub_cmp->parsed()) {
        if (int rc = slb_compare(s)) return fail(s, rc);
        return 0;
    }
    if (sub_bench->parsed()) {
        if (int rc = slb_bench(s)) return fail(s, rc);
        return 0;
    }
    if (sub_pipe->parsed()) {
        if (int rc = run_stage("selftest", slb_selftest(s)))
            return fail(s, rc);
        if (int rc = run_stage("pretrain", slb_pretrain(s)))
            return fail(s, rc);
        static const char* kinds[] = {"steering", "lora", "rslora",
                                      "sidebranch", "rank1"};
        for (const char* kd : kinds) {
            std::string label = std::string("train-adapter ") + kd;
            if (int rc = run_stage(label.c_str(), slb_train_adapter(s, kd)))
                return fail(s, rc);
        }
        for (const char* kd : kinds) {
            std::string label = std::string("sweep ") + kd;
            if (int rc = run_stage(label.c_str(), slb_sweep(s, kd)))
                return fail(s, rc);
        }
        if (int rc = run_stage("k-sweep", slb_k_sweep(s)))
            return fail(s, rc);
        if (int rc = run_stage("report", slb_report(s))) return fail(s, rc);
        if (int rc = run_stage("compare", slb_compare(s)))
            return fail(s, rc);
        if (int rc = run_stage("bench", slb_bench(s))) return fail(s, rc);
        return 0;
    }
    return 0;
}
