#include "harness/sweep.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/ops.hpp"
#include "harness/session.hpp"
#include "json.hpp"

namespace steerlab {

namespace {

struct AdapterRig {
    std::string tag;                         // row label
    AdapterSet adapters;
    WeightTransform* wt = nullptr;
    std::vector<double> grid;                // knob values
    std::function<void(double)> set_knob;
    std::function<double(double)> eff_of;    // knob -> effective scale
    std::string knob_name;
    int64_t params = 0;
};

nlohmann::json rows_to_json(const std::vector<TradeoffPoint>& rows,
                            const std::map<std::string, std::string>& meta) {
    nlohmann::json out;
    out["adapter"] = meta.at("adapter");
    nlohmann::json jmeta = nlohmann::json::object();
    for (const auto& [k, v] : meta) jmeta[k] = v;
    out["meta"] = jmeta;
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j;
        j["adapter"] = r.adapter;
        j["knob"] = r.knob;
        j["eff"] = r.eff;
        j["prompt_index"] = r.prompt_index;
        j["content_id"] = r.content_id;
        j["seed"] = r.seed;
        j["clip_i"] = r.clip_i;
        j["clip_t"] = r.clip_t;
        j["style_shift"] = r.style_shift;
        j["inv_stab"] = r.inv_stab;
        j["struct_dist"] = r.struct_dist;
        j["backbone_hash"] = meta.at("backbone_hash");
        j["adapter_hash"] = meta.at("adapter_hash");
        j["extractor_hash"] = meta.at("extractor_hash");
        jrows.push_back(j);
    }
    out["rows"] = jrows;
    return out;
}

void sort_rows(std::vector<TradeoffPoint>& rows) {
    std::sort(rows.begin(), rows.end(),
              [](const TradeoffPoint& a, const TradeoffPoint& b) {
                  if (a.adapter != b.adapter) return a.adapter < b.adapter;
                  if (a.knob != b.knob) return a.knob < b.knob;
                  if (a.seed != b.seed) return a.seed < b.seed;
                  return a.prompt_index < b.prompt_index;
              });
}

SweepOutput sweep_rig(const Config& cfg, const std::string& out_dir,
                      Backbone& bb, FeatureExtractor& fext,
                      const Prototypes& proto, AdapterRig& rig,
                      const std::string& adapter_hash) {
    NoiseSchedule sched = schedule_from(cfg);
    SamplerConfig samp = sampler_config_from(cfg);
    SamplerConfig inv_samp = samp;
    inv_samp.guidance = 1.0;  // inversion protocol: no CFG
    uint64_t seed0 = uint64_t(cfg.get_int("seed"));
    int n_prompts = cfg.get_int("eval.prompts");
    int n_seeds = cfg.get_int("eval.seeds");
    if (rig.grid.empty()) throw ConfigError("sweep: empty knob grid");

    UNetEps base_model;
    base_model.net = bb.net.get();
    UNetEps rig_model;
    rig_model.net = bb.net.get();
    rig_model.adapters = rig.adapters;
    rig_model.wt = rig.wt;

    Tensor c_null = bb.table.null_embed();
    std::vector<TradeoffPoint> rows;
    for (int sd = 0; sd < n_seeds; ++sd) {
        for (int pi = 0; pi < n_prompts; ++pi) {
            PromptSpec spec{pi % kNumContents, 0};
            Tensor c = bb.table.embed(spec);
            Rng zr = Rng::derive(Rng::mix(seed0 ^ Rng::mix(0x5eedull + uint64_t(sd))),
                                 100 + uint64_t(pi));
            Tensor z = Tensor::zeros(
                {1, 3, bb.ucfg.image_size, bb.ucfg.image_size});
            zr.fill_normal(z.data(), size_t(z.numel()));

            SampleResult base = ddim_sample(base_model, c, c_null, samp, z, sched);
            for (double g : rig.grid) {
                rig.set_knob(g);
                SampleResult st = ddim_sample(rig_model, c, c_null, samp, z, sched);
                TradeoffPoint p;
                p.adapter = rig.tag;
                p.knob = g;
                p.eff = rig.eff_of(g);
                p.prompt_index = pi;
                p.content_id = spec.content_id;
                p.seed = sd;
                p.clip_i = clip_i_proxy(fext, st.image, base.image);
                p.clip_t = clip_t_proxy(fext, st.image, spec.content_id, proto);
                p.style_shift =
                    style_shift_proxy(fext, st.image, base.image, proto);
                p.struct_dist = struct_dist_proxy(fext, st.image, base.image);
                Tensor zhat =
                    ddim_invert(base_model, st.image, c, inv_samp, sched);
                p.inv_stab = inv_stab(z, zhat);
                rows.push_back(p);
            }
        }
    }
    sort_rows(rows);

    SweepOutput out;
    out.adapter = rig.tag;
    out.rows = std::move(rows);
    out.meta["adapter"] = rig.tag;
    out.meta["knob"] = rig.knob_name;
    out.meta["backbone_hash"] = bb.hash;
    out.meta["adapter_hash"] = adapter_hash;
    out.meta["extractor_hash"] = hash_hex(hash_file(extractor_path(out_dir)));
    out.meta["trained_params"] = std::to_string(rig.params);
    out.meta["adapter_steps"] = cfg.get_str("train.adapter_steps");
    out.meta["batch"] = cfg.get_str("train.batch");
    out.meta["adapter_lr"] = cfg.get_str("train.adapter_lr");
    out.meta["sampler_steps"] = cfg.get_str("sampler.steps");
    out.meta["guidance"] = cfg.get_str("sampler.guidance");
    out.meta["eval_prompts"] = std::to_string(n_prompts);
    out.meta["eval_seeds"] = std::to_string(n_seeds);

    nlohmann::json doc = rows_to_json(out.rows, out.meta);
    std::ofstream f(out_dir + "/sweep_" + rig.tag + ".json", std::ios::binary);
    if (!f) throw IoError("cannot write sweep fragment for " + rig.tag);
    f << doc.dump(1) << "\n";
    return out;
}

}  // namespace

SweepOutput run_sweep(const Config& cfg, const std::string& out_dir,
                      const std::string& kind) {
    std::filesystem::create_directories(out_dir);
    Backbone bb = load_backbone(cfg, backbone_path(out_dir));
    Corpus corpus =
        build_corpus(corpus_config_from(cfg), uint64_t(cfg.get_int("seed")));
    FeatureExtractor fext = ensure_extractor(cfg, corpus, out_dir);
    Prototypes proto = build_prototypes(fext, corpus.feat_train, corpus.style_ref);

    std::string path = adapter_path(out_dir, kind);
    if (!std::filesystem::exists(path))
        throw ConfigError("adapter checkpoint missing: " + path +
                          " (run train-adapter first)");
    std::string adapter_hash = hash_hex(hash_file(path));
    auto recs = load_checkpoint(path);

    AdapterRig rig;
    rig.tag = kind;
    if (kind == "steering") {
        auto steer = std::make_shared<SteeringModule>(
            SteeringModule::from_records(recs));
        rig.adapters = {steer.get()};
        rig.grid = cfg.get_f64_list("eval.scales");
        rig.set_knob = [steer](double s) { steer->set_scale(s); };
        rig.eff_of = [](double s) { return s; };
        rig.knob_name = "scale";
        rig.params = steer->param_count();
        return sweep_rig(cfg, out_dir, bb, fext, proto, rig, adapter_hash);
    }
    if (kind == "lora" || kind == "rslora") {
        auto lora =
            std::make_shared<LoraAdapter>(LoraAdapter::from_records(recs));
        rig.wt = lora.get();
        const LoraConfig& lc = lora->config();
        if (kind == "lora") {
            rig.grid = cfg.get_f64_list("eval.multipliers");
        } else {
            // eff-matched protocol: pick multipliers that land on the
            // effective-scale grid under alpha/sqrt(r).
            for (double eff : cfg.get_f64_list("eval.eff_grid"))
                rig.grid.push_back(
                    multiplier_for_effective(eff, lc.alpha, lc.rank, lc.mode));
        }
        rig.set_knob = [lora](double m) { lora->set_multiplier(m); };
        rig.eff_of = [lc](double m) {
            return effective_scale(m, lc.alpha, lc.rank, lc.mode);
        };
        rig.knob_name = "multiplier";
        rig.params = lora->param_count();
        SweepOutput out = sweep_rig(cfg, out_dir, bb, fext, proto, rig, adapter_hash);
        return out;
    }
    if (kind == "rank1") {
        auto r1 =
            std::make_shared<Rank1Adapter>(Rank1Adapter::from_records(recs));
        rig.adapters = {r1.get()};
        rig.grid = cfg.get_f64_list("eval.rank1_alphas");
        rig.set_knob = [r1](double a) { r1->set_alpha(a); };
        rig.eff_of = [](double a) { return a; };
        rig.knob_name = "alpha";
        rig.params = 0;
        return sweep_rig(cfg, out_dir, bb, fext, proto, rig, adapter_hash);
    }
    if (kind == "sidebranch") {
        auto sb = std::make_shared<SideBranchAdapter>(
            SideBranchAdapter::from_records(recs, *bb.net));
        rig.adapters = {sb.get()};
        rig.grid = cfg.get_f64_list("eval.multipliers");
        rig.set_knob = [sb](double m) { sb->set_multiplier(m); };
        rig.eff_of = [](double m) { return m; };
        rig.knob_name = "multiplier";
        rig.params = sb->param_count();
        return sweep_rig(cfg, out_dir, bb, fext, proto, rig, adapter_hash);
    }
    throw ConfigError("unknown sweep adapter '" + kind +
                      "' (steering|lora|rslora|rank1|sidebranch)");
}

std::vector<SweepOutput> run_k_sweep(const Config& cfg,
                                     const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    uint64_t seed = uint64_t(cfg.get_int("seed"));
    Backbone bb = load_backbone(cfg, backbone_path(out_dir));
    Corpus corpus = build_corpus(corpus_config_from(cfg), seed);
    FeatureExtractor fext = ensure_extractor(cfg, corpus, out_dir);
    Prototypes proto = build_prototypes(fext, corpus.feat_train, corpus.style_ref);
    NoiseSchedule sched = schedule_from(cfg);

    AdamWConfig ocfg;
    ocfg.lr = cfg.get_f64("train.adapter_lr");
    ocfg.weight_decay = cfg.get_f64("train.adapter_weight_decay");
    ocfg.clip_norm = cfg.get_f64("train.clip_norm");
    int steps = cfg.get_int("train.adapter_steps");
    ocfg.total_steps = steps;

    std::vector<SweepOutput> outs;
    for (int k : cfg.get_int_list("eval.k_grid")) {
        SteeringConfig scfg = steering_config_from(cfg);
        scfg.k = k;
        Rng arng = Rng::derive(seed, 21);  // same stream per k: only k varies
        SteeringModule steer(scfg, *bb.net, sched.timesteps, arng);
        steer.set_scale(1.0);
        train_eps_model(*bb.net, bb.table, corpus.style_train, true,
                        steer.trainable_params(), {&steer}, nullptr, ocfg,
                        steps, cfg.get_int("train.batch"), 0.0, sched,
                        seed + 1);
        std::string tag = "steering_k" + std::to_string(k);
        std::string ck_path = adapter_path(out_dir, tag);
        save_checkpoint(ck_path, steer.to_records());

        AdapterRig rig;
        rig.tag = tag;
        rig.adapters = {&steer};
        rig.grid = cfg.get_f64_list("eval.scales");
        rig.set_knob = [&steer](double s) { steer.set_scale(s); };
        rig.eff_of = [](double s) { return s; };
        rig.knob_name = "scale";
        rig.params = steer.param_count();
        outs.push_back(sweep_rig(cfg, out_dir, bb, fext, proto, rig,
                                 hash_hex(hash_file(ck_path))));
    }
    return outs;
}

}  // namespace steerlab
