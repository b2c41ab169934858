#include "harness/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/ops.hpp"
#include "json.hpp"

namespace steerlab {

UNetConfig unet_config_from(const Config& cfg) {
    UNetConfig u;
    u.image_size = cfg.get_int("unet.image_size");
    u.base_channels = cfg.get_int("unet.base_channels");
    u.channel_mult = cfg.get_int_list("unet.channel_mult");
    u.blocks_per_level = cfg.get_int("unet.blocks_per_level");
    u.groups = cfg.get_int("unet.groups");
    u.cond_dim = cfg.get_int("unet.cond_dim");
    u.time_dim = cfg.get_int("unet.time_dim");
    return u;
}

CorpusConfig corpus_config_from(const Config& cfg) {
    CorpusConfig c;
    c.image_size = cfg.get_int("unet.image_size");
    c.pretrain_size = cfg.get_int("corpus.pretrain");
    c.style_train_size = cfg.get_int("corpus.per_style");
    c.style_ref_size = cfg.get_int("corpus.style_ref");
    c.feat_train_size = cfg.get_int("corpus.feat_train");
    c.target_style = cfg.get_int("corpus.target_style");
    return c;
}

SteeringConfig steering_config_from(const Config& cfg) {
    SteeringConfig s;
    s.k = cfg.get_int("steering.k");
    s.placement = placement_set_from(cfg.get_str("steering.placement"));
    s.gate_center = cfg.get_f64("steering.gate_center");
    s.gate_steepness = cfg.get_f64("steering.gate_steepness");
    return s;
}

LoraConfig lora_config_from(const Config& cfg) {
    LoraConfig l;
    l.rank = cfg.get_int("lora.rank");
    l.alpha = cfg.get_f64("lora.alpha");
    l.mode = lora_mode_from(cfg.get_str("lora.mode"));
    return l;
}

FeatConfig feat_config_from(const Config& cfg) {
    FeatConfig f;
    f.feature_dim = cfg.get_int("feat.dim");
    f.steps = cfg.get_int("feat.steps");
    f.batch = cfg.get_int("feat.batch");
    f.lr = cfg.get_f64("feat.lr");
    f.holdout = cfg.get_int("feat.holdout");
    f.accuracy_gate = cfg.get_f64("feat.accuracy_gate");
    return f;
}

SamplerConfig sampler_config_from(const Config& cfg) {
    SamplerConfig s;
    s.steps = cfg.get_int("sampler.steps");
    s.guidance = cfg.get_f64("sampler.guidance");
    s.eta = cfg.get_f64("sampler.eta");
    return s;
}

NoiseSchedule schedule_from(const Config& cfg) {
    return make_linear_schedule(cfg.get_int("sched.timesteps"),
                                cfg.get_f64("sched.beta_start"),
                                cfg.get_f64("sched.beta_end"));
}

std::string backbone_path(const std::string& out_dir) {
    return out_dir + "/backbone.stlb";
}
std::string adapter_path(const std::string& out_dir, const std::string& kind) {
    return out_dir + "/adapter_" + kind + ".stlb";
}
std::string extractor_path(const std::string& out_dir) {
    return out_dir + "/extractor.stlb";
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

void write_loss_curve(const std::string& path, const std::vector<double>& curve) {
    nlohmann::json j;
    j["loss"] = curve;
    write_text(path, j.dump(1) + "\n");
}

// Per-kind trained-parameter counts, merged across train-adapter runs; the
// budget-parity audit reads this.
void update_params_table(const std::string& out_dir, const std::string& kind,
                         int64_t count) {
    std::string path = out_dir + "/params.json";
    nlohmann::json j = nlohmann::json::object();
    {
        std::ifstream f(path);
        if (f) j = nlohmann::json::parse(f, nullptr, /*allow_exceptions=*/true);
    }
    j[kind] = count;
    write_text(path, j.dump(1) + "\n");
}

// 2 x (grid/2) tile sheet of [-1,1] images as binary PPM.
void write_ppm_grid(const std::string& path, const std::vector<Tensor>& images) {
    if (images.empty()) throw ContractError("write_ppm_grid: no images");
    int n = images[0].dim(1);
    int cols = int(images.size() + 1) / 2, rows = 2;
    if (int(images.size()) < 2) rows = 1;
    int w = cols * n, h = rows * n;
    std::vector<unsigned char> pix(size_t(w) * h * 3, 0);
    for (size_t i = 0; i < images.size(); ++i) {
        const Tensor& img = images[i];
        int ox = int(i) % cols * n, oy = int(i) / cols * n;
        const float* d = img.data();
        int64_t plane = int64_t(n) * n;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = double(d[c * plane + y * n + x]);
                    v = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
                    pix[(size_t(oy + y) * w + size_t(ox + x)) * 3 + size_t(c)] =
                        (unsigned char)std::lround((v + 1.0) * 127.5);
                }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(pix.data()), long(pix.size()));
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace

Backbone load_backbone(const Config& cfg, const std::string& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("backbone checkpoint missing: " + path +
                          " (run pretrain first)");
    Backbone b;
    b.ucfg = unet_config_from(cfg);
    Rng init = Rng::derive(uint64_t(cfg.get_int("seed")), 1);
    b.net = std::make_unique<UNet>(b.ucfg, init);
    Rng trng = Rng::derive(uint64_t(cfg.get_int("seed")), 2);
    b.table = PromptTable::init(b.ucfg.cond_dim, trng);

    auto recs = load_checkpoint(path);
    NamedParams params = b.net->named_params();
    params.emplace_back("ptable", b.table.table);
    load_params_from_records(recs, params);
    b.net->freeze();
    b.table.freeze();
    b.ckpt_path = path;
    b.hash = hash_hex(hash_file(path));
    return b;
}

std::vector<double> train_eps_model(UNet& net, PromptTable& table,
                                    const DatasetSplit& data,
                                    bool style_zero_prompts, NamedParams params,
                                    const AdapterSet& adapters,
                                    WeightTransform* wt,
                                    const AdamWConfig& ocfg, int steps,
                                    int batch, double cond_dropout,
                                    const NoiseSchedule& sched, uint64_t seed,
                                    std::vector<double>* curve_out) {
    if (steps < 0 || batch < 1)
        throw ConfigError("training: steps must be >= 0 and batch >= 1");
    if (data.size() == 0) throw ContractError("training: empty dataset split");
    Rng batch_rng = Rng::derive(seed, 11);
    Rng drop_rng = Rng::derive(seed, 12);
    Rng noise_rng = Rng::derive(seed, 13);
    AdamW opt(std::move(params), ocfg);
    UNetEps model;
    model.net = &net;
    model.adapters = adapters;
    model.wt = wt;

    std::vector<double> curve;
    curve.reserve(size_t(steps));
    for (int step = 0; step < steps; ++step) {
        std::vector<Tensor> imgs;
        std::vector<PromptSpec> specs;
        std::vector<bool> dropped;
        for (int b = 0; b < batch; ++b) {
            int idx = batch_rng.uniform_int(0, int(data.size()) - 1);
            imgs.push_back(data.images[size_t(idx)]);
            PromptSpec s = data.prompts[size_t(idx)];
            if (style_zero_prompts) s.style_id = 0;
            specs.push_back(s);
            dropped.push_back(drop_rng.uniform() < cond_dropout);
        }
        Tensor x0 = ops::stack_batch(imgs);
        TapeScope scope;
        Tensor c = table.embed_batch(specs, dropped);
        Tensor loss = epsilon_loss(model, x0, c, noise_rng, sched);
        double lv = double(loss.item());
        if (!std::isfinite(lv))
            throw NumericError("non-finite training loss at step " +
                               std::to_string(step));
        opt.zero_grad();
        loss.backward();
        opt.step();
        curve.push_back(lv);
    }
    if (curve_out) *curve_out = curve;
    return curve;
}

std::vector<double> cmd_pretrain(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    uint64_t seed = uint64_t(cfg.get_int("seed"));
    Corpus corpus = build_corpus(corpus_config_from(cfg), seed);
    NoiseSchedule sched = schedule_from(cfg);

    UNetConfig ucfg = unet_config_from(cfg);
    Rng init = Rng::derive(seed, 1);
    UNet net(ucfg, init);
    Rng trng = Rng::derive(seed, 2);
    PromptTable table = PromptTable::init(ucfg.cond_dim, trng);

    AdamWConfig ocfg;
    ocfg.lr = cfg.get_f64("train.pretrain_lr");
    ocfg.weight_decay = cfg.get_f64("train.weight_decay");
    ocfg.clip_norm = cfg.get_f64("train.clip_norm");
    int steps = cfg.get_int("train.pretrain_steps");
    ocfg.total_steps = steps;

    NamedParams params = net.named_params();
    params.emplace_back("ptable", table.table);
    std::vector<double> curve = train_eps_model(
        net, table, corpus.pretrain, false, params, {}, nullptr, ocfg, steps,
        cfg.get_int("train.batch"), cfg.get_f64("train.cond_dropout"), sched,
        seed);

    NamedParams all = net.named_params();
    all.emplace_back("ptable", table.table);
    save_checkpoint(backbone_path(out_dir), records_from_params(all));
    write_loss_curve(out_dir + "/pretrain_loss.json", curve);
    update_params_table(out_dir, "backbone", net.param_count());

    // Sample grid for visual sanity: each content twice.
    net.freeze();
    table.freeze();
    UNetEps model;
    model.net = &net;
    SamplerConfig samp = sampler_config_from(cfg);
    Rng zrng = Rng::derive(seed, 6);
    std::vector<Tensor> samples;
    for (int i = 0; i < 8; ++i) {
        Tensor z = Tensor::zeros({1, 3, ucfg.image_size, ucfg.image_size});
        zrng.fill_normal(z.data(), size_t(z.numel()));
        Tensor c = table.embed(PromptSpec{i % kNumContents, 0});
        SampleResult r = ddim_sample(model, c, table.null_embed(), samp, z, sched);
        samples.push_back(ops::reshape(r.image, {3, ucfg.image_size, ucfg.image_size}));
    }
    write_ppm_grid(out_dir + "/pretrain_samples.ppm", samples);
    return curve;
}

FeatureExtractor ensure_extractor(const Config& cfg, const Corpus& corpus,
                                  const std::string& out_dir) {
    std::string path = extractor_path(out_dir);
    if (std::filesystem::exists(path))
        return FeatureExtractor::from_records(load_checkpoint(path));
    FeatureExtractor f = train_feature_extractor(
        corpus.feat_train, feat_config_from(cfg), uint64_t(cfg.get_int("seed")));
    save_checkpoint(path, f.to_records());
    return f;
}

void cmd_train_adapter(const Config& cfg, const std::string& out_dir,
                       const std::string& kind) {
    std::filesystem::create_directories(out_dir);
    uint64_t seed = uint64_t(cfg.get_int("seed"));
    Backbone bb = load_backbone(cfg, backbone_path(out_dir));
    Corpus corpus = build_corpus(corpus_config_from(cfg), seed);
    NoiseSchedule sched = schedule_from(cfg);

    AdamWConfig ocfg;
    ocfg.lr = cfg.get_f64("train.adapter_lr");
    ocfg.weight_decay = cfg.get_f64("train.adapter_weight_decay");
    ocfg.clip_norm = cfg.get_f64("train.clip_norm");
    int steps = cfg.get_int("train.adapter_steps");
    ocfg.total_steps = steps;
    int batch = cfg.get_int("train.batch");

    if (kind == "steering") {
        Rng arng = Rng::derive(seed, 21);
        SteeringModule steer(steering_config_from(cfg), *bb.net,
                             sched.timesteps, arng);
        steer.set_scale(1.0);  // trained at unit scale, gate active
        auto curve = train_eps_model(*bb.net, bb.table, corpus.style_train,
                                     true, steer.trainable_params(), {&steer},
                                     nullptr, ocfg, steps, batch, 0.0, sched,
                                     seed + 1);
        save_checkpoint(adapter_path(out_dir, kind), steer.to_records());
        write_loss_curve(out_dir + "/adapter_" + kind + "_loss.json", curve);
        update_params_table(out_dir, kind, steer.param_count());
    } else if (kind == "lora" || kind == "rslora") {
        Rng arng = Rng::derive(seed, 22);  // same init as lora: only the
        LoraConfig lc = lora_config_from(cfg);  // scaling rule differs
        lc.mode = kind == "rslora" ? LoraScalingMode::rank_stabilized
                                   : LoraScalingMode::standard;
        LoraAdapter lora(lc, *bb.net, arng);
        lora.set_multiplier(1.0);
        auto curve = train_eps_model(*bb.net, bb.table, corpus.style_train,
                                     true, lora.trainable_params(), {}, &lora,
                                     ocfg, steps, batch, 0.0, sched, seed + 2);
        save_checkpoint(adapter_path(out_dir, kind), lora.to_records());
        write_loss_curve(out_dir + "/adapter_" + kind + "_loss.json", curve);
        update_params_table(out_dir, kind, lora.param_count());
    } else if (kind == "sidebranch") {
        SideBranchAdapter sb(*bb.net);
        sb.set_multiplier(1.0);
        auto curve = train_eps_model(*bb.net, bb.table, corpus.style_train,
                                     true, sb.trainable_params(), {&sb},
                                     nullptr, ocfg, steps, batch, 0.0, sched,
                                     seed + 3);
        save_checkpoint(adapter_path(out_dir, kind), sb.to_records());
        write_loss_curve(out_dir + "/adapter_" + kind + "_loss.json", curve);
        update_params_table(out_dir, kind, sb.param_count());
    } else if (kind == "rank1") {
        std::string steer_path = adapter_path(out_dir, "steering");
        if (!std::filesystem::exists(steer_path))
            throw ConfigError("rank1 extraction needs " + steer_path);
        SteeringModule steer =
            SteeringModule::from_records(load_checkpoint(steer_path));
        steer.set_scale(1.0);
        int probe_n = int(std::min<size_t>(8, corpus.style_train.size()));
        std::vector<Tensor> imgs(corpus.style_train.images.begin(),
                                 corpus.style_train.images.begin() + probe_n);
        std::vector<PromptSpec> specs;
        for (int i = 0; i < probe_n; ++i) {
            PromptSpec s = corpus.style_train.prompts[size_t(i)];
            s.style_id = 0;
            specs.push_back(s);
        }
        Tensor probe = ops::stack_batch(imgs);
        Tensor c = bb.table.embed_batch(specs);
        std::vector<int> ts =
            timestep_grid(sched.timesteps, sampler_config_from(cfg).steps);
        Rank1Adapter r1 = rank1_extract(*bb.net, steer, probe, ts, c,
                                        cfg.get_f64("rank1.alpha"));
        save_checkpoint(adapter_path(out_dir, kind), r1.to_records());
        update_params_table(out_dir, kind, r1.trained_param_count());
    } else {
        throw ConfigError("unknown adapter kind '" + kind +
                          "' (steering|lora|rslora|rank1|sidebranch)");
    }
}

void cmd_bench(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    uint64_t seed = uint64_t(cfg.get_int("seed"));
    Backbone bb = load_backbone(cfg, backbone_path(out_dir));
    NoiseSchedule sched = schedule_from(cfg);
    SamplerConfig samp = sampler_config_from(cfg);
    int calls = cfg.get_int("bench.calls");

    Tensor c = bb.table.embed(PromptSpec{0, 0});
    Tensor c_null = bb.table.null_embed();
    Rng zrng = Rng::derive(seed, 31);
    Tensor z = Tensor::zeros(
        {1, 3, bb.ucfg.image_size, bb.ucfg.image_size});
    zrng.fill_normal(z.data(), size_t(z.numel()));

    // Adapters: trained checkpoints when present, fresh zero-init otherwise
    // (overhead is structural, not weight-dependent).
    Rng srng = Rng::derive(seed, 32);
    SteeringModule steer =
        std::filesystem::exists(adapter_path(out_dir, "steering"))
            ? SteeringModule::from_records(
                  load_checkpoint(adapter_path(out_dir, "steering")))
            : SteeringModule(steering_config_from(cfg), *bb.net,
                             sched.timesteps, srng);
    Rng lrng = Rng::derive(seed, 33);
    LoraAdapter lora =
        std::filesystem::exists(adapter_path(out_dir, "lora"))
            ? LoraAdapter::from_records(
                  load_checkpoint(adapter_path(out_dir, "lora")))
            : LoraAdapter(lora_config_from(cfg), *bb.net, lrng);
    lora.set_multiplier(1.0);
    SideBranchAdapter sb(*bb.net);
    sb.set_multiplier(1.0);

    struct Case {
        std::string name;
        AdapterSet adapters;
        WeightTransform* wt;
        int64_t params;
    };
    steer.set_scale(0.0);
    std::vector<Case> cases = {
        {"base", {}, nullptr, 0},
        {"steering_s0", {&steer}, nullptr, steer.param_count()},
        {"lora_m1", {}, &lora, lora.param_count()},
        {"sidebranch", {&sb}, nullptr, sb.param_count()},
    };

    UNetEps model;
    model.net = bb.net.get();
    nlohmann::json out;
    int64_t backbone_params = bb.net->param_count();
    for (auto& cs : cases) {
        model.adapters = cs.adapters;
        model.wt = cs.wt;
        // Warm-up (also faults in the BLAS backend).
        ddim_sample(model, c, c_null, samp, z, sched);
        std::vector<double> ms;
        for (int i = 0; i < calls; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            ddim_sample(model, c, c_null, samp, z, sched);
            auto t1 = std::chrono::steady_clock::now();
            ms.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(ms.begin(), ms.end());
        double median = ms[ms.size() / 2];
        nlohmann::json row;
        row["median_ms"] = median;
        row["calls"] = calls;
        row["trained_params"] = cs.params;
        row["param_fraction"] =
            double(cs.params) / double(backbone_params);
        out[cs.name] = row;
    }
    // Relative overheads vs base.
    double base_ms = out["base"]["median_ms"].get<double>();
    for (auto& cs : cases)
        out[cs.name]["overhead_vs_base"] =
            out[cs.name]["median_ms"].get<double>() / base_ms - 1.0;
    write_text(out_dir + "/timings.json", out.dump(1) + "\n");
}

void cmd_selftest(const Config& cfg) {
    (void)cfg;
    // Tiny throwaway rig: fast enough to run on every install.
    UNetConfig ucfg;
    ucfg.image_size = 16;
    ucfg.base_channels = 16;
    ucfg.channel_mult = {1, 2};
    ucfg.blocks_per_level = 1;
    ucfg.groups = 4;
    ucfg.cond_dim = 8;
    ucfg.time_dim = 16;
    Rng rng(12345);
    UNet net(ucfg, rng);
    net.freeze();
    NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.02);

    Rng srng(54321);
    SteeringModule steer({4, {Placement::mid, Placement::up}, 0.5, 10.0}, net,
                         sched.timesteps, srng);
    steer.set_scale(1.0);

    // E0: fresh zero-init steering must be bit-identical over a trajectory.
    Tensor z = Tensor::zeros({1, 3, 16, 16});
    Rng zr(7);
    zr.fill_normal(z.data(), size_t(z.numel()));
    Tensor c = Tensor::zeros({1, 8});
    Rng cr(8);
    cr.fill_normal(c.data(), size_t(c.numel()));
    UNetEps base_model, steer_model;
    base_model.net = &net;
    steer_model.net = &net;
    steer_model.adapters = {&steer};
    SamplerConfig samp;
    samp.steps = 6;
    samp.guidance = 1.0;
    Tensor cn = Tensor::zeros({1, 8});
    SampleResult a = ddim_sample(base_model, c, cn, samp, z, sched);
    SampleResult b = ddim_sample(steer_model, c, cn, samp, z, sched);
    if (std::memcmp(a.image.data(), b.image.data(),
                    size_t(a.image.numel()) * sizeof(float)) != 0)
        throw GateError("selftest: zero-init steering is not bit-exact");

    // Gradient spot check: d(mse)/dw vs central differences on one weight.
    {
        Tensor x = Tensor::zeros({2, 3});
        Rng xr(9);
        xr.fill_normal(x.data(), size_t(x.numel()));
        Tensor w = Tensor::zeros({3, 2}, true);
        Rng wr(10);
        wr.fill_normal(w.data(), size_t(w.numel()));
        Tensor bias = Tensor::zeros({2}, true);
        Tensor target = Tensor::zeros({2, 2});
        double g_ad;
        {
            TapeScope scope;
            Tensor loss = ops::mse(ops::silu(ops::linear(x, w, bias)), target);
            loss.backward();
            g_ad = double(w.grad()[0]);
        }
        double h = 1e-3;
        float save = w.data()[0];
        w.data()[0] = float(double(save) + h);
        double lp = double(ops::mse(ops::silu(ops::linear(x, w, bias)), target).item());
        w.data()[0] = float(double(save) - h);
        double lm = double(ops::mse(ops::silu(ops::linear(x, w, bias)), target).item());
        w.data()[0] = save;
        double g_fd = (lp - lm) / (2.0 * h);
        double rel = std::fabs(g_ad - g_fd) /
                     std::max(1e-8, std::max(std::fabs(g_ad), std::fabs(g_fd)));
        if (rel > 1e-3)
            throw GateError("selftest: gradient mismatch (rel " +
                            std::to_string(rel) + ")");
    }

    // Container round-trip: save -> load -> save must be byte-identical.
    {
        std::string p1 = (std::filesystem::temp_directory_path() /
                          "steerlab_selftest_a.stlb").string();
        std::string p2 = (std::filesystem::temp_directory_path() /
                          "steerlab_selftest_b.stlb").string();
        save_checkpoint(p1, steer.to_records());
        save_checkpoint(p2, load_checkpoint(p1));
        if (hash_file(p1) != hash_file(p2))
            throw GateError("selftest: checkpoint round-trip not byte-stable");
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }
}

}  // namespace steerlab
