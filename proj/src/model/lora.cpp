#include "model/lora.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

LoraScalingMode lora_mode_from(const std::string& s) {
    if (s == "standard") return LoraScalingMode::standard;
    if (s == "rank_stabilized" || s == "rslora")
        return LoraScalingMode::rank_stabilized;
    throw ConfigError("unknown lora scaling mode '" + s +
                      "' (expected standard|rank_stabilized)");
}

std::string lora_mode_name(LoraScalingMode m) {
    return m == LoraScalingMode::standard ? "standard" : "rank_stabilized";
}

double lora_scaling(double alpha, int rank, LoraScalingMode mode) {
    if (rank < 1) throw ConfigError("lora: rank must be >= 1");
    return mode == LoraScalingMode::standard ? alpha / double(rank)
                                             : alpha / std::sqrt(double(rank));
}

double effective_scale(double multiplier, double alpha, int rank,
                       LoraScalingMode mode) {
    return multiplier * lora_scaling(alpha, rank, mode);
}

double multiplier_for_effective(double eff, double alpha, int rank,
                                LoraScalingMode mode) {
    double s = lora_scaling(alpha, rank, mode);
    if (s == 0.0) throw ConfigError("lora: zero scaling cannot hit a target");
    return eff / s;
}

bool lora_default_target(const std::string& name) {
    bool in_place = name.compare(0, 4, "mid.") == 0 ||
                    name.compare(0, 2, "up") == 0;
    if (!in_place || name.size() < 3) return false;
    // up-transition convs ("up_tr*") belong to the backbone plumbing, not to
    // an up block; exclude them so placement mirrors the steering hooks.
    if (name.compare(0, 5, "up_tr") == 0) return false;
    auto ends_with = [&](const char* suf) {
        size_t n = std::string(suf).size();
        return name.size() > n && name.compare(name.size() - n, n, suf) == 0;
    };
    return ends_with(".conv1.w") || ends_with(".conv2.w") ||
           ends_with(".time.w") || ends_with(".cond.w");
}

LoraAdapter::LoraAdapter(const LoraConfig& cfg, const UNet& net, Rng& rng)
    : cfg_(cfg) {
    if (cfg.rank < 1) throw ConfigError("lora: rank must be >= 1");
    for (const auto& layer : net.weight_layers()) {
        if (!lora_default_target(layer.name)) continue;
        int out = layer.shape[0];
        int64_t in_flat = 1;
        for (size_t i = 1; i < layer.shape.size(); ++i)
            in_flat *= layer.shape[size_t(i)];
        Target t;
        t.name = layer.name;
        t.shape = layer.shape;
        t.a = Tensor::zeros({cfg.rank, int(in_flat)}, true);
        rng.fill_normal(t.a.data(), size_t(t.a.numel()));
        double stddev = 1.0 / std::sqrt(double(in_flat));
        for (auto& v : t.a.vec()) v = float(double(v) * stddev);
        t.b = Tensor::zeros({out, cfg.rank}, true);
        targets_.push_back(std::move(t));
        names_.push_back(layer.name);
    }
    if (targets_.empty())
        throw ConfigError("lora: backbone exposes no mid/up target layers");
}

double LoraAdapter::scaling() const {
    return lora_scaling(cfg_.alpha, cfg_.rank, cfg_.mode);
}

const LoraAdapter::Target* LoraAdapter::find(const std::string& name) const {
    for (const auto& t : targets_)
        if (t.name == name) return &t;
    return nullptr;
}

Tensor LoraAdapter::transform(const std::string& param_name, const Tensor& w) {
    const Target* t = find(param_name);
    if (!t) return w;
    double eff = multiplier_ * scaling();
    bool live = GradTape::active() != nullptr &&
                (t->a.needs_grad() || t->b.needs_grad());
    // Off switches must hand back the frozen weight bit-identically; the
    // materialized path is only needed when gradients must reach A/B or the
    // update is genuinely nonzero.
    if (!live && (eff == 0.0 || t->b.all_zero())) return w;
    Tensor zero_bias = Tensor::zeros({t->a.dim(1)});
    Tensor delta = ops::linear(t->b, t->a, zero_bias);  // [out, in_flat]
    delta = ops::scale(delta, eff);
    delta = ops::reshape(delta, t->shape);
    return ops::add(w, delta);
}

NamedParams LoraAdapter::trainable_params() {
    NamedParams out;
    for (auto& t : targets_) {
        out.emplace_back("lora." + t.name + ".A", t.a);
        out.emplace_back("lora." + t.name + ".B", t.b);
    }
    return out;
}

int64_t LoraAdapter::param_count() const {
    int64_t n = 0;
    for (const auto& t : targets_) n += t.a.numel() + t.b.numel();
    return n;
}

std::vector<CheckpointRecord> LoraAdapter::to_records() {
    std::vector<CheckpointRecord> recs = records_from_params(trainable_params());
    CheckpointRecord meta;
    meta.name = "__meta__";
    meta.dims = {4};
    meta.data = {1.0f, float(cfg_.rank), float(cfg_.alpha),
                 cfg_.mode == LoraScalingMode::standard ? 0.0f : 1.0f};
    recs.push_back(std::move(meta));
    // Original weight shapes, needed to re-fold the factorization.
    for (const auto& t : targets_) {
        CheckpointRecord s;
        s.name = "__shape__." + t.name;
        s.dims = {int(t.shape.size())};
        for (int d : t.shape) s.data.push_back(float(d));
        recs.push_back(std::move(s));
    }
    return recs;
}

LoraAdapter LoraAdapter::from_records(
    const std::vector<CheckpointRecord>& recs) {
    const CheckpointRecord* meta = nullptr;
    for (const auto& r : recs)
        if (r.name == "__meta__") meta = &r;
    if (!meta || meta->data.size() != 4 || meta->data[0] != 1.0f)
        throw IoError("lora checkpoint: missing or unsupported __meta__");
    LoraAdapter m;
    m.cfg_.rank = int(meta->data[1]);
    m.cfg_.alpha = double(meta->data[2]);
    m.cfg_.mode = meta->data[3] == 0.0f ? LoraScalingMode::standard
                                        : LoraScalingMode::rank_stabilized;
    auto take = [&](const std::string& name) -> const CheckpointRecord& {
        for (const auto& r : recs)
            if (r.name == name) return r;
        throw IoError("lora checkpoint: missing record '" + name + "'");
    };
    for (const auto& r : recs) {
        const std::string pre = "lora.", suf = ".A";
        if (r.name.size() > pre.size() + suf.size() &&
            r.name.compare(0, pre.size(), pre) == 0 &&
            r.name.compare(r.name.size() - suf.size(), suf.size(), suf) == 0) {
            std::string base =
                r.name.substr(pre.size(), r.name.size() - pre.size() - suf.size());
            Target t;
            t.name = base;
            const auto& a = take("lora." + base + ".A");
            const auto& b = take("lora." + base + ".B");
            t.a = Tensor::from(a.dims, a.data, true);
            t.b = Tensor::from(b.dims, b.data, true);
            const auto& s = take("__shape__." + base);
            for (float d : s.data) t.shape.push_back(int(d));
            m.targets_.push_back(std::move(t));
            m.names_.push_back(base);
        }
    }
    if (m.targets_.empty()) throw IoError("lora checkpoint: no target records");
    return m;
}

}  // namespace steerlab
