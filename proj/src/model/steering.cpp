#include "model/steering.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

std::vector<Placement> placement_set_from(const std::string& s) {
    std::vector<Placement> out;
    std::string tok;
    auto flush = [&] {
        if (tok.empty()) return;
        Placement p = placement_from(tok);
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
        tok.clear();
    };
    for (char ch : s) {
        if (ch == '_' || ch == ',' || ch == '+' || ch == ' ')
            flush();
        else
            tok.push_back(ch);
    }
    flush();
    if (out.empty()) throw ConfigError("placement set '" + s + "' is empty");
    std::sort(out.begin(), out.end(),
              [](Placement a, Placement b) { return int(a) < int(b); });
    return out;
}

std::string placement_set_name(const std::vector<Placement>& ps) {
    std::string out;
    for (const auto& p : ps) {
        if (!out.empty()) out += "_";
        out += placement_name(p);
    }
    return out;
}

double gate_value(double t_frac, double tau0, double kappa) {
    if (!(kappa > 0.0)) throw ConfigError("gate steepness must be > 0");
    double z = kappa * (tau0 - t_frac);
    // Split on sign for numerical symmetry: sigma(-z) == 1 - sigma(z).
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

Dense make_steer_dense(const std::string& name, int in_dim, int out_dim,
                       Rng* rng) {
    Dense d;
    d.name = name;
    if (rng) {
        d.w = Tensor::zeros({in_dim, out_dim}, true);
        rng->fill_normal(d.w.data(), size_t(d.w.numel()));
        double stddev = 1.0 / std::sqrt(double(in_dim));
        for (auto& v : d.w.vec()) v = float(double(v) * stddev);
    } else {
        d.w = Tensor::zeros({in_dim, out_dim}, true);  // zero-init projection
    }
    d.b = Tensor::zeros({out_dim}, true);
    return d;
}

constexpr float kMetaVersion = 1.0f;

}  // namespace

SteeringModule::SteeringModule(const SteeringConfig& cfg, const UNet& net,
                               int timesteps, Rng& rng)
    : cfg_(cfg), timesteps_(timesteps), groups_(net.config().groups) {
    if (cfg.k < 1) throw ConfigError("steering: k must be >= 1");
    if (cfg.placement.empty()) throw ConfigError("steering: placement set empty");
    if (!(cfg.gate_steepness > 0.0))
        throw ConfigError("steering: gate steepness must be > 0");
    if (!(cfg.gate_center > 0.0 && cfg.gate_center < 1.0))
        throw ConfigError("steering: gate center must lie in (0,1)");
    if (timesteps < 1) throw ConfigError("steering: timesteps must be >= 1");

    int cond = net.config().cond_dim;
    int hidden = 4 * cfg.k;
    fc1_ = make_steer_dense("g.fc1", cond, hidden, &rng);
    fc2_ = make_steer_dense("g.fc2", hidden, cfg.k, &rng);

    for (const auto& d : net.descriptors()) {
        if (!selected(d.placement)) continue;
        Proj p;
        p.block_id = d.block_id;
        p.gamma = make_steer_dense("proj." + d.block_id + ".gamma", cfg.k,
                                   d.channels, nullptr);
        p.beta = make_steer_dense("proj." + d.block_id + ".beta", cfg.k,
                                  d.channels, nullptr);
        projs_.push_back(std::move(p));
        block_ids_.push_back(d.block_id);
    }
    if (projs_.empty())
        throw ConfigError("steering: no backbone block matches placement " +
                          placement_set_name(cfg.placement));
}

bool SteeringModule::selected(Placement p) const {
    return std::find(cfg_.placement.begin(), cfg_.placement.end(), p) !=
           cfg_.placement.end();
}

void SteeringModule::set_scale(double s) {
    if (!(s >= 0.0)) throw ConfigError("steering: scale must be >= 0");
    scale_ = s;
}

Tensor SteeringModule::encode_code(const Tensor& c) {
    if (!c.defined()) throw ContractError("steering.encode_code: undefined c");
    Tensor x = (c.rank() == 1) ? ops::broadcast_rows(c, 1) : c;
    if (x.rank() != 2) throw ContractError("steering.encode_code: c rank");
    Tensor h = fc1_.forward(x, nullptr);
    h = ops::silu(h);
    return fc2_.forward(h, nullptr);
}

void SteeringModule::begin(const Tensor& x_t, int t, const Tensor& c) {
    (void)x_t;
    v_ = encode_code(c);
    double t_frac = double(t) / double(timesteps_);
    sf_ = scale_ * gate_value(t_frac, cfg_.gate_center, cfg_.gate_steepness);
}

Tensor SteeringModule::delta(const BlockDescriptor& block, const Tensor& h) {
    if (!selected(block.placement)) return Tensor();
    const Proj* proj = nullptr;
    for (const auto& p : projs_)
        if (p.block_id == block.block_id) {
            proj = &p;
            break;
        }
    if (!proj)
        throw ContractError("steering: no projection for selected block '" +
                            block.block_id + "'");
    if (!v_.defined())
        throw ContractError("steering.delta called before begin()");
    if (h.rank() != 4 || h.dim(1) != block.channels)
        throw ContractError("steering.delta: activation shape mismatch for '" +
                            block.block_id + "'");
    if (v_.dim(0) != h.dim(0) && v_.dim(0) != 1)
        throw ContractError("steering.delta: code batch mismatch");
    Tensor v = (v_.dim(0) == h.dim(0)) ? v_ : ops::broadcast_rows(v_, h.dim(0));

    Tensor gamma = proj->gamma.forward(v, nullptr);  // [B,ch]
    Tensor beta = proj->beta.forward(v, nullptr);
    Tensor hn = ops::group_norm(h, groups_);
    Tensor d = ops::film(hn, gamma, beta);
    // One multiply by (scale * gate) keeps the delta exactly linear in the
    // runtime scale: doubling the factor commutes with float rounding.
    return ops::scale(d, sf_);
}

NamedParams SteeringModule::trainable_params() {
    NamedParams out;
    auto dense = [&](const Dense& d) {
        out.emplace_back(d.name + ".w", d.w);
        out.emplace_back(d.name + ".b", d.b);
    };
    dense(fc1_);
    dense(fc2_);
    for (const auto& p : projs_) {
        dense(p.gamma);
        dense(p.beta);
    }
    return out;
}

int64_t SteeringModule::param_count() const {
    int64_t n = 0;
    n += fc1_.w.numel() + fc1_.b.numel();
    n += fc2_.w.numel() + fc2_.b.numel();
    for (const auto& p : projs_) {
        n += p.gamma.w.numel() + p.gamma.b.numel();
        n += p.beta.w.numel() + p.beta.b.numel();
    }
    return n;
}

std::vector<CheckpointRecord> SteeringModule::to_records() {
    std::vector<CheckpointRecord> recs = records_from_params(trainable_params());
    float mask = 0.0f;
    for (const auto& p : cfg_.placement) mask += float(1 << int(p));
    CheckpointRecord meta;
    meta.name = "__meta__";
    meta.dims = {7};
    meta.data = {kMetaVersion,
                 float(cfg_.k),
                 float(cfg_.gate_center),
                 float(cfg_.gate_steepness),
                 mask,
                 float(timesteps_),
                 float(groups_)};
    recs.push_back(std::move(meta));
    return recs;
}

SteeringModule SteeringModule::from_records(
    const std::vector<CheckpointRecord>& recs) {
    const CheckpointRecord* meta = nullptr;
    for (const auto& r : recs)
        if (r.name == "__meta__") meta = &r;
    if (!meta || meta->data.size() != 7 || meta->data[0] != kMetaVersion)
        throw IoError("steering checkpoint: missing or unsupported __meta__");

    SteeringModule m;
    m.cfg_.k = int(meta->data[1]);
    m.cfg_.gate_center = double(meta->data[2]);
    m.cfg_.gate_steepness = double(meta->data[3]);
    int mask = int(meta->data[4]);
    m.cfg_.placement.clear();
    for (Placement p : {Placement::down, Placement::mid, Placement::up})
        if (mask & (1 << int(p))) m.cfg_.placement.push_back(p);
    m.timesteps_ = int(meta->data[5]);
    m.groups_ = int(meta->data[6]);

    auto take = [&](const std::string& name) -> const CheckpointRecord& {
        for (const auto& r : recs)
            if (r.name == name) return r;
        throw IoError("steering checkpoint: missing record '" + name + "'");
    };
    auto dense_from = [&](const std::string& name) {
        Dense d;
        d.name = name;
        const auto& w = take(name + ".w");
        const auto& b = take(name + ".b");
        d.w = Tensor::from(w.dims, w.data, true);
        d.b = Tensor::from(b.dims, b.data, true);
        return d;
    };
    m.fc1_ = dense_from("g.fc1");
    m.fc2_ = dense_from("g.fc2");
    for (const auto& r : recs) {
        // gamma records mark the steered blocks: proj.<block>.gamma.w
        const std::string pre = "proj.", suf = ".gamma.w";
        if (r.name.size() > pre.size() + suf.size() &&
            r.name.compare(0, pre.size(), pre) == 0 &&
            r.name.compare(r.name.size() - suf.size(), suf.size(), suf) == 0) {
            std::string block =
                r.name.substr(pre.size(), r.name.size() - pre.size() - suf.size());
            Proj p;
            p.block_id = block;
            p.gamma = dense_from("proj." + block + ".gamma");
            p.beta = dense_from("proj." + block + ".beta");
            m.projs_.push_back(std::move(p));
            m.block_ids_.push_back(block);
        }
    }
    if (m.projs_.empty())
        throw IoError("steering checkpoint: no projection records");
    return m;
}

double verify_zero_equivalence(UNet& net, SteeringModule& steering,
                               const Tensor& probe_x,
                               const std::vector<int>& ts, const Tensor& c) {
    NoGradScope ng;
    double worst = 0.0;
    for (int t : ts) {
        Tensor base = net.forward(probe_x, t, c);
        Tensor steered = net.forward(probe_x, t, c, {&steering});
        for (int64_t i = 0; i < base.numel(); ++i) {
            double d = std::fabs(double(steered.data()[i]) - double(base.data()[i]));
            if (d > worst) worst = d;
        }
    }
    return worst;
}

}  // namespace steerlab
