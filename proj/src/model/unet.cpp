#include "model/unet.hpp"

#include <cmath>
#include <functional>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

std::string placement_name(Placement p) {
    switch (p) {
        case Placement::down: return "down";
        case Placement::mid: return "mid";
        case Placement::up: return "up";
    }
    throw ContractError("placement_name: bad enum value");
}

Placement placement_from(const std::string& s) {
    if (s == "down") return Placement::down;
    if (s == "mid") return Placement::mid;
    if (s == "up") return Placement::up;
    throw ConfigError("unknown placement '" + s + "' (expected down|mid|up)");
}

Tensor timestep_embedding(int t, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw ContractError("timestep_embedding: dim must be positive and even");
    int half = dim / 2;
    std::vector<float> out(static_cast<size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        double a = double(t) * freq;
        out[size_t(2 * i)] = float(std::sin(a));
        out[size_t(2 * i + 1)] = float(std::cos(a));
    }
    return Tensor::from({dim}, std::move(out));
}

namespace {

Tensor randn_param(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    rng.fill_normal(t.data(), size_t(t.numel()));
    for (auto& v : t.vec()) v = float(double(v) * stddev);
    return t;
}

Conv3x3 make_conv(const std::string& name, int out_ch, int in_ch, Rng& rng,
                  bool zero_init = false) {
    Conv3x3 c;
    c.name = name;
    if (zero_init)
        c.w = Tensor::zeros({out_ch, in_ch, 3, 3}, true);
    else
        c.w = randn_param({out_ch, in_ch, 3, 3},
                          1.0 / std::sqrt(double(in_ch) * 9.0), rng);
    c.b = Tensor::zeros({out_ch}, true);
    return c;
}

Dense make_dense(const std::string& name, int in_dim, int out_dim, Rng& rng) {
    Dense d;
    d.name = name;
    d.w = randn_param({in_dim, out_dim}, 1.0 / std::sqrt(double(in_dim)), rng);
    d.b = Tensor::zeros({out_dim}, true);
    return d;
}

Tensor maybe_transform(const std::string& name, const Tensor& w,
                       WeightTransform* wt) {
    return wt ? wt->transform(name, w) : w;
}

}  // namespace

Tensor Conv3x3::forward(const Tensor& x, WeightTransform* wt) const {
    return ops::conv2d(x, maybe_transform(name + ".w", w, wt), b);
}

Tensor Dense::forward(const Tensor& x, WeightTransform* wt) const {
    return ops::linear(x, maybe_transform(name + ".w", w, wt), b);
}

Tensor ResBlock::forward(const Tensor& h, const Tensor& temb, const Tensor& c,
                         WeightTransform* wt) const {
    Tensor z = ops::group_norm(h, groups);
    z = ops::silu(z);
    z = conv1.forward(z, wt);
    z = ops::add_channel_bias(z, time_proj.forward(temb, wt));
    z = ops::add_channel_bias(z, cond_proj.forward(c, wt));
    z = ops::group_norm(z, groups);
    z = ops::silu(z);
    z = conv2.forward(z, wt);
    return ops::add(h, z);
}

UNet::UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.channel_mult.empty())
        throw ConfigError("unet: channel_mult must be nonempty");
    if (cfg.base_channels <= 0 || cfg.groups <= 0 || cfg.blocks_per_level <= 0)
        throw ConfigError("unet: base_channels, groups, blocks_per_level must be positive");
    if (cfg.time_dim % 2 != 0)
        throw ConfigError("unet: time_dim must be even");
    if (cfg.cond_dim <= 0) throw ConfigError("unet: cond_dim must be positive");
    int levels = int(cfg.channel_mult.size());
    int sz = cfg.image_size;
    for (int l = 0; l + 1 < levels; ++l) {
        if (sz % 2 != 0)
            throw ConfigError("unet: image_size not divisible across levels");
        sz /= 2;
    }
    for (int m : cfg.channel_mult) {
        int ch = cfg.base_channels * m;
        if (m <= 0 || ch % cfg.groups != 0)
            throw ConfigError("unet: every level's channels must be divisible by groups");
        level_channels_.push_back(ch);
    }

    stem_ = make_conv("stem", level_channels_[0], cfg.in_channels, rng);
    time_fc1_ = make_dense("time_mlp.fc1", cfg.time_dim, cfg.time_dim, rng);
    time_fc2_ = make_dense("time_mlp.fc2", cfg.time_dim, cfg.time_dim, rng);

    auto add_block = [&](const std::string& id, Placement pl, int ch) {
        ResBlock b;
        b.desc = {id, pl, ch};
        b.groups = cfg.groups;
        b.conv1 = make_conv(id + ".conv1", ch, ch, rng);
        b.conv2 = make_conv(id + ".conv2", ch, ch, rng);
        b.time_proj = make_dense(id + ".time", cfg.time_dim, ch, rng);
        b.cond_proj = make_dense(id + ".cond", cfg.cond_dim, ch, rng);
        blocks_.push_back(std::move(b));
        descs_.push_back(blocks_.back().desc);
    };

    for (int l = 0; l < levels; ++l) {
        for (int j = 0; j < cfg.blocks_per_level; ++j)
            add_block("down" + std::to_string(l) + ".b" + std::to_string(j),
                      Placement::down, level_channels_[size_t(l)]);
        if (l + 1 < levels)
            down_tr_.push_back(make_conv("down_tr" + std::to_string(l),
                                         level_channels_[size_t(l + 1)],
                                         level_channels_[size_t(l)], rng));
    }
    for (int j = 0; j < cfg.blocks_per_level; ++j)
        add_block("mid.b" + std::to_string(j), Placement::mid,
                  level_channels_.back());
    for (int l = levels - 1; l >= 0; --l) {
        for (int j = 0; j < cfg.blocks_per_level; ++j)
            add_block("up" + std::to_string(l) + ".b" + std::to_string(j),
                      Placement::up, level_channels_[size_t(l)]);
        if (l > 0)
            up_tr_.push_back(make_conv("up_tr" + std::to_string(l),
                                       level_channels_[size_t(l - 1)],
                                       level_channels_[size_t(l)], rng));
    }
    // Zero-init head: a fresh backbone predicts exactly zero, which keeps
    // early pretraining steps well-scaled.
    head_ = make_conv("head", cfg.in_channels, level_channels_[0], rng,
                      /*zero_init=*/true);
}

Tensor UNet::run_block(size_t block_index, const Tensor& h, const Tensor& temb,
                       const Tensor& c, const AdapterSet& adapters,
                       WeightTransform* wt) const {
    const ResBlock& b = blocks_[block_index];
    Tensor out = b.forward(h, temb, c, wt);
    for (auto* a : adapters) {
        if (!a) continue;
        Tensor d = a->delta(b.desc, out);
        if (!d.defined()) continue;
        if (d.shape() != out.shape())
            throw ContractError("adapter delta for block '" + b.desc.block_id +
                                "': expected shape " + shape_str(out.shape()) +
                                ", got " + shape_str(d.shape()));
        // A delta of exact zeros must leave the activation bit-identical
        // (h + -0.0f flips signed zeros), so skip the add — unless the delta
        // is on an active tape and needs gradient, where the add must be
        // recorded for backprop through zero-initialized adapters.
        bool live = GradTape::active() != nullptr && d.needs_grad();
        if (!live && d.all_zero()) continue;
        out = ops::add(out, d);
    }
    return out;
}

Tensor UNet::forward(const Tensor& x_t, int t, const Tensor& c,
                     const AdapterSet& adapters, WeightTransform* wt) {
    if (!x_t.defined() || x_t.rank() != 4)
        throw ContractError("unet.forward: x_t must be [B,C,H,W]");
    if (x_t.dim(1) != cfg_.in_channels || x_t.dim(2) != cfg_.image_size ||
        x_t.dim(3) != cfg_.image_size)
        throw ContractError("unet.forward: x_t shape " + shape_str(x_t.shape()) +
                            " does not match config");
    if (t < 0) throw ContractError("unet.forward: t must be >= 0");
    int bsz = x_t.dim(0);

    Tensor cb;
    if (!c.defined()) throw ContractError("unet.forward: c must be defined");
    if (c.rank() == 1) {
        if (c.dim(0) != cfg_.cond_dim)
            throw ContractError("unet.forward: c has wrong cond_dim");
        cb = ops::broadcast_rows(c, bsz);
    } else if (c.rank() == 2) {
        if (c.dim(1) != cfg_.cond_dim)
            throw ContractError("unet.forward: c has wrong cond_dim");
        if (c.dim(0) == bsz)
            cb = c;
        else if (c.dim(0) == 1)
            cb = ops::broadcast_rows(c, bsz);
        else
            throw ContractError("unet.forward: c batch mismatch");
    } else {
        throw ContractError("unet.forward: c must be rank 1 or 2");
    }

    for (auto* a : adapters)
        if (a) a->begin(x_t, t, cb);

    Tensor temb = ops::broadcast_rows(timestep_embedding(t, cfg_.time_dim), 1);
    temb = time_fc1_.forward(temb, wt);
    temb = ops::silu(temb);
    temb = time_fc2_.forward(temb, wt);

    int levels = int(level_channels_.size());
    size_t bi = 0;
    std::vector<Tensor> skips(static_cast<size_t>(levels));

    Tensor h = stem_.forward(x_t, wt);
    for (int l = 0; l < levels; ++l) {
        for (int j = 0; j < cfg_.blocks_per_level; ++j)
            h = run_block(bi++, h, temb, cb, adapters, wt);
        skips[size_t(l)] = h;
        if (l + 1 < levels)
            h = down_tr_[size_t(l)].forward(ops::avgpool2(h), wt);
    }
    for (int j = 0; j < cfg_.blocks_per_level; ++j)
        h = run_block(bi++, h, temb, cb, adapters, wt);
    size_t ui = 0;
    for (int l = levels - 1; l >= 0; --l) {
        h = ops::add(h, skips[size_t(l)]);
        for (int j = 0; j < cfg_.blocks_per_level; ++j)
            h = run_block(bi++, h, temb, cb, adapters, wt);
        if (l > 0) h = up_tr_[ui++].forward(ops::upsample2(h), wt);
    }

    h = ops::group_norm(h, cfg_.groups);
    h = ops::silu(h);
    return head_.forward(h, wt);
}

void UNet::visit(const std::function<void(const std::string&, const Tensor&)>& f) const {
    auto conv = [&](const Conv3x3& c) {
        f(c.name + ".w", c.w);
        f(c.name + ".b", c.b);
    };
    auto dense = [&](const Dense& d) {
        f(d.name + ".w", d.w);
        f(d.name + ".b", d.b);
    };
    conv(stem_);
    dense(time_fc1_);
    dense(time_fc2_);
    for (const auto& b : blocks_) {
        conv(b.conv1);
        conv(b.conv2);
        dense(b.time_proj);
        dense(b.cond_proj);
    }
    for (const auto& c : down_tr_) conv(c);
    for (const auto& c : up_tr_) conv(c);
    conv(head_);
}

NamedParams UNet::named_params() {
    NamedParams out;
    visit([&](const std::string& n, const Tensor& t) { out.emplace_back(n, t); });
    return out;
}

NamedParams UNet::trainable_params() {
    NamedParams out;
    visit([&](const std::string& n, const Tensor& t) {
        if (t.requires_grad()) out.emplace_back(n, t);
    });
    return out;
}

void UNet::freeze() {
    visit([&](const std::string&, const Tensor& t) {
        const_cast<Tensor&>(t).set_requires_grad(false);
    });
}

int64_t UNet::param_count() const {
    int64_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
}

std::vector<UNet::LayerInfo> UNet::weight_layers() const {
    std::vector<LayerInfo> out;
    visit([&](const std::string& n, const Tensor& t) {
        if (n.size() > 2 && n.compare(n.size() - 2, 2, ".w") == 0)
            out.push_back({n, t.shape()});
    });
    return out;
}

}  // namespace steerlab
