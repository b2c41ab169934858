#include "model/sidebranch.hpp"

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

namespace {

Tensor clone_param(const Tensor& t) {
    return Tensor::from(t.shape(), t.vec(), /*requires_grad=*/true);
}

Conv3x3 clone_conv(const Conv3x3& c, const std::string& name) {
    return {name, clone_param(c.w), clone_param(c.b)};
}

Dense clone_dense(const Dense& d, const std::string& name) {
    return {name, clone_param(d.w), clone_param(d.b)};
}

ResBlock clone_block(const ResBlock& b) {
    ResBlock out;
    out.desc = b.desc;
    out.groups = b.groups;
    std::string base = "branch." + b.desc.block_id;
    out.conv1 = clone_conv(b.conv1, base + ".conv1");
    out.conv2 = clone_conv(b.conv2, base + ".conv2");
    out.time_proj = clone_dense(b.time_proj, base + ".time");
    out.cond_proj = clone_dense(b.cond_proj, base + ".cond");
    return out;
}

int up_level_of(const std::string& block_id) {
    // "up<l>.b<j>"
    size_t dot = block_id.find('.');
    return std::stoi(block_id.substr(2, dot - 2));
}

}  // namespace

SideBranchAdapter::SideBranchAdapter(const UNet& net) {
    const auto& cfg = net.config();
    groups_ = cfg.groups;
    blocks_per_level_ = cfg.blocks_per_level;
    time_dim_ = cfg.time_dim;
    level_channels_ = net.level_channels_;
    int levels = int(level_channels_.size());

    stem_ = clone_conv(net.stem_, "branch.stem");
    time_fc1_ = clone_dense(net.time_fc1_, "branch.time_mlp.fc1");
    time_fc2_ = clone_dense(net.time_fc2_, "branch.time_mlp.fc2");
    for (const auto& b : net.blocks_) {
        if (b.desc.placement == Placement::down)
            down_blocks_.push_back(clone_block(b));
        else if (b.desc.placement == Placement::mid)
            mid_blocks_.push_back(clone_block(b));
    }
    for (size_t i = 0; i < net.down_tr_.size(); ++i)
        down_tr_.push_back(
            clone_conv(net.down_tr_[i], "branch.down_tr" + std::to_string(i)));

    for (const auto& d : net.descriptors()) {
        if (d.placement == Placement::down) continue;
        Merge m;
        m.block_id = d.block_id;
        int src_ch;
        if (d.placement == Placement::mid) {
            m.level = -1;
            src_ch = level_channels_.back();
        } else {
            int src_level = up_level_of(d.block_id);
            m.level = (src_level == levels - 1) ? -1 : src_level;
            src_ch = (m.level == -1) ? level_channels_.back()
                                     : level_channels_[size_t(m.level)];
        }
        m.w = Tensor::zeros({d.channels, src_ch}, true);
        m.b = Tensor::zeros({d.channels}, true);
        merges_.push_back(std::move(m));
    }
}

void SideBranchAdapter::begin(const Tensor& x_t, int t, const Tensor& c) {
    Tensor temb = ops::broadcast_rows(timestep_embedding(t, time_dim_), 1);
    temb = time_fc1_.forward(temb, nullptr);
    temb = ops::silu(temb);
    temb = time_fc2_.forward(temb, nullptr);

    int levels = int(level_channels_.size());
    feats_.assign(size_t(levels), Tensor());
    Tensor h = stem_.forward(x_t, nullptr);
    size_t bi = 0;
    for (int l = 0; l < levels; ++l) {
        for (int j = 0; j < blocks_per_level_; ++j)
            h = down_blocks_[bi++].forward(h, temb, c, nullptr);
        feats_[size_t(l)] = h;
        if (l + 1 < levels)
            h = down_tr_[size_t(l)].forward(ops::avgpool2(h), nullptr);
    }
    for (auto& b : mid_blocks_) h = b.forward(h, temb, c, nullptr);
    mid_feat_ = h;
}

Tensor SideBranchAdapter::delta(const BlockDescriptor& block, const Tensor& h) {
    const Merge* merge = nullptr;
    for (const auto& m : merges_)
        if (m.block_id == block.block_id) {
            merge = &m;
            break;
        }
    if (!merge) return Tensor();
    if (!mid_feat_.defined())
        throw ContractError("sidebranch.delta called before begin()");
    const Tensor& src =
        (merge->level == -1) ? mid_feat_ : feats_[size_t(merge->level)];
    if (src.dim(2) != h.dim(2) || src.dim(3) != h.dim(3))
        throw ContractError("sidebranch: feature resolution mismatch at '" +
                            block.block_id + "'");
    Tensor d = ops::conv1x1(src, merge->w, merge->b);
    return ops::scale(d, multiplier_);
}

NamedParams SideBranchAdapter::trainable_params() {
    NamedParams out;
    auto conv = [&](const Conv3x3& c) {
        out.emplace_back(c.name + ".w", c.w);
        out.emplace_back(c.name + ".b", c.b);
    };
    auto dense = [&](const Dense& d) {
        out.emplace_back(d.name + ".w", d.w);
        out.emplace_back(d.name + ".b", d.b);
    };
    conv(stem_);
    dense(time_fc1_);
    dense(time_fc2_);
    for (auto& b : down_blocks_) {
        conv(b.conv1);
        conv(b.conv2);
        dense(b.time_proj);
        dense(b.cond_proj);
    }
    for (auto& c : down_tr_) conv(c);
    for (auto& b : mid_blocks_) {
        conv(b.conv1);
        conv(b.conv2);
        dense(b.time_proj);
        dense(b.cond_proj);
    }
    for (auto& m : merges_) {
        out.emplace_back("merge." + m.block_id + ".w", m.w);
        out.emplace_back("merge." + m.block_id + ".b", m.b);
    }
    return out;
}

int64_t SideBranchAdapter::param_count() const {
    int64_t n = 0;
    auto self = const_cast<SideBranchAdapter*>(this);
    for (const auto& [name, t] : self->trainable_params()) n += t.numel();
    return n;
}

std::vector<CheckpointRecord> SideBranchAdapter::to_records() {
    return records_from_params(trainable_params());
}

SideBranchAdapter SideBranchAdapter::from_records(
    const std::vector<CheckpointRecord>& recs, const UNet& net) {
    SideBranchAdapter m(net);
    NamedParams params = m.trainable_params();
    load_params_from_records(recs, params);
    return m;
}

}  // namespace steerlab
