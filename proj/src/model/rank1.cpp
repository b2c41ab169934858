#include "model/rank1.hpp"

#include <cmath>
#include <map>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

Rank1Adapter::Rank1Adapter(std::vector<Direction> dirs, double alpha)
    : dirs_(std::move(dirs)), alpha_(alpha) {
    for (const auto& d : dirs_) {
        double n2 = 0.0;
        for (float v : d.unit) n2 += double(v) * double(v);
        if (std::fabs(std::sqrt(n2) - 1.0) > 1e-5)
            throw ContractError("rank1: direction for '" + d.block_id +
                                "' is not unit norm");
    }
}

Tensor Rank1Adapter::delta(const BlockDescriptor& block, const Tensor& h) {
    const Direction* dir = nullptr;
    for (const auto& d : dirs_)
        if (d.block_id == block.block_id) {
            dir = &d;
            break;
        }
    if (!dir) return Tensor();
    if (h.rank() != 4 || h.dim(1) != int(dir->unit.size()))
        throw ContractError("rank1: activation shape mismatch for '" +
                            block.block_id + "'");
    int bsz = h.dim(0), ch = h.dim(1), hh = h.dim(2), ww = h.dim(3);
    Tensor d = Tensor::zeros({bsz, ch, hh, ww});
    float* out = d.data();
    int64_t hw = int64_t(hh) * ww;
    for (int b = 0; b < bsz; ++b)
        for (int c = 0; c < ch; ++c) {
            float v = float(alpha_ * double(dir->unit[size_t(c)]));
            float* p = out + (int64_t(b) * ch + c) * hw;
            for (int64_t i = 0; i < hw; ++i) p[i] = v;
        }
    return d;
}

std::vector<CheckpointRecord> Rank1Adapter::to_records() const {
    std::vector<CheckpointRecord> recs;
    for (const auto& d : dirs_) {
        CheckpointRecord r;
        r.name = "dir." + d.block_id;
        r.dims = {int(d.unit.size())};
        r.data = d.unit;
        recs.push_back(std::move(r));
    }
    return recs;
}

Rank1Adapter Rank1Adapter::from_records(
    const std::vector<CheckpointRecord>& recs) {
    std::vector<Direction> dirs;
    for (const auto& r : recs) {
        if (r.name.compare(0, 4, "dir.") != 0) continue;
        dirs.push_back({r.name.substr(4), r.data});
    }
    if (dirs.empty()) throw IoError("rank1 checkpoint: no direction records");
    return Rank1Adapter(std::move(dirs), 0.0);
}

namespace {

// Delegates to the steering module while accumulating per-channel means of
// every delta it emits.
struct CaptureAdapter : ActivationAdapter {
    SteeringModule* steering;
    std::map<std::string, std::pair<std::vector<double>, int64_t>> acc;

    void begin(const Tensor& x_t, int t, const Tensor& c) override {
        steering->begin(x_t, t, c);
    }
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override {
        Tensor d = steering->delta(block, h);
        if (!d.defined()) return d;
        int bsz = d.dim(0), ch = d.dim(1);
        int64_t hw = int64_t(d.dim(2)) * d.dim(3);
        auto& slot = acc[block.block_id];
        if (slot.first.empty()) slot.first.assign(size_t(ch), 0.0);
        const float* p = d.data();
        for (int b = 0; b < bsz; ++b)
            for (int c = 0; c < ch; ++c) {
                double s = 0.0;
                const float* q = p + (int64_t(b) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) s += double(q[i]);
                slot.first[size_t(c)] += s;
            }
        slot.second += int64_t(bsz) * hw;
        return d;
    }
};

}  // namespace

Rank1Adapter rank1_extract(UNet& net, SteeringModule& steering,
                           const Tensor& probe_x, const std::vector<int>& ts,
                           const Tensor& c, double alpha) {
    NoGradScope ng;
    CaptureAdapter cap;
    cap.steering = &steering;
    for (int t : ts) net.forward(probe_x, t, c, {&cap});

    std::vector<Rank1Adapter::Direction> dirs;
    // Preserve the steered-block order rather than map order.
    for (const auto& id : steering.steered_blocks()) {
        auto it = cap.acc.find(id);
        if (it == cap.acc.end())
            throw ContractError("rank1_extract: block '" + id +
                                "' emitted no deltas");
        const auto& [sums, count] = it->second;
        std::vector<float> unit(sums.size());
        double n2 = 0.0;
        for (size_t i = 0; i < sums.size(); ++i) {
            double m = sums[i] / double(count);
            n2 += m * m;
            unit[i] = float(m);
        }
        double norm = std::sqrt(n2);
        if (!(norm > 1e-12))
            throw NumericError("rank1_extract: degenerate direction for '" + id +
                               "' (all-zero steering residuals)");
        for (auto& v : unit) v = float(double(v) / norm);
        dirs.push_back({id, std::move(unit)});
    }
    return Rank1Adapter(std::move(dirs), alpha);
}

}  // namespace steerlab
