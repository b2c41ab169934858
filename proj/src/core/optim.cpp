#include "core/optim.hpp"

#include <cmath>

#include "core/error.hpp"

namespace steerlab {

AdamW::AdamW(NamedParams params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, p] : params_) {
        (void)name;
        m_.emplace_back(size_t(p.numel()), 0.0);
        v_.emplace_back(size_t(p.numel()), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) {
        (void)name;
        p.zero_grad();
    }
}

double AdamW::lr_at(int64_t step) const {
    if (cfg_.total_steps <= 0) return cfg_.lr;
    double frac = double(step) / double(cfg_.total_steps);
    if (frac > 1.0) frac = 1.0;
    return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

void AdamW::step() {
    for (auto& [name, p] : params_)
        if (!p.has_grad())
            throw ContractError("adamw: parameter '" + name +
                                "' has no gradient buffer");
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0) {
        double sq = 0.0;
        for (auto& [name, p] : params_) {
            (void)name;
            for (float g : p.grad_vec()) sq += double(g) * double(g);
        }
        double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }
    double lr = lr_at(t_);
    t_ += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t pi = 0; pi < params_.size(); pi++) {
        Tensor& p = params_[pi].second;
        float* w = p.data();
        const std::vector<float>& g = p.grad_vec();
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        for (size_t i = 0; i < g.size(); i++) {
            double gi = double(g[i]) * clip_scale;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + cfg_.eps);
            double wd = cfg_.weight_decay * double(w[i]);
            w[i] = float(double(w[i]) - lr * (upd + wd));
        }
    }
}

}  // namespace steerlab
