#include "eval/features.hpp"

#include <cmath>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/optim.hpp"

namespace steerlab {

namespace {

Tensor randn_init(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    rng.fill_normal(t.data(), size_t(t.numel()));
    for (auto& v : t.vec()) v = float(double(v) * stddev);
    return t;
}

}  // namespace

FeatureExtractor::FeatureExtractor(int feature_dim, Rng& rng)
    : feature_dim_(feature_dim) {
    if (feature_dim <= 0 || feature_dim % 8 != 0)
        throw ConfigError("feature extractor: feature_dim must be a positive multiple of 8");
    c1_ = {"f.c1", randn_init({16, 3, 3, 3}, 1.0 / std::sqrt(27.0), rng),
           Tensor::zeros({16}, true)};
    c2_ = {"f.c2", randn_init({32, 16, 3, 3}, 1.0 / std::sqrt(144.0), rng),
           Tensor::zeros({32}, true)};
    c3_ = {"f.c3",
           randn_init({feature_dim, 32, 3, 3}, 1.0 / std::sqrt(288.0), rng),
           Tensor::zeros({feature_dim}, true)};
    head_content_ = {"f.head_content",
                     randn_init({feature_dim, kNumContents},
                                1.0 / std::sqrt(double(feature_dim)), rng),
                     Tensor::zeros({kNumContents}, true)};
    head_style_ = {"f.head_style",
                   randn_init({feature_dim, kNumStyles},
                              1.0 / std::sqrt(double(feature_dim)), rng),
                   Tensor::zeros({kNumStyles}, true)};
}

Tensor FeatureExtractor::features(const Tensor& x) {
    Tensor h = c1_.forward(x, nullptr);
    h = ops::group_norm(h, 4);
    h = ops::silu(h);
    h = ops::avgpool2(h);
    h = c2_.forward(h, nullptr);
    h = ops::group_norm(h, 8);
    h = ops::silu(h);
    h = ops::avgpool2(h);
    h = c3_.forward(h, nullptr);
    h = ops::group_norm(h, 8);
    h = ops::silu(h);
    return ops::global_mean_pool(h);
}

std::pair<Tensor, Tensor> FeatureExtractor::logits(const Tensor& x) {
    Tensor f = features(x);
    return {head_content_.forward(f, nullptr), head_style_.forward(f, nullptr)};
}

NamedParams FeatureExtractor::params() {
    NamedParams out;
    for (const Conv3x3* c : {&c1_, &c2_, &c3_}) {
        out.emplace_back(c->name + ".w", c->w);
        out.emplace_back(c->name + ".b", c->b);
    }
    for (const Dense* d : {&head_content_, &head_style_}) {
        out.emplace_back(d->name + ".w", d->w);
        out.emplace_back(d->name + ".b", d->b);
    }
    return out;
}

void FeatureExtractor::freeze() {
    for (auto& [name, t] : params()) t.set_requires_grad(false);
    frozen_ = true;
}

double FeatureExtractor::joint_accuracy(const DatasetSplit& split, size_t begin,
                                        size_t end) {
    if (begin >= end || end > split.size())
        throw ContractError("joint_accuracy: bad slice");
    NoGradScope ng;
    int64_t correct = 0;
    size_t i = begin;
    while (i < end) {
        size_t j = std::min(end, i + 32);
        std::vector<Tensor> imgs(split.images.begin() + long(i),
                                 split.images.begin() + long(j));
        Tensor batch = ops::stack_batch(imgs);
        auto [lc, ls] = logits(batch);
        for (size_t r = 0; r < j - i; ++r) {
            auto argmax = [&](const Tensor& l, int cols) {
                int best = 0;
                const float* row = l.data() + int64_t(r) * cols;
                for (int k = 1; k < cols; ++k)
                    if (row[k] > row[best]) best = k;
                return best;
            };
            const auto& spec = split.prompts[i + r];
            if (argmax(lc, kNumContents) == spec.content_id &&
                argmax(ls, kNumStyles) == spec.style_id)
                ++correct;
        }
        i = j;
    }
    return double(correct) / double(end - begin);
}

std::vector<CheckpointRecord> FeatureExtractor::to_records() {
    return records_from_params(params());
}

FeatureExtractor FeatureExtractor::from_records(
    const std::vector<CheckpointRecord>& recs) {
    int fd = 0;
    for (const auto& r : recs)
        if (r.name == "f.c3.w") fd = r.dims.at(0);
    if (fd == 0) throw IoError("feature checkpoint: missing f.c3.w");
    Rng dummy(0);
    FeatureExtractor f(fd, dummy);
    NamedParams p = f.params();
    load_params_from_records(recs, p);
    f.freeze();
    return f;
}

FeatureExtractor train_feature_extractor(const DatasetSplit& feat_train,
                                         const FeatConfig& cfg, uint64_t seed) {
    if (feat_train.size() == 0)
        throw ContractError("train_feature_extractor: empty split");
    if (cfg.holdout <= 0 || size_t(cfg.holdout) >= feat_train.size())
        throw ConfigError("feature extractor: holdout must leave training data");
    size_t train_n = feat_train.size() - size_t(cfg.holdout);

    Rng init_rng = Rng::derive(seed, 201);
    Rng batch_rng = Rng::derive(seed, 202);
    FeatureExtractor f(cfg.feature_dim, init_rng);

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = 1e-4;
    ocfg.clip_norm = 1.0;
    NamedParams params = f.params();
    AdamW opt(params, ocfg);

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Tensor> imgs;
        std::vector<int> lab_c, lab_s;
        for (int b = 0; b < cfg.batch; ++b) {
            int idx = batch_rng.uniform_int(0, int(train_n) - 1);
            imgs.push_back(feat_train.images[size_t(idx)]);
            lab_c.push_back(feat_train.prompts[size_t(idx)].content_id);
            lab_s.push_back(feat_train.prompts[size_t(idx)].style_id);
        }
        TapeScope scope;
        Tensor batch = ops::stack_batch(imgs);
        auto [lc, ls] = f.logits(batch);
        Tensor loss = ops::add(ops::cross_entropy(lc, lab_c),
                               ops::cross_entropy(ls, lab_s));
        if (!std::isfinite(double(loss.item())))
            throw NumericError("feature extractor: non-finite loss at step " +
                               std::to_string(step));
        opt.zero_grad();
        loss.backward();
        opt.step();
    }

    double acc = f.joint_accuracy(feat_train, train_n, feat_train.size());
    if (acc < cfg.accuracy_gate)
        throw GateError("feature extractor holdout accuracy " +
                        std::to_string(acc) + " below gate " +
                        std::to_string(cfg.accuracy_gate) +
                        "; metrics would be meaningless");
    f.freeze();
    return f;
}

}  // namespace steerlab
