#pragma once
#include <memory>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/optim.hpp"
#include "data/dataset.hpp"
#include "diffusion/ddim.hpp"
#include "eval/features.hpp"
#include "model/lora.hpp"
#include "model/rank1.hpp"
#include "model/sidebranch.hpp"
#include "model/steering.hpp"
#include "model/unet.hpp"

namespace steerlab {

UNetConfig unet_config_from(const Config& cfg);
CorpusConfig corpus_config_from(const Config& cfg);
SteeringConfig steering_config_from(const Config& cfg);
LoraConfig lora_config_from(const Config& cfg);
FeatConfig feat_config_from(const Config& cfg);
SamplerConfig sampler_config_from(const Config& cfg);
NoiseSchedule schedule_from(const Config& cfg);

// Noise predictor over the backbone plus whatever adapters are attached.
struct UNetEps : EpsModel {
    UNet* net = nullptr;
    AdapterSet adapters;
    WeightTransform* wt = nullptr;
    Tensor eps(const Tensor& x_t, int t, const Tensor& c) override {
        return net->forward(x_t, t, c, adapters, wt);
    }
};

// Frozen pretrained bundle every later stage loads.
struct Backbone {
    UNetConfig ucfg;
    std::unique_ptr<UNet> net;
    PromptTable table;
    std::string ckpt_path;
    std::string hash;  // checkpoint file hash, hex
};

std::string backbone_path(const std::string& out_dir);
std::string adapter_path(const std::string& out_dir, const std::string& kind);
std::string extractor_path(const std::string& out_dir);

Backbone load_backbone(const Config& cfg, const std::string& path);

// Shared epsilon-matching training loop. Trains `params` while the backbone
// stays frozen; adapters/wt are attached to every forward. Returns the loss
// curve. style_zero_prompts embeds every sample's prompt with style 0 (the
// content-only prompt under which adapters learn to impose the target style).
std::vector<double> train_eps_model(UNet& net, PromptTable& table,
                                    const DatasetSplit& data,
                                    bool style_zero_prompts, NamedParams params,
                                    const AdapterSet& adapters,
                                    WeightTransform* wt,
                                    const AdamWConfig& ocfg, int steps,
                                    int batch, double cond_dropout,
                                    const NoiseSchedule& sched, uint64_t seed,
                                    std::vector<double>* probe_loss = nullptr);

// Trains backbone + prompt table on the neutral split with condition
// dropout; writes backbone.stlb, a sample grid, and the loss curve. Returns
// the loss curve.
std::vector<double> cmd_pretrain(const Config& cfg, const std::string& out_dir);

// kind: steering | lora | rslora | rank1 | sidebranch. rank1 extracts from
// steering checkpoint instead of training. Writes adapter_<kind>.stlb and a
// loss curve file for trained kinds.
void cmd_train_adapter(const Config& cfg, const std::string& out_dir,
                       const std::string& kind);

// Trains (or loads) the frozen feature extractor; writes extractor.stlb.
FeatureExtractor ensure_extractor(const Config& cfg, const Corpus& corpus,
                                  const std::string& out_dir);

// Median per-call sampling wall-clock for base/steered/lora/sidebranch;
// writes timings.json (timings never enter results.json — they would break
// byte-level determinism).
void cmd_bench(const Config& cfg, const std::string& out_dir);

// Fast E0 + gradient + container round-trip suite on a throwaway model.
// Throws on any failure.
void cmd_selftest(const Config& cfg);

}  // namespace steerlab
