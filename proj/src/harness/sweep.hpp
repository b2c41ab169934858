#pragma once
#include <map>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "eval/metrics.hpp"

namespace steerlab {

struct SweepOutput {
    std::string adapter;
    std::vector<TradeoffPoint> rows;
    std::map<std::string, std::string> meta;  // hashes, budgets, knob names
};

// Evaluates one trained adapter over its knob grid: for every
// (prompt, seed), one base trajectory and one steered trajectory per grid
// value from the same terminal latent, all metrics per row (inversion run
// against the frozen backbone at guidance 1). Writes sweep_<kind>.json.
// kind: steering | lora | rslora | rank1 | sidebranch.
SweepOutput run_sweep(const Config& cfg, const std::string& out_dir,
                      const std::string& kind);

// Trains a fresh steering module per k in eval.k_grid (same budget), sweeps
// each over the scale grid, and writes per-k fragments
// (sweep_steering_k<k>.json) with adapter tag "steering_k<k>".
std::vector<SweepOutput> run_k_sweep(const Config& cfg,
                                     const std::string& out_dir);

}  // namespace steerlab
