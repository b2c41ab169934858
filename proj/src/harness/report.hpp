#pragma once
#include <string>

#include "core/config.hpp"

namespace steerlab {

// Assembles every sweep_*.json fragment in out_dir into the canonical
// deliverables: results.json (sorted keys, rows sorted by adapter/knob/seed/
// prompt, per-row provenance hashes, no timings), results.csv (same rows),
// tradeoff.svg, monotonicity.svg, and summary.md. Throws ConfigError when no
// fragments exist yet.
void cmd_report(const Config& cfg, const std::string& out_dir);

// Matched-operating-point comparison: steering vs every baseline fragment
// present, pairing pooled curve points whose clip_i differ by at most
// eval.match_tol. Prints the table, writes compare.json, and throws
// GateError when no baseline yields a single match (with a diagnostic of the
// achievable clip ranges).
void cmd_compare(const Config& cfg, const std::string& out_dir);

}  // namespace steerlab
