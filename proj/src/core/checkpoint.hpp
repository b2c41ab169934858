#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace steerlab {

// Versioned binary tensor container. Layout (all little-endian):
//   "STLB" | version u32 | record count u32
//   per record: name_len u16 | name bytes | rank u8 | dims u32[rank] | f32 data
// Round-trips byte-identically: save(load(f)) == f.
struct CheckpointRecord {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;
};

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

std::vector<CheckpointRecord> records_from_params(const NamedParams& params);

// Copies record data into matching named parameters (shape-checked).
void load_params_from_records(const std::vector<CheckpointRecord>& records,
                              NamedParams& params);

// FNV-1a 64-bit over raw bytes; the provenance hash used throughout reports.
uint64_t fnv1a(const void* data, size_t len);
uint64_t hash_file(const std::string& path);
std::string hash_hex(uint64_t h);

}  // namespace steerlab
