#include "core/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "core/error.hpp"

namespace steerlab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'T', 'L', 'B'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos) {
    if (pos + sizeof(T) > in.size())
        throw IoError("checkpoint: truncated record data");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointRecord>& records) {
    std::string out;
    out.append(kMagic, 4);
    put<uint32_t>(out, kVersion);
    put<uint32_t>(out, uint32_t(records.size()));
    for (const auto& r : records) {
        if (r.name.size() > 0xFFFF)
            throw ContractError("checkpoint: record name too long: " + r.name);
        int64_t n = 1;
        for (int d : r.dims) n *= d;
        if (n != int64_t(r.data.size()))
            throw ContractError("checkpoint: dims/data mismatch in record " +
                                r.name);
        put<uint16_t>(out, uint16_t(r.name.size()));
        out.append(r.name);
        put<uint8_t>(out, uint8_t(r.dims.size()));
        for (int d : r.dims) put<uint32_t>(out, uint32_t(d));
        size_t bytes = r.data.size() * sizeof(float);
        size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, r.data.data(), bytes);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open for write: " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("checkpoint: write failed: " + path);
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open: " + path);
    std::string in((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
    size_t pos = 0;
    if (in.size() < 12 || std::memcmp(in.data(), kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    pos = 4;
    uint32_t version = take<uint32_t>(in, pos);
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " +
                      std::to_string(version) + " in " + path);
    uint32_t count = take<uint32_t>(in, pos);
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; i++) {
        CheckpointRecord r;
        uint16_t name_len = take<uint16_t>(in, pos);
        if (pos + name_len > in.size())
            throw IoError("checkpoint: truncated name in " + path);
        r.name.assign(in.data() + pos, name_len);
        pos += name_len;
        uint8_t rank = take<uint8_t>(in, pos);
        int64_t n = 1;
        for (uint8_t d = 0; d < rank; d++) {
            uint32_t dim = take<uint32_t>(in, pos);
            r.dims.push_back(int(dim));
            n *= dim;
        }
        r.data.resize(size_t(n));
        if (pos + size_t(n) * sizeof(float) > in.size())
            throw IoError("checkpoint: truncated payload in " + path);
        std::memcpy(r.data.data(), in.data() + pos, size_t(n) * sizeof(float));
        pos += size_t(n) * sizeof(float);
        records.push_back(std::move(r));
    }
    if (pos != in.size())
        throw IoError("checkpoint: trailing bytes in " + path);
    return records;
}

std::vector<CheckpointRecord> records_from_params(const NamedParams& params) {
    std::vector<CheckpointRecord> records;
    records.reserve(params.size());
    for (const auto& [name, t] : params)
        records.push_back({name, t.shape(), t.vec()});
    return records;
}

void load_params_from_records(const std::vector<CheckpointRecord>& records,
                              NamedParams& params) {
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    for (auto& [name, t] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IoError("checkpoint: missing record '" + name + "'");
        const CheckpointRecord& r = *it->second;
        if (r.dims != t.shape())
            throw IoError("checkpoint: shape mismatch for '" + name + "': file " +
                          shape_str(r.dims) + " vs model " + shape_str(t.shape()));
        t.vec() = r.data;
    }
}

uint64_t fnv1a(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("hash_file: cannot open: " + path);
    std::string in((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
    return fnv1a(in.data(), in.size());
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return std::string(buf);
}

}  // namespace steerlab
