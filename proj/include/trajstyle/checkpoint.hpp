// ============================================================================
// checkpoint.hpp - Flat binary parameter checkpoints: named double arrays
// with shape headers. Round-trips bitwise.
//
// Layout (little endian):
//   magic "TSCKPT01", u32 array count, then per array:
//   u32 name length, name bytes, u32 ndim, u32 dims[ndim], f64 data[]
// ============================================================================

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"
#include "trajstyle/numkern.hpp"

namespace trajstyle::numkern {

struct NamedArray {
    std::vector<int> shape;
    std::vector<double> data;
};

namespace ckpt_detail {

inline void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace ckpt_detail

inline void save_arrays(const std::string& path,
                        const std::vector<std::pair<std::string, NamedArray>>& arrays) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write("TSCKPT01", 8);
    ckpt_detail::write_u32(f, (uint32_t)arrays.size());
    for (const auto& [name, arr] : arrays) {
        ckpt_detail::write_u32(f, (uint32_t)name.size());
        f.write(name.data(), (std::streamsize)name.size());
        ckpt_detail::write_u32(f, (uint32_t)arr.shape.size());
        for (int d : arr.shape) ckpt_detail::write_u32(f, (uint32_t)d);
        f.write(reinterpret_cast<const char*>(arr.data.data()),
                (std::streamsize)(arr.data.size() * sizeof(double)));
    }
    if (!f) throw DataError("write failed: " + path);
}

inline std::map<std::string, NamedArray> load_arrays(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("missing file: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != "TSCKPT01")
        throw DataError(path + ": not a checkpoint file");
    const uint32_t count = ckpt_detail::read_u32(f);
    std::map<std::string, NamedArray> out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t nlen = ckpt_detail::read_u32(f);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        const uint32_t ndim = ckpt_detail::read_u32(f);
        NamedArray arr;
        size_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            arr.shape.push_back((int)ckpt_detail::read_u32(f));
            total *= (size_t)arr.shape.back();
        }
        arr.data.resize(total);
        f.read(reinterpret_cast<char*>(arr.data.data()),
               (std::streamsize)(total * sizeof(double)));
        if (!f) throw DataError(path + ": truncated checkpoint");
        out.emplace(std::move(name), std::move(arr));
    }
    return out;
}

// Save params plus buffers of a network.
inline void save_checkpoint(const std::string& path, const std::vector<Param*>& params,
                            const std::vector<std::pair<std::string, std::vector<double>*>>&
                                buffers = {}) {
    std::vector<std::pair<std::string, NamedArray>> arrays;
    for (const auto* p : params) arrays.push_back({p->name, {p->shape, p->value}});
    for (const auto& [name, buf] : buffers)
        arrays.push_back({name, {{(int)buf->size()}, *buf}});
    save_arrays(path, arrays);
}

inline void load_checkpoint(const std::string& path, const std::vector<Param*>& params,
                            const std::vector<std::pair<std::string, std::vector<double>*>>&
                                buffers = {}) {
    auto arrays = load_arrays(path);
    for (auto* p : params) {
        auto it = arrays.find(p->name);
        if (it == arrays.end()) throw DataError(path + ": missing parameter " + p->name);
        if (it->second.data.size() != p->size())
            throw DataError(path + ": shape mismatch for parameter " + p->name);
        p->value = it->second.data;
    }
    for (const auto& [name, buf] : buffers) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw DataError(path + ": missing buffer " + name);
        if (it->second.data.size() != buf->size())
            throw DataError(path + ": shape mismatch for buffer " + name);
        *buf = it->second.data;
    }
}

}  // namespace trajstyle::numkern
