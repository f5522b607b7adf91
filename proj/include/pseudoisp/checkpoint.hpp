// Copyright (c) 2026 The Pseudo-ISP Project Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Named-array container used for model parameters and simulator oracles.
//
//   offset  size  field
//   0       8     magic "PISPCKPT"
//   8       4     format version (u32 little-endian), currently 1
//   12      4     reserved, zero
//   16      8     header length L in bytes (u64 little-endian)
//   24      L     UTF-8 JSON header
//   ...           zero padding up to the next multiple of 8
//   D       ...   data section; each array starts at D + offset (8-byte aligned)
//
// The JSON header is
//   {"format": "pseudoisp-checkpoint", "version": 1, "metadata": {...},
//    "arrays": [{"name", "dtype": "f32"|"f64", "shape": [...], "offset", "nbytes"}]}
// and array payloads are raw little-endian IEEE-754 values in row-major order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pseudoisp/tensor.hpp"

namespace pseudoisp {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DType { f32, f64 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }
inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

struct ArrayRecord {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::vector<double> values;
};

class Checkpoint {
public:
    static constexpr char kMagic[8] = {'P', 'I', 'S', 'P', 'C', 'K', 'P', 'T'};
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json metadata = nlohmann::json::object();

    template <typename T>
    void put(const std::string& name, const Shape& shape, std::span<const T> values,
             DType dtype = std::is_same_v<T, double> ? DType::f64 : DType::f32) {
        if (numel(shape) != values.size())
            throw ShapeError("checkpoint: array '" + name + "' shape " + to_string(shape) +
                             " does not match " + std::to_string(values.size()) + " values");
        ArrayRecord rec{name, dtype, shape, std::vector<double>(values.begin(), values.end())};
        auto it = index_.find(name);
        if (it != index_.end()) {
            arrays_[it->second] = std::move(rec);
        } else {
            index_[name] = arrays_.size();
            arrays_.push_back(std::move(rec));
        }
    }

    template <typename T>
    void put(const std::string& name, const Tensor<T>& t) {
        put<T>(name, t.shape(), t.data());
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const ArrayRecord& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw CheckpointError("checkpoint: no array named '" + name + "'");
        return arrays_[it->second];
    }

    template <typename T>
    Tensor<T> tensor(const std::string& name) const {
        const auto& rec = at(name);
        return Tensor<T>(rec.shape, std::vector<T>(rec.values.begin(), rec.values.end()));
    }

    const std::vector<ArrayRecord>& arrays() const { return arrays_; }

    std::vector<char> serialize() const {
        nlohmann::json header;
        header["format"] = "pseudoisp-checkpoint";
        header["version"] = kVersion;
        header["metadata"] = metadata;
        header["arrays"] = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const auto& a : arrays_) {
            const std::uint64_t nbytes = a.values.size() * dtype_size(a.dtype);
            header["arrays"].push_back({{"name", a.name},
                                        {"dtype", dtype_name(a.dtype)},
                                        {"shape", a.shape},
                                        {"offset", offset},
                                        {"nbytes", nbytes}});
            offset += align8(nbytes);
        }
        const std::string text = header.dump();
        std::vector<char> out;
        out.insert(out.end(), kMagic, kMagic + 8);
        append_le<std::uint32_t>(out, kVersion);
        append_le<std::uint32_t>(out, 0);
        append_le<std::uint64_t>(out, text.size());
        out.insert(out.end(), text.begin(), text.end());
        out.resize(align8(out.size()), 0);
        const std::size_t data_start = out.size();
        out.resize(data_start + offset, 0);
        char* cursor = out.data() + data_start;
        for (const auto& a : arrays_) {
            for (double v : a.values) {
                if (a.dtype == DType::f32) {
                    write_le<std::uint32_t>(cursor, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
                    cursor += 4;
                } else {
                    write_le<std::uint64_t>(cursor, std::bit_cast<std::uint64_t>(v));
                    cursor += 8;
                }
            }
            const std::size_t used = a.values.size() * dtype_size(a.dtype);
            cursor += align8(used) - used;
        }
        return out;
    }

    static Checkpoint deserialize(std::span<const char> bytes, const std::string& origin = "<memory>") {
        auto fail = [&](const std::string& what) {
            return CheckpointError("checkpoint " + origin + ": " + what);
        };
        if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw fail("bad magic");
        const auto version = read_le<std::uint32_t>(bytes.data() + 8);
        if (version != kVersion) throw fail("unsupported version " + std::to_string(version));
        const auto header_len = read_le<std::uint64_t>(bytes.data() + 16);
        if (24 + header_len > bytes.size()) throw fail("truncated header");
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(bytes.begin() + 24, bytes.begin() + 24 + header_len);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("malformed header: ") + e.what());
        }
        const std::size_t data_start = align8(24 + header_len);
        Checkpoint ckpt;
        ckpt.metadata = header.value("metadata", nlohmann::json::object());
        for (const auto& entry : header.at("arrays")) {
            ArrayRecord rec;
            rec.name = entry.at("name").get<std::string>();
            const auto dt = entry.at("dtype").get<std::string>();
            if (dt == "f32")
                rec.dtype = DType::f32;
            else if (dt == "f64")
                rec.dtype = DType::f64;
            else
                throw fail("array '" + rec.name + "' has unknown dtype " + dt);
            rec.shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            const std::size_t count = numel(rec.shape);
            if (nbytes != count * dtype_size(rec.dtype)) throw fail("array '" + rec.name + "' size mismatch");
            if (data_start + offset + nbytes > bytes.size()) throw fail("array '" + rec.name + "' truncated");
            const char* src = bytes.data() + data_start + offset;
            rec.values.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                if (rec.dtype == DType::f32)
                    rec.values[i] = std::bit_cast<float>(read_le<std::uint32_t>(src + 4 * i));
                else
                    rec.values[i] = std::bit_cast<double>(read_le<std::uint64_t>(src + 8 * i));
            }
            ckpt.index_[rec.name] = ckpt.arrays_.size();
            ckpt.arrays_.push_back(std::move(rec));
        }
        return ckpt;
    }

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
        const auto bytes = serialize();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return deserialize(bytes, path.string());
    }

private:
    static constexpr std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t(7); }

    template <typename U>
    static void write_le(char* dst, U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    template <typename U>
    static void append_le(std::vector<char>& out, U v) {
        char buf[sizeof(U)];
        write_le(buf, v);
        out.insert(out.end(), buf, buf + sizeof(U));
    }
    template <typename U>
    static U read_le(const char* src) {
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(src[i])) << (8 * i);
        return v;
    }

    std::vector<ArrayRecord> arrays_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace pseudoisp
