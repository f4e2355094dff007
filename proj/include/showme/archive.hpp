#pragma once

// Binary tensor container shared by dataset samples and checkpoints.
//
// Layout (little-endian):
//   magic "SHOWME01"
//   u32 record count
//   per record: u32 name length, name bytes, u8 dtype, u32 ndim,
//               i64 dims[ndim], u64 payload bytes, payload
//
// dtype codes: 0 = f32, 1 = f64, 2 = i64, 3 = u8 (also used for text).

#include "showme/common.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

namespace showme {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class TensorArchive {
public:
    static constexpr char kMagic[8] = {'S', 'H', 'O', 'W', 'M', 'E', '0', '1'};

    void put(const std::string& name, const torch::Tensor& t) {
        auto c = t.detach().cpu().contiguous();
        dtype_code(c.scalar_type(), name);
        for (auto& [n, v] : records_) {
            if (n == name) {
                v = c.clone();
                return;
            }
        }
        records_.emplace_back(name, c.clone());
    }

    void put_text(const std::string& name, const std::string& text) {
        auto t = torch::empty({static_cast<int64_t>(text.size())}, torch::kUInt8);
        if (!text.empty()) std::memcpy(t.data_ptr(), text.data(), text.size());
        put(name, t);
    }

    bool contains(const std::string& name) const {
        for (const auto& r : records_)
            if (r.first == name) return true;
        return false;
    }

    const torch::Tensor& get(const std::string& name) const {
        for (const auto& r : records_)
            if (r.first == name) return r.second;
        fail(ErrorKind::schema, "archive: missing record '" + name + "'");
    }

    std::string text(const std::string& name) const {
        const auto& t = get(name);
        if (t.scalar_type() != torch::kUInt8) fail(ErrorKind::schema, "archive: record '" + name + "' is not text");
        return std::string(static_cast<const char*>(t.data_ptr()), static_cast<size_t>(t.numel()));
    }

    const std::vector<std::pair<std::string, torch::Tensor>>& records() const { return records_; }

    std::string serialize() const {
        std::string out(kMagic, sizeof kMagic);
        append_pod(out, static_cast<uint32_t>(records_.size()));
        for (const auto& [name, t] : records_) {
            append_pod(out, static_cast<uint32_t>(name.size()));
            out += name;
            append_pod(out, dtype_code(t.scalar_type(), name));
            append_pod(out, static_cast<uint32_t>(t.dim()));
            for (auto d : t.sizes()) append_pod(out, static_cast<int64_t>(d));
            const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
            append_pod(out, nbytes);
            out.append(static_cast<const char*>(t.data_ptr()), nbytes);
        }
        return out;
    }

    static TensorArchive deserialize(const std::string& bytes, const std::string& origin) {
        TensorArchive ar;
        size_t pos = 0;
        auto need = [&](size_t n, const std::string& what) {
            if (pos + n > bytes.size()) fail(ErrorKind::schema, origin + ": truncated while reading " + what);
        };
        need(sizeof kMagic, "magic");
        if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) fail(ErrorKind::schema, origin + ": bad magic");
        pos += sizeof kMagic;
        need(4, "record count");
        const auto count = read_pod<uint32_t>(bytes, pos);
        for (uint32_t r = 0; r < count; ++r) {
            const std::string rec = "record #" + std::to_string(r);
            need(4, rec + " name length");
            const auto name_len = read_pod<uint32_t>(bytes, pos);
            need(name_len, rec + " name");
            std::string name = bytes.substr(pos, name_len);
            pos += name_len;
            const std::string label = "record '" + name + "'";
            need(1 + 4, label + " header");
            const auto code = read_pod<uint8_t>(bytes, pos);
            const auto ndim = read_pod<uint32_t>(bytes, pos);
            if (ndim > 16) fail(ErrorKind::schema, origin + ": " + label + " has implausible rank");
            need(8 * size_t{ndim}, label + " shape");
            std::vector<int64_t> dims(ndim);
            for (auto& d : dims) {
                d = read_pod<int64_t>(bytes, pos);
                if (d < 0) fail(ErrorKind::schema, origin + ": " + label + " has negative extent");
            }
            need(8, label + " payload size");
            const auto nbytes = read_pod<uint64_t>(bytes, pos);
            const auto type = scalar_type(code, origin + ": " + label);
            auto t = torch::empty(dims, torch::TensorOptions().dtype(type));
            if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size())
                fail(ErrorKind::schema, origin + ": " + label + " payload size does not match its shape");
            need(nbytes, label + " payload");
            if (nbytes) std::memcpy(t.data_ptr(), bytes.data() + pos, nbytes);
            pos += nbytes;
            ar.records_.emplace_back(std::move(name), std::move(t));
        }
        if (pos != bytes.size()) fail(ErrorKind::schema, origin + ": trailing bytes after last record");
        return ar;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) fail(ErrorKind::io, "cannot write " + path.string());
        const auto bytes = serialize();
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) fail(ErrorKind::io, "short write to " + path.string());
    }

    static TensorArchive load(const std::filesystem::path& path) {
        return deserialize(read_file(path), path.string());
    }

    static std::string read_file(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) fail(ErrorKind::io, "cannot open " + path.string());
        return std::string(std::istreambuf_iterator<char>(is), {});
    }

private:
    template <class T>
    static void append_pod(std::string& out, T v) {
        out.append(reinterpret_cast<const char*>(&v), sizeof v);
    }

    template <class T>
    static T read_pod(const std::string& bytes, size_t& pos) {
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof v);
        pos += sizeof v;
        return v;
    }

    static uint8_t dtype_code(torch::ScalarType t, const std::string& name) {
        switch (t) {
        case torch::kFloat: return 0;
        case torch::kDouble: return 1;
        case torch::kLong: return 2;
        case torch::kUInt8: return 3;
        default: fail(ErrorKind::schema, "archive: unsupported dtype for record '" + name + "'");
        }
    }

    static torch::ScalarType scalar_type(uint8_t code, const std::string& where) {
        switch (code) {
        case 0: return torch::kFloat;
        case 1: return torch::kDouble;
        case 2: return torch::kLong;
        case 3: return torch::kUInt8;
        default: fail(ErrorKind::schema, where + " has unknown dtype code " + std::to_string(code));
        }
    }

    std::vector<std::pair<std::string, torch::Tensor>> records_;
};

} // namespace showme
