#pragma once

#include <torch/torch.h>

#include <openssl/evp.h>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace showme {

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { usage, shape, infeasible_action, schema, prerequisite, numeric, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::prerequisite: return 3;
    case ErrorKind::numeric: return 4;
    default: return 1;
    }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline std::string shape_str(const torch::Tensor& t) {
    std::ostringstream os;
    os << t.sizes();
    return os.str();
}

inline void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
    if (a.sizes() != b.sizes())
        fail(ErrorKind::shape, std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// Hex SHA-1 of a byte buffer.
inline std::string sha1_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Content hash in the style of `git hash-object`: sha1("blob <size>\0" + content).
inline std::string git_blob_hash(std::string_view content) {
    std::string buf = "blob " + std::to_string(content.size());
    buf.push_back('\0');
    buf.append(content);
    return sha1_hex(buf);
}

/// Portable uniform double in [0,1) from a 64-bit engine draw.
template <class Engine>
double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Portable uniform integer in [0, n).
template <class Engine>
int64_t uniform_index(Engine& eng, int64_t n) {
    return static_cast<int64_t>(uniform01(eng) * static_cast<double>(n));
}

/// Uniform integer in [0, n) from a torch generator.
inline int64_t randint(at::Generator& gen, int64_t n) {
    return torch::randint(n, {1}, gen, torch::kLong).item<int64_t>();
}

inline double rand01(at::Generator& gen) {
    return torch::rand({1}, gen, torch::kDouble).item<double>();
}

inline at::Generator make_generator(uint64_t seed) {
    return at::detail::createCPUGenerator(seed);
}

} // namespace showme
