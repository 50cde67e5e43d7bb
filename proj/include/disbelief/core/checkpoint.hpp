#pragma once

// Container layout (all integers little-endian):
//   magic    8 bytes  "DSBCKPT\0"
//   version  u32      kCheckpointVersion
//   count    u32      number of entries
//   entry*   u32 name length, UTF-8 name bytes, u32 rank, u64 dims[rank],
//            f64 payload[prod(dims)] (IEEE-754 binary64)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "disbelief/core/graph.hpp"

namespace disbelief {

inline constexpr std::array<char, 8> kCheckpointMagic{'D', 'S', 'B', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;

    bool operator==(const NamedTensor&) const = default;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

    template <class U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string get_bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw ParseError("checkpoint truncated at offset " + std::to_string(pos_) + " while reading " + what);
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedTensor>& entries) {
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : e.value.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
    detail::ByteReader in(bytes);
    const std::string magic = in.get_bytes(kCheckpointMagic.size(), "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
        throw ParseError("checkpoint: bad magic at offset 0");
    const std::size_t version_at = in.offset();
    if (auto v = in.get<std::uint32_t>("version"); v != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(v) + " at offset " +
                         std::to_string(version_at));
    const auto count = in.get<std::uint32_t>("entry count");
    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint32_t>("name length");
        NamedTensor e;
        e.name = in.get_bytes(name_len, "name");
        const std::size_t rank_at = in.offset();
        const auto rank = in.get<std::uint32_t>("rank");
        if (rank > 2)
            throw ParseError("checkpoint: rank " + std::to_string(rank) + " at offset " + std::to_string(rank_at));
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>("dim")));
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) v = std::bit_cast<double>(in.get<std::uint64_t>("payload"));
        e.value = Tensor(std::move(shape), std::move(data));
        entries.push_back(std::move(e));
    }
    if (!in.at_end())
        throw ParseError("checkpoint: trailing bytes at offset " + std::to_string(in.offset()));
    return entries;
}

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    const std::string bytes = encode_checkpoint(entries);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const auto* p : params) out.push_back({p->name, p->value});
    return out;
}

/// Copies entries into parameters by name; every parameter must be present with its shape.
inline void restore(const std::vector<Parameter*>& params, const std::vector<NamedTensor>& entries) {
    for (auto* p : params) {
        const NamedTensor* found = nullptr;
        for (const auto& e : entries)
            if (e.name == p->name) found = &e;
        if (!found) throw ShapeError("checkpoint has no entry for " + p->name);
        if (found->value.shape() != p->value.shape())
            throw ShapeError("checkpoint entry " + p->name + " has shape " + shape_str(found->value.shape()) +
                             ", model expects " + shape_str(p->value.shape()));
        p->value = found->value;
        p->zero_grad();
    }
}

inline const NamedTensor* find_entry(const std::vector<NamedTensor>& entries, const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

} // namespace disbelief
