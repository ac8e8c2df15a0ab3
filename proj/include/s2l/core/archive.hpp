#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace s2l {

class ArchiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, u16 = 3, i32 = 4, u64 = 5 };

template <typename T>
constexpr DType dtype_of() {
    if constexpr (std::is_same_v<T, float>) return DType::f32;
    else if constexpr (std::is_same_v<T, double>) return DType::f64;
    else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
    else if constexpr (std::is_same_v<T, std::uint16_t>) return DType::u16;
    else if constexpr (std::is_same_v<T, std::int32_t>) return DType::i32;
    else if constexpr (std::is_same_v<T, std::uint64_t>) return DType::u64;
    else static_assert(sizeof(T) == 0, "unsupported archive element type");
}

// Self-describing binary container: "SSEG1" magic, a JSON metadata block and
// a list of named tensors with dtype and shape. Little-endian, raw element
// bytes, so numeric content round-trips bit for bit.
class Archive {
public:
    struct Entry {
        std::string name;
        DType dtype = DType::f32;
        std::vector<std::uint64_t> shape;
        std::vector<std::byte> bytes;
    };

    static constexpr std::string_view kMagic = "SSEG1";

    nlohmann::json& meta() noexcept { return meta_; }
    const nlohmann::json& meta() const noexcept { return meta_; }

    template <typename T>
    void put(std::string name, std::vector<std::uint64_t> shape, std::span<const T> values) {
        std::uint64_t expected = 1;
        for (auto d : shape) expected *= d;
        if (expected != values.size()) {
            throw ArchiveError("archive: shape of '" + name + "' does not match value count");
        }
        Entry e{std::move(name), dtype_of<T>(), std::move(shape), {}};
        e.bytes.resize(values.size_bytes());
        if (!values.empty()) std::memcpy(e.bytes.data(), values.data(), values.size_bytes());
        insert(std::move(e));
    }

    template <typename T>
    void put(std::string name, std::span<const T> values) {
        put<T>(std::move(name), {static_cast<std::uint64_t>(values.size())}, values);
    }

    template <typename T>
    std::vector<T> get(std::string_view name) const {
        const Entry& e = require(name);
        if (e.dtype != dtype_of<T>()) {
            throw ArchiveError("archive: entry '" + std::string(name) + "' has a different dtype");
        }
        std::vector<T> out(e.bytes.size() / sizeof(T));
        if (!out.empty()) std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
        return out;
    }

    bool contains(std::string_view name) const noexcept { return find(name) != nullptr; }
    const Entry* find(std::string_view name) const noexcept;
    const Entry& require(std::string_view name) const;
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    void write(std::ostream& out) const;
    static Archive read(std::istream& in);

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

    std::string to_bytes() const;
    static Archive from_bytes(std::string_view bytes);

private:
    void insert(Entry e);

    nlohmann::json meta_ = nlohmann::json::object();
    std::vector<Entry> entries_;
};

}  // namespace s2l
