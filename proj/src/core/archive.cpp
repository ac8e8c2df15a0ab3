#include "s2l/core/archive.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace s2l {

namespace {

constexpr std::uint32_t kFormatRevision = 1;
constexpr std::uint64_t kMaxBlock = std::uint64_t{1} << 36;

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ArchiveError("archive: truncated stream");
    return value;
}

std::string read_string(std::istream& in, std::uint64_t size) {
    if (size > kMaxBlock) throw ArchiveError("archive: corrupt block length");
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) throw ArchiveError("archive: truncated stream");
    return s;
}

std::size_t element_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
        case DType::u16: return 2;
        case DType::i32: return 4;
        case DType::u64: return 8;
    }
    throw ArchiveError("archive: unknown dtype");
}

}  // namespace

const Archive::Entry* Archive::find(std::string_view name) const noexcept {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

const Archive::Entry& Archive::require(std::string_view name) const {
    if (const Entry* e = find(name)) return *e;
    throw ArchiveError("archive: missing entry '" + std::string(name) + "'");
}

void Archive::insert(Entry e) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == e.name; });
    if (it != entries_.end()) *it = std::move(e);
    else entries_.push_back(std::move(e));
}

void Archive::write(std::ostream& out) const {
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    write_pod<std::uint32_t>(out, kFormatRevision);
    const std::string meta = meta_.dump();
    write_pod<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<std::uint64_t>(out, entries_.size());
    for (const auto& e : entries_) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) write_pod<std::uint64_t>(out, d);
        write_pod<std::uint64_t>(out, e.bytes.size());
        out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) throw ArchiveError("archive: write failed");
}

Archive Archive::read(std::istream& in) {
    std::string magic(kMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) throw ArchiveError("archive: bad magic header (expected SSEG1)");
    const auto revision = read_pod<std::uint32_t>(in);
    if (revision != kFormatRevision) throw ArchiveError("archive: unsupported format revision");

    Archive a;
    const std::string meta = read_string(in, read_pod<std::uint64_t>(in));
    try {
        a.meta_ = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(std::string("archive: corrupt metadata: ") + e.what());
    }
    const auto count = read_pod<std::uint64_t>(in);
    if (count > kMaxBlock) throw ArchiveError("archive: corrupt entry count");
    for (std::uint64_t k = 0; k < count; ++k) {
        Entry e;
        e.name = read_string(in, read_pod<std::uint32_t>(in));
        const auto raw_type = read_pod<std::uint8_t>(in);
        if (raw_type > static_cast<std::uint8_t>(DType::u64)) throw ArchiveError("archive: unknown dtype");
        e.dtype = static_cast<DType>(raw_type);
        const auto rank = read_pod<std::uint32_t>(in);
        if (rank > 16) throw ArchiveError("archive: corrupt rank");
        std::uint64_t elements = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            e.shape.push_back(read_pod<std::uint64_t>(in));
            elements *= e.shape.back();
        }
        const auto size = read_pod<std::uint64_t>(in);
        if (size != elements * element_size(e.dtype)) {
            throw ArchiveError("archive: entry '" + e.name + "' size does not match its shape");
        }
        const std::string raw = read_string(in, size);
        e.bytes.resize(size);
        std::memcpy(e.bytes.data(), raw.data(), size);
        a.entries_.push_back(std::move(e));
    }
    return a;
}

void Archive::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("archive: cannot open '" + path.string() + "' for writing");
    write(out);
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchiveError("archive: cannot open '" + path.string() + "'");
    return read(in);
}

std::string Archive::to_bytes() const {
    std::ostringstream out(std::ios::binary);
    write(out);
    return std::move(out).str();
}

Archive Archive::from_bytes(std::string_view bytes) {
    std::istringstream in(std::string(bytes), std::ios::binary);
    return read(in);
}

}  // namespace s2l
