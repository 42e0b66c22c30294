#include "pyguard/errors.hpp"
#include "pyguard/ingest.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <set>

namespace pyguard {

namespace {

constexpr std::uint32_t kEndOfDirSig = 0x06054b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::size_t kEndOfDirSize = 22;

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint16_t u16(std::size_t at) const {
        need(at, 2);
        return static_cast<std::uint16_t>(byte(at) | byte(at + 1) << 8);
    }
    std::uint32_t u32(std::size_t at) const {
        need(at, 4);
        return byte(at) | byte(at + 1) << 8 | byte(at + 2) << 16 | static_cast<std::uint32_t>(byte(at + 3)) << 24;
    }
    std::string_view bytes(std::size_t at, std::size_t n) const {
        need(at, n);
        return data_.substr(at, n);
    }
    std::size_t size() const { return data_.size(); }

private:
    std::uint32_t byte(std::size_t at) const { return static_cast<unsigned char>(data_[at]); }
    void need(std::size_t at, std::size_t n) const {
        if (at > data_.size() || n > data_.size() - at) throw BadArchive("truncated zip structure");
    }

    std::string_view data_;
};

std::size_t find_end_of_dir(const Reader& r) {
    if (r.size() < kEndOfDirSize) throw BadArchive("not a zip archive");
    const std::size_t lowest = r.size() >= kEndOfDirSize + 0xffff ? r.size() - kEndOfDirSize - 0xffff : 0;
    for (std::size_t at = r.size() - kEndOfDirSize + 1; at-- > lowest;) {
        if (r.u32(at) == kEndOfDirSig && at + kEndOfDirSize + r.u16(at + 20) == r.size()) return at;
    }
    throw BadArchive("zip end-of-directory record not found");
}

std::string inflate_raw(std::string_view in, std::size_t expected) {
    std::string out(expected, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw BadArchive("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    if (rc == Z_BUF_ERROR && zs.avail_out == 0) {
        // Output filled exactly; make sure the stream really ends here.
        unsigned char probe;
        zs.next_out = &probe;
        zs.avail_out = 1;
        rc = inflate(&zs, Z_FINISH);
        if (rc != Z_STREAM_END || zs.avail_out == 0) rc = Z_DATA_ERROR;
    }
    const std::size_t produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected) throw BadArchive("corrupt deflate stream");
    return out;
}

bool is_symlink(std::uint16_t made_by, std::uint32_t external_attrs) {
    constexpr std::uint32_t kTypeMask = 0170000, kSymlink = 0120000;
    return (made_by >> 8) == 3 && ((external_attrs >> 16) & kTypeMask) == kSymlink;
}

}  // namespace

std::string normalize_entry_path(std::string_view name) {
    if (name.find('\0') != std::string_view::npos) throw UnsafePath("entry name contains NUL");
    std::string p(name);
    std::replace(p.begin(), p.end(), '\\', '/');
    if (p.starts_with('/')) throw UnsafePath("absolute entry path: " + p);
    if (p.size() >= 2 && p[1] == ':' && std::isalpha(static_cast<unsigned char>(p[0]))) {
        throw UnsafePath("drive-qualified entry path: " + p);
    }
    std::string out;
    std::string_view rest = p;
    while (!rest.empty()) {
        const std::size_t slash = rest.find('/');
        const std::string_view part = rest.substr(0, slash);
        if (part == "..") throw UnsafePath("entry escapes the extraction root: " + p);
        if (!part.empty() && part != ".") {
            if (!out.empty()) out += '/';
            out += part;
        }
        if (slash == std::string_view::npos) break;
        rest.remove_prefix(slash + 1);
    }
    return out;
}

std::vector<SourceFile> read_zip(std::string_view archive, const ZipLimits& limits) {
    if (archive.size() > limits.max_archive_bytes) {
        throw ArchiveTooLarge("archive exceeds " + std::to_string(limits.max_archive_bytes) + " bytes");
    }
    const Reader r(archive);
    const std::size_t eod = find_end_of_dir(r);
    const std::uint16_t disk = r.u16(eod + 4), cd_disk = r.u16(eod + 6);
    const std::size_t count = r.u16(eod + 10);
    const std::size_t cd_size = r.u32(eod + 12);
    const std::size_t cd_offset = r.u32(eod + 16);
    if (disk != 0 || cd_disk != 0) throw BadArchive("multi-disk archives are not supported");
    if (r.u16(eod + 8) != count) throw BadArchive("inconsistent entry counts");
    if (count == 0xffff || cd_size == 0xffffffff || cd_offset == 0xffffffff) {
        throw BadArchive("zip64 archives are not supported");
    }
    if (count > limits.max_entries) throw ArchiveTooLarge("too many archive entries");
    if (cd_offset + cd_size > eod) throw BadArchive("central directory overlaps its end record");

    std::vector<SourceFile> files;
    std::set<std::string> seen;
    std::size_t total = 0;
    std::size_t at = cd_offset;
    for (std::size_t i = 0; i < count; ++i) {
        if (r.u32(at) != kCentralSig) throw BadArchive("bad central directory entry");
        const std::uint16_t made_by = r.u16(at + 4);
        const std::uint16_t flags = r.u16(at + 8);
        const std::uint16_t method = r.u16(at + 10);
        const std::uint32_t crc = r.u32(at + 16);
        const std::size_t csize = r.u32(at + 20);
        const std::size_t usize = r.u32(at + 24);
        const std::size_t name_len = r.u16(at + 28);
        const std::size_t extra_len = r.u16(at + 30);
        const std::size_t comment_len = r.u16(at + 32);
        const std::uint32_t attrs = r.u32(at + 38);
        const std::size_t local = r.u32(at + 42);
        const std::string_view raw_name = r.bytes(at + 46, name_len);
        at += 46 + name_len + extra_len + comment_len;
        if (at > cd_offset + cd_size) throw BadArchive("central directory entry overruns the directory");

        const std::string path = normalize_entry_path(raw_name);
        if (is_symlink(made_by, attrs)) throw UnsafePath("symlink entry: " + std::string(raw_name));
        if (raw_name.ends_with('/') || raw_name.ends_with('\\') || path.empty()) continue;
        if (flags & 1) throw BadArchive("encrypted entries are not supported");
        if (csize == 0xffffffff || usize == 0xffffffff) throw BadArchive("zip64 archives are not supported");
        if (!seen.insert(path).second) throw BadArchive("duplicate entry: " + path);

        total += usize;
        if (total > limits.max_total_bytes) {
            throw ArchiveTooLarge("uncompressed size exceeds " + std::to_string(limits.max_total_bytes) + " bytes");
        }

        if (r.u32(local) != kLocalSig) throw BadArchive("bad local header for " + path);
        const std::size_t data_at = local + 30 + r.u16(local + 26) + r.u16(local + 28);
        const std::string_view packed = r.bytes(data_at, csize);

        std::string content;
        if (method == 0) {
            if (csize != usize) throw BadArchive("stored entry size mismatch: " + path);
            content.assign(packed);
        } else if (method == 8) {
            content = inflate_raw(packed, usize);
        } else {
            throw BadArchive("unsupported compression method " + std::to_string(method) + " for " + path);
        }
        const auto actual = crc32(0L, reinterpret_cast<const Bytef*>(content.data()), static_cast<uInt>(content.size()));
        if (actual != crc) throw BadArchive("CRC mismatch: " + path);
        files.push_back({path, std::move(content)});
    }
    std::sort(files.begin(), files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    return files;
}

std::vector<SourceFile> unpack_upload(std::string_view archive) { return read_zip(archive); }

}  // namespace pyguard
