#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "opn/errors.hpp"

namespace opn {

// CRC32 (IEEE 802.3, reflected, poly 0xEDB88320).
namespace detail {
constexpr std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int j = 0; j < 8; ++j) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}
inline constexpr auto kCrcTable = make_crc_table();
}  // namespace detail

inline uint32_t crc32(const void* data, size_t len, uint32_t crc = 0) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = detail::kCrcTable[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

// Little-endian buffer writer. All file formats are explicitly LE.
struct ByteWriter {
    std::vector<uint8_t> buf;

    void u8(uint8_t v) { buf.push_back(v); }
    void i8(int8_t v) { buf.push_back(uint8_t(v)); }
    void u16(uint16_t v) {
        buf.push_back(uint8_t(v));
        buf.push_back(uint8_t(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(uint8_t(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void bytes(const void* p, size_t n) {
        const uint8_t* q = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), q, q + n);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    // Appends the CRC of everything written so far.
    void finish_crc() { u32(crc32(buf.data(), buf.size())); }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + path);
        f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
        if (!f) throw IoError("write failed: " + path);
    }
};

// Bounds-checked little-endian reader.
struct ByteReader {
    std::vector<uint8_t> buf;
    size_t pos = 0;

    static ByteReader from_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open for read: " + path);
        ByteReader r;
        f.seekg(0, std::ios::end);
        r.buf.resize(size_t(f.tellg()));
        f.seekg(0);
        f.read(reinterpret_cast<char*>(r.buf.data()), std::streamsize(r.buf.size()));
        if (!f) throw IoError("read failed: " + path);
        return r;
    }

    void need(size_t n) const {
        if (pos + n > buf.size()) throw FormatError("truncated file (need " + std::to_string(n) +
                                                    " bytes at offset " + std::to_string(pos) + ")");
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    int8_t i8() { return int8_t(u8()); }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(buf[pos]) | uint16_t(buf[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(buf[pos + size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(buf[pos + size_t(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void bytes(void* out, size_t n) {
        need(n);
        std::memcpy(out, buf.data() + pos, n);
        pos += n;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }

    // Validates the trailing CRC over buf[0 .. size-5]. Call before parsing.
    void check_trailing_crc(const char* what) const {
        if (buf.size() < 4) throw FormatError(std::string(what) + ": file too short");
        uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) stored |= uint32_t(buf[buf.size() - 4 + size_t(i)]) << (8 * i);
        uint32_t actual = crc32(buf.data(), buf.size() - 4);
        if (stored != actual) throw FormatError(std::string(what) + ": checksum mismatch");
    }
    size_t payload_end() const { return buf.size() - 4; }
};

}  // namespace opn
