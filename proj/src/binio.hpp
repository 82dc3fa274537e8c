#pragma once
// Little-endian binary IO helpers shared by the container readers/writers.
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "splitloc/io_error.hpp"

namespace splitloc::binio {

static_assert(std::endian::native == std::endian::little,
              "serialization code assumes a little-endian host");

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& os, uint8_t v) { write_bytes(os, &v, 1); }
inline void write_u16(std::ostream& os, uint16_t v) { write_bytes(os, &v, 2); }
inline void write_u32(std::ostream& os, uint32_t v) { write_bytes(os, &v, 4); }
inline void write_f32(std::ostream& os, float v) { write_bytes(os, &v, 4); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw TruncatedError(std::string("truncated file while reading ") + what);
}

inline uint8_t read_u8(std::istream& is, const char* what) {
    uint8_t v;
    read_bytes(is, &v, 1, what);
    return v;
}
inline uint16_t read_u16(std::istream& is, const char* what) {
    uint16_t v;
    read_bytes(is, &v, 2, what);
    return v;
}
inline uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v;
    read_bytes(is, &v, 4, what);
    return v;
}
inline float read_f32(std::istream& is, const char* what) {
    float v;
    read_bytes(is, &v, 4, what);
    return v;
}
inline double read_f64(std::istream& is, const char* what) {
    double v;
    read_bytes(is, &v, 8, what);
    return v;
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* container) {
    char buf[4];
    is.read(buf, 4);
    if (is.gcount() != 4)
        throw TruncatedError(std::string(container) + ": file shorter than its magic");
    if (std::memcmp(buf, magic, 4) != 0)
        throw BadMagicError(std::string(container) + ": bad magic");
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open for reading: " + path);
    return is;
}

} // namespace splitloc::binio
