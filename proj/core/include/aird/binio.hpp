#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "aird/error.hpp"

namespace aird {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

// Little-endian binary writer over a stream.
class binary_writer {
public:
    explicit binary_writer(const std::string& path)
        : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw io_error("cannot open for writing: " + path);
    }

    void magic(const char (&tag)[9]) { raw(tag, 8); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f32_array(std::span<const float> v) { raw(v.data(), v.size() * 4); }
    void bytes(std::span<const std::uint8_t> v) { raw(v.data(), v.size()); }

    void finish() {
        out_.flush();
        if (!out_) throw io_error("write failed: " + path_);
    }

private:
    void raw(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw io_error("write failed: " + path_);
    }

    std::ofstream out_;
    std::string path_;
};

// Little-endian binary reader; throws io_error on truncation.
class binary_reader {
public:
    explicit binary_reader(const std::string& path)
        : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw io_error("cannot open: " + path);
    }

    void expect_magic(const char (&tag)[9]) {
        char got[8];
        raw(got, 8);
        if (std::memcmp(got, tag, 8) != 0)
            throw io_error("bad magic in " + path_ + " (expected " + std::string(tag, 8) + ")");
    }

    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    float f32() { float v; raw(&v, 4); return v; }

    void f32_array(std::span<float> v) { raw(v.data(), v.size() * 4); }
    void bytes(std::span<std::uint8_t> v) { raw(v.data(), v.size()); }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw io_error("truncated or unreadable file: " + path_);
    }

    std::ifstream in_;
    std::string path_;
};

} // namespace aird
