// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/binary_io.hpp"
#include "polyllmem/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace polyllmem {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>((value >> (8U * i)) & 0xFFU));
    }
}

template <typename T>
T get_le(std::span<const std::uint8_t> in)
{
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<T>(in[i]) << (8U * i));
    }
    return value;
}

} // namespace

void ByteWriter::u16(std::uint16_t v) { put_le(bytes_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(bytes_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(bytes_, v); }
void ByteWriter::f32(float v) { put_le(bytes_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(bytes_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::string_view s)
{
    bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::str16(std::string_view s)
{
    require(s.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::InvalidArgument,
            "string longer than 65535 bytes cannot be length-prefixed");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n)
{
    if (n > remaining()) {
        fail(ErrorCode::Truncated, "unexpected end of data at byte " + std::to_string(pos_) + " (needed " +
                                       std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }
std::uint16_t ByteReader::u16() { return get_le<std::uint16_t>(take(2)); }
std::uint32_t ByteReader::u32() { return get_le<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get_le<std::uint64_t>(take(8)); }
float ByteReader::f32() { return std::bit_cast<float>(get_le<std::uint32_t>(take(4))); }
double ByteReader::f64() { return std::bit_cast<double>(get_le<std::uint64_t>(take(8))); }

std::string ByteReader::raw(std::size_t n)
{
    auto s = take(n);
    return {reinterpret_cast<const char*>(s.data()), s.size()};
}

std::string ByteReader::str16() { return raw(u16()); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(ErrorCode::Io, "read failed: " + path.string());
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::Io, "cannot open for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorCode::Io, "write failed: " + path.string());
    }
}

} // namespace polyllmem
