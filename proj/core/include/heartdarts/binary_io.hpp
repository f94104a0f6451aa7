// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "heartdarts/error.hpp"

namespace heartdarts {

// Little-endian byte streams shared by the checkpoint, model and dataset
// formats. Readers throw the error type chosen by the caller on truncation.

class ByteWriter {
public:
    void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

    template <typename U>
        requires std::is_integral_v<U>
    void put(U value) {
        using Unsigned = std::make_unsigned_t<U>;
        auto v = static_cast<Unsigned>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v & 0xFFu));
            if constexpr (sizeof(U) > 1) v = static_cast<Unsigned>(v >> 8);
        }
    }

    void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

    template <typename T>
    void put_real(T v) {
        if constexpr (std::is_same_v<T, float>) put_f32(v);
        else put_f64(v);
    }

    template <typename T>
    void put_reals(std::span<const T> values) {
        for (T v : values) put_real(v);
    }

    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    const std::vector<std::uint8_t>& bytes() const& { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

template <typename ErrorT>
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void expect_magic(std::string_view tag) {
        need(tag.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0)
            throw ErrorT("bad magic: expected \"" + std::string(tag) + "\"");
        pos_ += tag.size();
    }

    template <typename U>
        requires std::is_integral_v<U>
    U get(std::string_view what = "integer") {
        need(sizeof(U), what);
        using Unsigned = std::make_unsigned_t<U>;
        Unsigned v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v = static_cast<Unsigned>(v | (static_cast<Unsigned>(bytes_[pos_ + i]) << (8 * i)));
        pos_ += sizeof(U);
        return static_cast<U>(v);
    }

    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>("f32")); }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>("f64")); }

    template <typename T>
    T get_real() {
        if constexpr (std::is_same_v<T, float>) return get_f32();
        else return get_f64();
    }

    template <typename T>
    void get_reals(std::span<T> out) {
        need(out.size() * sizeof(T), "real array");
        for (T& v : out) v = get_real<T>();
    }

    std::string get_string(std::string_view what = "string") {
        const auto n = get<std::uint32_t>(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t position() const { return pos_; }

    void expect_end() const {
        if (!at_end())
            throw ErrorT("trailing bytes after payload (" + std::to_string(bytes_.size() - pos_) + ")");
    }

private:
    void need(std::size_t n, std::string_view what) const {
        if (bytes_.size() - pos_ < n)
            throw ErrorT("truncated stream while reading " + std::string(what) + " at byte " +
                         std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace heartdarts
