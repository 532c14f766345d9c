#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace oxyspec::binio {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

/// CRC-32 (zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

/// Append-only little-endian byte buffer.
class Writer {
public:
    template <typename T>
    void put(T value)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto offset = bytes_.size();
        bytes_.resize(offset + sizeof(T));
        std::memcpy(bytes_.data() + offset, &value, sizeof(T));
    }

    template <typename T>
    void put_array(std::span<const T> values)
    {
        const auto offset = bytes_.size();
        bytes_.resize(offset + values.size_bytes());
        if (!values.empty())
            std::memcpy(bytes_.data() + offset, values.data(), values.size_bytes());
    }

    void put_bytes(std::string_view s) { put_array(std::span<const char>(s.data(), s.size())); }

    /// Appends the CRC-32 of everything written so far.
    void put_crc() { put(crc32(bytes_)); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; every overrun throws FormatError naming `what`.
class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::string what)
        : bytes_(bytes), what_(std::move(what))
    {
    }

    template <typename T>
    T get()
    {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
    void get_array(std::span<T> out)
    {
        require(out.size_bytes());
        if (!out.empty())
            std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    std::string get_bytes(std::size_t n)
    {
        require(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    /// Verifies the trailing CRC-32 over everything before it.
    void check_crc();

private:
    void require(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames, so readers never observe a
/// partially written file.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace oxyspec::binio
