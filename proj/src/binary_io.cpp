#include "oxyspec/binary_io.hpp"

#include "oxyspec/error.hpp"

#include <zlib.h>

#include <fstream>

namespace oxyspec::binio {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept
{
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    constexpr std::size_t chunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += chunk) {
        const auto n = static_cast<uInt>(std::min(chunk, bytes.size() - off));
        crc = ::crc32(crc, bytes.data() + off, n);
    }
    return static_cast<std::uint32_t>(crc);
}

void Reader::require(std::size_t n) const
{
    if (pos_ + n > bytes_.size())
        throw FormatError(what_ + ": truncated file");
}

void Reader::check_crc()
{
    const auto body = bytes_.first(pos_);
    const auto stored = get<std::uint32_t>();
    if (stored != crc32(body))
        throw FormatError(what_ + ": checksum mismatch");
    if (remaining() != 0)
        throw FormatError(what_ + ": trailing bytes after checksum");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in)
        throw DataError("cannot read '" + path.string() + "'");
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw DataError("cannot move '" + tmp.string() + "' to '" + path.string() +
                        "': " + ec.message());
}

} // namespace oxyspec::binio
