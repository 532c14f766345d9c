#include "oxyspec/image.hpp"

#include "oxyspec/binary_io.hpp"
#include "oxyspec/error.hpp"

#include <algorithm>
#include <numeric>
#include <regex>
#include <string>

namespace oxyspec {

Hypercube::Hypercube(int h, int w, int b, float fill)
    : height(h), width(w), bands(b)
{
    if (h < 0 || w < 0 || b < 0)
        throw ShapeError("hypercube: negative dimension");
    data.assign(static_cast<std::size_t>(h) * w * b, fill);
}

void Hypercube::validate() const
{
    if (height < 1 || width < 1 || bands < 1)
        throw ShapeError("hypercube: dimensions must be >= 1");
    if (data.size() != static_cast<std::size_t>(height) * width * bands)
        throw ShapeError("hypercube: storage does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(bands));
}

Image::Image(int h, int w, float fill) : height(h), width(w)
{
    if (h < 0 || w < 0)
        throw ShapeError("image: negative dimension");
    data.assign(static_cast<std::size_t>(h) * w, fill);
}

void Image::validate() const
{
    if (height < 1 || width < 1)
        throw ShapeError("image: dimensions must be >= 1");
    if (data.size() != static_cast<std::size_t>(height) * width)
        throw ShapeError("image: storage does not match dimensions");
}

std::size_t OxygenationMap::degenerate_count() const noexcept
{
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
}

void save_npy(const std::filesystem::path& path, std::span<const std::size_t> shape,
              std::span<const float> data)
{
    const auto count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                       std::multiplies<>());
    if (count != data.size())
        throw ShapeError("npy: shape does not match data length");
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        dims += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size())
            dims += ", ";
    }
    if (shape.size() == 1)
        dims.pop_back();
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
    // Pad so the data starts on a 64-byte boundary.
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header += '\n';

    binio::Writer w;
    w.put_bytes("\x93NUMPY");
    w.put(std::uint8_t{1});
    w.put(std::uint8_t{0});
    w.put(static_cast<std::uint16_t>(header.size()));
    w.put_bytes(header);
    w.put_array(data);
    binio::write_file(path, w.bytes());
}

NpyArray load_npy(const std::filesystem::path& path)
{
    const auto bytes = binio::read_file(path);
    binio::Reader r(bytes, "npy '" + path.string() + "'");
    if (r.get_bytes(6) != "\x93NUMPY")
        throw FormatError("npy '" + path.string() + "': bad magic");
    const auto major = r.get<std::uint8_t>();
    r.get<std::uint8_t>();
    std::size_t header_len = 0;
    if (major == 1)
        header_len = r.get<std::uint16_t>();
    else if (major == 2 || major == 3)
        header_len = r.get<std::uint32_t>();
    else
        throw FormatError("npy '" + path.string() + "': unsupported version");
    const auto header = r.get_bytes(header_len);

    static const std::regex descr(R"('descr'\s*:\s*'([^']*)')");
    static const std::regex order(R"('fortran_order'\s*:\s*(True|False))");
    static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
    std::smatch m;
    if (!std::regex_search(header, m, descr) || (m[1] != "<f4" && m[1] != "|f4"))
        throw FormatError("npy '" + path.string() + "': only little-endian float32 is supported");
    if (!std::regex_search(header, m, order) || m[1] != "False")
        throw FormatError("npy '" + path.string() + "': fortran order is not supported");
    if (!std::regex_search(header, m, shape_re))
        throw FormatError("npy '" + path.string() + "': missing shape");

    NpyArray out;
    const std::string dims = m[1];
    static const std::regex number(R"(\d+)");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), number);
         it != std::sregex_iterator(); ++it)
        out.shape.push_back(std::stoull(it->str()));
    const auto count = std::accumulate(out.shape.begin(), out.shape.end(), std::size_t{1},
                                       std::multiplies<>());
    if (r.remaining() != count * sizeof(float))
        throw FormatError("npy '" + path.string() + "': payload size does not match shape");
    out.data.resize(count);
    r.get_array(std::span<float>(out.data));
    return out;
}

void save_npy(const std::filesystem::path& path, const Hypercube& cube)
{
    cube.validate();
    const std::size_t shape[] = {static_cast<std::size_t>(cube.height),
                                 static_cast<std::size_t>(cube.width),
                                 static_cast<std::size_t>(cube.bands)};
    save_npy(path, shape, cube.data);
}

void save_npy(const std::filesystem::path& path, const Image& image)
{
    image.validate();
    const std::size_t shape[] = {static_cast<std::size_t>(image.height),
                                 static_cast<std::size_t>(image.width)};
    save_npy(path, shape, image.data);
}

Hypercube load_npy_cube(const std::filesystem::path& path)
{
    auto a = load_npy(path);
    if (a.shape.size() != 3)
        throw ShapeError("npy '" + path.string() + "': expected a 3-d H x W x bands array");
    Hypercube cube;
    cube.height = static_cast<int>(a.shape[0]);
    cube.width = static_cast<int>(a.shape[1]);
    cube.bands = static_cast<int>(a.shape[2]);
    cube.data = std::move(a.data);
    cube.validate();
    return cube;
}

Image load_npy_image(const std::filesystem::path& path)
{
    auto a = load_npy(path);
    if (a.shape.size() != 2)
        throw ShapeError("npy '" + path.string() + "': expected a 2-d array");
    Image image;
    image.height = static_cast<int>(a.shape[0]);
    image.width = static_cast<int>(a.shape[1]);
    image.data = std::move(a.data);
    image.validate();
    return image;
}

} // namespace oxyspec
