#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace oxyspec {

/// H x W x bands float32 cube, row-major with bands innermost.
struct Hypercube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<float> data;

    Hypercube() = default;
    Hypercube(int h, int w, int b, float fill = 0.0f);

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::span<float> pixel(int y, int x)
    {
        return {data.data() + (static_cast<std::size_t>(y) * width + x) * bands,
                static_cast<std::size_t>(bands)};
    }
    std::span<const float> pixel(int y, int x) const
    {
        return {data.data() + (static_cast<std::size_t>(y) * width + x) * bands,
                static_cast<std::size_t>(bands)};
    }
    float& at(int y, int x, int b) { return data[(static_cast<std::size_t>(y) * width + x) * bands + b]; }
    float at(int y, int x, int b) const
    {
        return data[(static_cast<std::size_t>(y) * width + x) * bands + b];
    }

    /// Throws ShapeError when the storage does not match the dimensions.
    void validate() const;
};

/// H x W float32 image, row-major.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    void validate() const;
};

/// Oxygenation estimate per pixel plus a mask of pixels that could not be
/// estimated (non-positive spectrum area, non-positive reflectance, ...).
struct OxygenationMap {
    Image values;
    std::vector<std::uint8_t> degenerate;

    std::size_t degenerate_count() const noexcept;
};

/// NumPy .npy (format 1.0, little-endian float32, C order).
void save_npy(const std::filesystem::path& path, const Hypercube& cube);
void save_npy(const std::filesystem::path& path, const Image& image);
Hypercube load_npy_cube(const std::filesystem::path& path);
Image load_npy_image(const std::filesystem::path& path);

/// Shape and float32 payload of any 1-3 dimensional .npy file.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};
NpyArray load_npy(const std::filesystem::path& path);
void save_npy(const std::filesystem::path& path, std::span<const std::size_t> shape,
              std::span<const float> data);

} // namespace oxyspec
