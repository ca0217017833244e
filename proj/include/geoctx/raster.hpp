#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace geoctx {

/// Row-major single-channel float raster. Used both for depth (meters, 0 =
/// invalid) and for grayscale image input to the engine.
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> values;

  Raster() = default;
  Raster(std::uint32_t w, std::uint32_t h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }

  float& at(std::uint32_t u, std::uint32_t v) { return values[static_cast<std::size_t>(v) * width + u]; }
  float at(std::uint32_t u, std::uint32_t v) const {
    return values[static_cast<std::size_t>(v) * width + u];
  }

  bool same_shape(const Raster& other) const noexcept {
    return width == other.width && height == other.height;
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

using DepthRaster = Raster;
using ImageRaster = Raster;

}  // namespace geoctx
