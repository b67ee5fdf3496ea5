#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldk/rig.hpp"

namespace ldk {

// Dense row-major raster with a fixed channel count.
template <int Channels>
class Grid {
 public:
  static constexpr int channels = Channels;

  Grid() = default;
  Grid(int width, int height, double fill = 0.0)
      : width_(width),
        height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * Channels,
              fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  double& operator()(int x, int y, int c = 0) { return data_[index(x, y) * Channels + c]; }
  double operator()(int x, int y, int c = 0) const { return data_[index(x, y) * Channels + c]; }
  double& at(std::size_t pixel, int c = 0) { return data_[pixel * Channels + c]; }
  double at(std::size_t pixel, int c = 0) const { return data_[pixel * Channels + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  template <int Other>
  bool same_shape(const Grid<Other>& other) const {
    return width_ == other.width() && height_ == other.height();
  }
  bool matches(const CameraModel& camera) const {
    return width_ == camera.width && height_ == camera.height;
  }

  bool operator==(const Grid&) const = default;

 protected:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

using ScalarField = Grid<1>;

// RGB image, channels in [0, 1].
class Image : public Grid<3> {
 public:
  using Grid<3>::Grid;
  Vec3 rgb(std::size_t pixel) const { return {at(pixel, 0), at(pixel, 1), at(pixel, 2)}; }
  void set_rgb(std::size_t pixel, const Vec3& c) {
    at(pixel, 0) = c.x();
    at(pixel, 1) = c.y();
    at(pixel, 2) = c.z();
  }
  bool operator==(const Image&) const = default;
};

// Hue in [0, 1), saturation in [0, 1]; value is implicitly 1.
class AlbedoMap : public Grid<2> {
 public:
  using Grid<2>::Grid;
  Vec2 hs(std::size_t pixel) const { return {at(pixel, 0), at(pixel, 1)}; }
  void set_hs(std::size_t pixel, const Vec2& hs) {
    at(pixel, 0) = hs.x();
    at(pixel, 1) = hs.y();
  }
  bool operator==(const AlbedoMap&) const = default;
};

// Per-pixel distance along the unit viewing ray. Invalid pixels store 0.
class DepthMap : public Grid<1> {
 public:
  DepthMap() = default;
  DepthMap(int width, int height) : Grid<1>(width, height, 0.0), valid_(pixel_count(), 0) {}
  // Every pixel valid at the given depth.
  DepthMap(int width, int height, double fill)
      : Grid<1>(width, height, fill), valid_(pixel_count(), 1) {}

  bool valid(std::size_t pixel) const { return valid_[pixel] != 0; }
  bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
  void set(std::size_t pixel, double depth) {
    at(pixel) = depth;
    valid_[pixel] = 1;
  }
  void invalidate(std::size_t pixel) {
    at(pixel) = 0.0;
    valid_[pixel] = 0;
  }
  std::span<const std::uint8_t> mask() const { return valid_; }
  std::size_t valid_count() const;

  // Throws DomainError if a valid pixel is non-finite or non-positive.
  void validate() const;

  bool operator==(const DepthMap&) const = default;

 private:
  std::vector<std::uint8_t> valid_;
};

// Unit camera-frame normals. Invalid pixels store the zero vector.
class NormalMap : public Grid<3> {
 public:
  NormalMap() = default;
  NormalMap(int width, int height) : Grid<3>(width, height, 0.0), valid_(pixel_count(), 0) {}

  bool valid(std::size_t pixel) const { return valid_[pixel] != 0; }
  Vec3 normal(std::size_t pixel) const { return {at(pixel, 0), at(pixel, 1), at(pixel, 2)}; }
  void set(std::size_t pixel, const Vec3& n) {
    at(pixel, 0) = n.x();
    at(pixel, 1) = n.y();
    at(pixel, 2) = n.z();
    valid_[pixel] = 1;
  }
  void invalidate(std::size_t pixel) {
    at(pixel, 0) = at(pixel, 1) = at(pixel, 2) = 0.0;
    valid_[pixel] = 0;
  }
  std::span<const std::uint8_t> mask() const { return valid_; }

  bool operator==(const NormalMap&) const = default;

 private:
  std::vector<std::uint8_t> valid_;
};

// Hexcone HSV to RGB. Hue is periodic with period 1.
Vec3 hsv_to_rgb(double h, double s, double v);

// Partial derivatives of hsv_to_rgb(h, s, 1) with respect to (h, s).
Eigen::Matrix<double, 3, 2> hsv_to_rgb_jacobian(double h, double s);

// Inverse of hsv_to_rgb; returns (h, s, v) with h in [0, 1).
Vec3 rgb_to_hsv(const Vec3& rgb);

// Wraps a hue into [0, 1).
double wrap_hue(double h);

// LDK1 rasters: "LDK1 <tag> <width> <height> <channels>\n" followed by
// row-major little-endian float32. Values are stored at float32 precision.
enum class RasterTag { image, depth, albedo, normals, scalar };

std::string encode_raster(const Image& image);
std::string encode_raster(const DepthMap& depth);
std::string encode_raster(const AlbedoMap& albedo);
std::string encode_raster(const NormalMap& normals);
std::string encode_raster(const ScalarField& field);

Image decode_image(const std::string& bytes);
DepthMap decode_depth(const std::string& bytes);
AlbedoMap decode_albedo(const std::string& bytes);
NormalMap decode_normals(const std::string& bytes);
ScalarField decode_scalar(const std::string& bytes);

// Reads the tag of an LDK1 raster without decoding the payload.
RasterTag peek_raster_tag(const std::string& path);

void write_field(const std::string& path, const Image& image);
void write_field(const std::string& path, const DepthMap& depth);
void write_field(const std::string& path, const AlbedoMap& albedo);
void write_field(const std::string& path, const NormalMap& normals);
void write_field(const std::string& path, const ScalarField& field);

Image read_image(const std::string& path);
DepthMap read_depth(const std::string& path);
AlbedoMap read_albedo(const std::string& path);
NormalMap read_normals(const std::string& path);
ScalarField read_scalar(const std::string& path);

// 8-bit PNG interchange for RGB images.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

// Reads an image from either an LDK1 raster or a PNG file.
Image load_image(const std::string& path);

// Writes a file through a temporary sibling and a rename.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace ldk
