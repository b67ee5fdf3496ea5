#include "ldk/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ldk/errors.hpp"

namespace ldk {
namespace {

// Piecewise-linear hexcone weight: 1 - s * ramp(k) gives a channel value.
double hexcone_ramp(double k) { return std::clamp(std::min(k, 4.0 - k), 0.0, 1.0); }

// d ramp / dk, one-sided at the kinks.
double hexcone_ramp_slope(double k) {
  if (k < 1.0) return 1.0;
  if (k >= 3.0 && k < 4.0) return -1.0;
  return 0.0;
}

double hexcone_k(int n, double h) {
  const double k = std::fmod(n + 6.0 * h, 6.0);
  return k < 0.0 ? k + 6.0 : k;
}

const char* tag_name(RasterTag tag) {
  switch (tag) {
    case RasterTag::image: return "IMG";
    case RasterTag::depth: return "DEP";
    case RasterTag::albedo: return "ALB";
    case RasterTag::normals: return "NRM";
    case RasterTag::scalar: return "SCL";
  }
  return "???";
}

int tag_channels(RasterTag tag) {
  switch (tag) {
    case RasterTag::image: return 3;
    case RasterTag::depth: return 1;
    case RasterTag::albedo: return 2;
    case RasterTag::normals: return 3;
    case RasterTag::scalar: return 1;
  }
  return 0;
}

RasterTag parse_tag(const std::string& s) {
  for (RasterTag t : {RasterTag::image, RasterTag::depth, RasterTag::albedo, RasterTag::normals,
                      RasterTag::scalar}) {
    if (s == tag_name(t)) return t;
  }
  throw FormatError("raster: unknown type tag '" + s + "'");
}

void put_float(std::string& out, float value) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char bytes[4];
  std::memcpy(bytes, &bits, 4);
  out.append(bytes, 4);
}

float get_float(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

std::string encode(RasterTag tag, int width, int height, std::span<const double> values) {
  std::ostringstream header;
  header << "LDK1 " << tag_name(tag) << ' ' << width << ' ' << height << ' '
         << tag_channels(tag) << '\n';
  std::string out = header.str();
  out.reserve(out.size() + values.size() * 4);
  for (double v : values) put_float(out, static_cast<float>(v));
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

Decoded decode(const std::string& bytes, RasterTag expected) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos || newline > 128) throw FormatError("raster: malformed header");
  std::istringstream header(bytes.substr(0, newline));
  std::string magic, tag;
  long long width = 0, height = 0, channels = 0;
  if (!(header >> magic >> tag >> width >> height >> channels) || magic != "LDK1") {
    throw FormatError("raster: malformed header");
  }
  std::string extra;
  if (header >> extra) throw FormatError("raster: trailing header tokens");
  if (parse_tag(tag) != expected) {
    throw FormatError(std::string("raster: expected ") + tag_name(expected) + " but found " + tag);
  }
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw FormatError("raster: invalid dimensions");
  }
  if (channels != tag_channels(expected)) throw FormatError("raster: channel count mismatch");
  const std::size_t count = static_cast<std::size_t>(width * height * channels);
  const std::size_t payload = bytes.size() - newline - 1;
  if (payload != count * 4) {
    throw FormatError(payload < count * 4 ? "raster: truncated payload"
                                          : "raster: trailing bytes after payload");
  }
  Decoded d{static_cast<int>(width), static_cast<int>(height), {}};
  d.values.resize(count);
  const char* p = bytes.data() + newline + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const float f = get_float(p + 4 * i);
    if (!std::isfinite(f)) throw FormatError("raster: non-finite payload value");
    d.values[i] = f;
  }
  return d;
}

template <typename Field>
void copy_values(Field& field, const std::vector<double>& values) {
  std::copy(values.begin(), values.end(), field.data().begin());
}

void check_unit_interval(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " outside [0, 1]");
  }
}

}  // namespace

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), 1));
}

void DepthMap::validate() const {
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    if (valid(i) && !(std::isfinite(at(i)) && at(i) > 0.0)) {
      throw DomainError("depth map: valid pixel with non-positive or non-finite depth");
    }
  }
}

double wrap_hue(double h) {
  double w = h - std::floor(h);
  if (w >= 1.0) w = 0.0;
  return w;
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  h = wrap_hue(h);
  return {v * (1.0 - s * hexcone_ramp(hexcone_k(5, h))),
          v * (1.0 - s * hexcone_ramp(hexcone_k(3, h))),
          v * (1.0 - s * hexcone_ramp(hexcone_k(1, h)))};
}

Eigen::Matrix<double, 3, 2> hsv_to_rgb_jacobian(double h, double s) {
  h = wrap_hue(h);
  Eigen::Matrix<double, 3, 2> j;
  const int offsets[3] = {5, 3, 1};
  for (int c = 0; c < 3; ++c) {
    const double k = hexcone_k(offsets[c], h);
    j(c, 0) = -s * 6.0 * hexcone_ramp_slope(k);
    j(c, 1) = -hexcone_ramp(k);
  }
  return j;
}

Vec3 rgb_to_hsv(const Vec3& rgb) {
  const double mx = rgb.maxCoeff();
  const double mn = rgb.minCoeff();
  const double chroma = mx - mn;
  const double v = mx;
  const double s = mx > 0.0 ? chroma / mx : 0.0;
  double h = 0.0;
  if (chroma > 0.0) {
    if (mx == rgb.x()) {
      h = (rgb.y() - rgb.z()) / chroma;
    } else if (mx == rgb.y()) {
      h = 2.0 + (rgb.z() - rgb.x()) / chroma;
    } else {
      h = 4.0 + (rgb.x() - rgb.y()) / chroma;
    }
    h = wrap_hue(h / 6.0);
  }
  return {h, s, v};
}

std::string encode_raster(const Image& image) {
  check_unit_interval(image.data(), "image channel");
  return encode(RasterTag::image, image.width(), image.height(), image.data());
}

std::string encode_raster(const DepthMap& depth) {
  depth.validate();
  std::vector<double> values(depth.pixel_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = depth.valid(i) ? depth.at(i) : 0.0;
    if (depth.valid(i) && static_cast<float>(values[i]) <= 0.0f) {
      throw DomainError("depth map: depth underflows float32");
    }
  }
  return encode(RasterTag::depth, depth.width(), depth.height(), values);
}

std::string encode_raster(const AlbedoMap& albedo) {
  std::vector<double> values(albedo.data().begin(), albedo.data().end());
  for (std::size_t i = 0; i < albedo.pixel_count(); ++i) {
    const double h = values[2 * i];
    const double s = values[2 * i + 1];
    if (!(h >= 0.0 && h < 1.0) || !(s >= 0.0 && s <= 1.0)) {
      throw DomainError("albedo map: hue or saturation out of range");
    }
    // Hue just below 1 may round up to 1.0f; it is periodic, so store 0.
    if (static_cast<float>(h) >= 1.0f) values[2 * i] = 0.0;
  }
  return encode(RasterTag::albedo, albedo.width(), albedo.height(), values);
}

std::string encode_raster(const NormalMap& normals) {
  for (std::size_t i = 0; i < normals.pixel_count(); ++i) {
    if (normals.valid(i) && std::abs(normals.normal(i).norm() - 1.0) > 1e-6) {
      throw DomainError("normal map: valid normal is not unit length");
    }
  }
  return encode(RasterTag::normals, normals.width(), normals.height(), normals.data());
}

std::string encode_raster(const ScalarField& field) {
  for (double v : field.data()) {
    if (!std::isfinite(v)) throw DomainError("scalar field: non-finite value");
  }
  return encode(RasterTag::scalar, field.width(), field.height(), field.data());
}

Image decode_image(const std::string& bytes) {
  const Decoded d = decode(bytes, RasterTag::image);
  for (double v : d.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("raster: image channel outside [0, 1]");
  }
  Image image(d.width, d.height);
  copy_values(image, d.values);
  return image;
}

DepthMap decode_depth(const std::string& bytes) {
  const Decoded d = decode(bytes, RasterTag::depth);
  DepthMap depth(d.width, d.height);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.values[i] < 0.0) throw FormatError("raster: negative depth");
    if (d.values[i] > 0.0) depth.set(i, d.values[i]);
  }
  return depth;
}

AlbedoMap decode_albedo(const std::string& bytes) {
  const Decoded d = decode(bytes, RasterTag::albedo);
  for (std::size_t i = 0; i < d.values.size(); i += 2) {
    if (!(d.values[i] >= 0.0 && d.values[i] < 1.0) ||
        !(d.values[i + 1] >= 0.0 && d.values[i + 1] <= 1.0)) {
      throw FormatError("raster: albedo out of range");
    }
  }
  AlbedoMap albedo(d.width, d.height);
  copy_values(albedo, d.values);
  return albedo;
}

NormalMap decode_normals(const std::string& bytes) {
  const Decoded d = decode(bytes, RasterTag::normals);
  NormalMap normals(d.width, d.height);
  for (std::size_t i = 0; i < normals.pixel_count(); ++i) {
    const Vec3 n(d.values[3 * i], d.values[3 * i + 1], d.values[3 * i + 2]);
    if (n.isZero(0.0)) continue;
    if (std::abs(n.norm() - 1.0) > 1e-6) throw FormatError("raster: normal is not unit length");
    normals.set(i, n);
  }
  return normals;
}

ScalarField decode_scalar(const std::string& bytes) {
  const Decoded d = decode(bytes, RasterTag::scalar);
  ScalarField field(d.width, d.height);
  copy_values(field, d.values);
  return field;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path + "'");
  return buffer.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

RasterTag peek_raster_tag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic, tag;
  if (!(in >> magic >> tag) || magic != "LDK1") throw FormatError("raster: malformed header");
  return parse_tag(tag);
}

void write_field(const std::string& path, const Image& f) { write_file_atomic(path, encode_raster(f)); }
void write_field(const std::string& path, const DepthMap& f) { write_file_atomic(path, encode_raster(f)); }
void write_field(const std::string& path, const AlbedoMap& f) { write_file_atomic(path, encode_raster(f)); }
void write_field(const std::string& path, const NormalMap& f) { write_file_atomic(path, encode_raster(f)); }
void write_field(const std::string& path, const ScalarField& f) { write_file_atomic(path, encode_raster(f)); }

Image read_image(const std::string& path) { return decode_image(read_file(path)); }
DepthMap read_depth(const std::string& path) { return decode_depth(read_file(path)); }
AlbedoMap read_albedo(const std::string& path) { return decode_albedo(read_file(path)); }
NormalMap read_normals(const std::string& path) { return decode_normals(read_file(path)); }
ScalarField read_scalar(const std::string& path) { return decode_scalar(read_file(path)); }

Image read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    if (!std::filesystem::exists(path)) throw IoError("cannot open '" + path + "'");
    throw FormatError("png: " + std::string(png.message));
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError("png: " + std::string(png.message));
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < buffer.size(); ++i) image.data()[i] = buffer[i] / 255.0;
  return image;
}

void write_png(const std::string& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(image.data().size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("png: " + std::string(png.message));
  }
}

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "LDK1", 4) == 0) return read_image(path);
  return read_png(path);
}

}  // namespace ldk
