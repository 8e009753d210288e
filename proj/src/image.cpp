#include "grit/image.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

namespace grit {

RgbImage::RgbImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw ImageError("image dimensions must be non-negative");
  }
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void RgbImage::set(int x, int y, Rgb color) {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = color[0];
  pixels_[i + 1] = color[1];
  pixels_[i + 2] = color[2];
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string encode_png(const RgbImage& image) {
  if (image.empty()) throw ImageError("cannot encode an empty image");
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width());
  desc.height = static_cast<png_uint_32>(image.height());
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0,
                                 image.bytes().data(), 0, nullptr)) {
    throw ImageError(std::string("png: ") + desc.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0,
                                 image.bytes().data(), 0, nullptr)) {
    throw ImageError(std::string("png: ") + desc.message);
  }
  out.resize(size);
  return out;
}

RgbImage decode_png(const std::string& data) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, data.data(), data.size())) {
    throw ImageError(std::string("png: ") + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, image.bytes().data(), 0,
                             nullptr)) {
    png_image_free(&desc);
    throw ImageError(std::string("png: ") + desc.message);
  }
  return image;
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.bytes().data()),
             image.bytes().size());
  return out;
}

RgbImage decode_ppm(const std::string& data) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() &&
           !std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    }
    return data.substr(start, pos - start);
  };
  if (next_token() != "P6") throw ImageError("not a binary PPM (P6)");
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ImageError("malformed PPM header");
  }
  if (maxval != 255) throw ImageError("only 8-bit PPM is supported");
  ++pos;  // single whitespace byte before the raster
  RgbImage image(width, height);
  if (data.size() < pos + image.bytes().size()) {
    throw ImageError("truncated PPM raster");
  }
  std::memcpy(image.bytes().data(), data.data() + pos, image.bytes().size());
  return image;
}

RgbImage load_image(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  if (path.extension() == ".ppm") return decode_ppm(data);
  return decode_png(data);
}

void save_image(const RgbImage& image, const std::filesystem::path& path) {
  const std::string data =
      path.extension() == ".ppm" ? encode_ppm(image) : encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write image file: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(
      reinterpret_cast<unsigned char*>(out.data()),
      reinterpret_cast<const unsigned char*>(bytes.data()),
      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace grit
