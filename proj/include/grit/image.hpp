#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace grit {

using Rgb = std::array<uint8_t, 3>;

// Interleaved 8-bit RGB raster, row-major, origin top-left.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb color);

  const std::vector<uint8_t>& bytes() const { return pixels_; }
  std::vector<uint8_t>& bytes() { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> pixels_;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// PNG codec (8-bit RGB). Decoding accepts any PNG color type and converts it.
std::string encode_png(const RgbImage& image);
RgbImage decode_png(const std::string& data);

// Binary PPM (P6, maxval 255).
std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::string& data);

// Chooses the codec from the file extension (.png, .ppm).
RgbImage load_image(const std::filesystem::path& path);
void save_image(const RgbImage& image, const std::filesystem::path& path);

std::string base64_encode(const std::string& bytes);

}  // namespace grit
