#pragma once

#include <png.h>

#include <cstdint>
#include <string>
#include <vector>

#include "afn/error.hpp"

namespace afn::png {

struct Rgb8 {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

inline Rgb8 read_rgb(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw IoError("cannot read PNG " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8 out;
  out.rows = static_cast<int>(image.height);
  out.cols = static_cast<int>(image.width);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path + ": " + image.message);
  }
  return out;
}

inline void write_rgb(const std::string& path, const Rgb8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols);
  image.height = static_cast<png_uint_32>(img.rows);
  image.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr) == 0) {
    throw IoError("cannot write PNG " + path + ": " + image.message);
  }
}

inline void write_gray(const std::string& path, int rows, int cols, const std::vector<std::uint8_t>& gray) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(cols);
  image.height = static_cast<png_uint_32>(rows);
  image.format = PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr) == 0) {
    throw IoError("cannot write PNG " + path + ": " + image.message);
  }
}

}  // namespace afn::png
