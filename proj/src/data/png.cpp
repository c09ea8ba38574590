#include <png.h>

#include <cstring>

#include "convtrans/data.hpp"
#include "convtrans/errors.hpp"

namespace cts {

Image8 read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw DataError("cannot read PNG '" + path + "': " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

void write_png(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw UsageError("write_png: only gray or RGB images are supported");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw UsageError("write_png: pixel buffer does not match the extents");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw DataError("cannot write PNG '" + path + "': " + img.message);
}

}  // namespace cts
