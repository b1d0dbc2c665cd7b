#include "lus/image.hpp"

#include <png.h>

#include <cstring>

#include "lus/error.hpp"

namespace lus {

RawImage::RawImage(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
    throw Error(ErrorKind::ImageUnreadable,
                "invalid image geometry " + std::to_string(w) + "x" +
                    std::to_string(h) + "x" + std::to_string(c));
  }
  pixels.assign(static_cast<std::size_t>(w) * h * c, 0);
}

void RawImage::validate() const {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3) ||
      pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorKind::ImageUnreadable, "image buffer does not match " +
                                                std::to_string(width) + "x" +
                                                std::to_string(height) + "x" +
                                                std::to_string(channels));
  }
}

RawImage load_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error(ErrorKind::ImageUnreadable,
                path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  RawImage image(static_cast<int>(png.width), static_cast<int>(png.height),
                 color ? 3 : 1);
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw Error(ErrorKind::ImageUnreadable, path.string() + ": " + message);
  }
  return image;
}

void save_png(const std::filesystem::path& path, const RawImage& image) {
  image.validate();
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0,
                               nullptr)) {
    throw Error(ErrorKind::Io, path.string() + ": " + png.message);
  }
}

}  // namespace lus
