#include <png.h>

#include <cstring>

#include "asrl/datapipe.hpp"
#include "asrl/errors.hpp"

namespace asrl {

Image read_png(const std::string& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.c_str()))
        throw IoError("read_png: " + path + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    Image img;
    img.height = pi.height;
    img.width = pi.width;
    img.rgb.resize(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
        std::string msg = pi.message;
        png_image_free(&pi);
        throw IoError("read_png: " + path + ": " + msg);
    }
    return img;
}

void write_png(const std::string& path, const Image& img) {
    if (img.rgb.size() != 3 * img.height * img.width)
        throw IoError("write_png: buffer size does not match " + std::to_string(img.height) +
                      "x" + std::to_string(img.width));
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pi, path.c_str(), 0, img.rgb.data(), 0, nullptr))
        throw IoError("write_png: " + path + ": " + pi.message);
}

}  // namespace asrl
