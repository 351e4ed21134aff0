#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include "imitate/io.hpp"

namespace imitate::io {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_gray(const std::string& path, const Tensor& image, int bit_depth, double scale) {
    require(image.rank() == 2, "png write expects {H,W}");
    const int H = image.dim(0), W = image.dim(1);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for write: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, W, H, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    if (bit_depth == 16) {
        std::vector<uint16_t> row(static_cast<size_t>(W));
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double v = image.at(y, x) * scale;
                v = v < 0 ? 0 : (v > 65535.0 ? 65535.0 : v);
                uint16_t q = static_cast<uint16_t>(v + 0.5);
                row[x] = static_cast<uint16_t>((q >> 8) | (q << 8));  // big-endian
            }
            png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
        }
    } else {
        std::vector<uint8_t> row(static_cast<size_t>(W));
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double v = image.at(y, x) * scale;
                v = v < 0 ? 0 : (v > 255.0 ? 255.0 : v);
                row[x] = static_cast<uint8_t>(v + 0.5);
            }
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor read_gray(const std::string& path, int expect_depth, double scale) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    int W = static_cast<int>(png_get_image_width(png, info));
    int H = static_cast<int>(png_get_image_height(png, info));
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != expect_depth) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unexpected png format: " + path);
    }
    Tensor out({H, W});
    if (depth == 16) {
        std::vector<uint16_t> row(static_cast<size_t>(W));
        for (int y = 0; y < H; ++y) {
            png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
            for (int x = 0; x < W; ++x) {
                uint16_t be = row[x];
                uint16_t v = static_cast<uint16_t>((be >> 8) | (be << 8));
                out.at(y, x) = v / scale;
            }
        }
    } else {
        std::vector<uint8_t> row(static_cast<size_t>(W));
        for (int y = 0; y < H; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < W; ++x) out.at(y, x) = row[x] / scale;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

void write_png16(const std::string& path, const Tensor& image) {
    write_gray(path, image, 16, 65535.0);
}

Tensor read_png16(const std::string& path) { return read_gray(path, 16, 65535.0); }

void write_png8(const std::string& path, const Tensor& labels) {
    write_gray(path, labels, 8, 1.0);
}

Tensor read_png8(const std::string& path) { return read_gray(path, 8, 1.0); }

void write_png_rgb(const std::string& path, int height, int width,
                   const std::vector<unsigned char>& rgb) {
    require(rgb.size() == static_cast<size_t>(height) * width * 3, "rgb buffer size mismatch");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(y) * width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace imitate::io
