#include "sdic/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "sdic/errors.hpp"

namespace sdic::io {

uint8_t to_byte(double v) {
    const double scaled = std::round((v + 1.0) * 127.5);
    return static_cast<uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

double from_byte(uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

namespace {

struct RgbRows {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    std::vector<png_bytep> rows;
};

// Kept separate from write_png so nothing with automatic storage is modified
// between setjmp and a libpng longjmp.
bool encode_png(std::FILE* fp, const RgbRows* img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, img->width, img->height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(img->rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    expect_shape(image, {3, -1, -1}, "write_png");
    const auto img = image.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const auto h = img.size(1);
    const auto w = img.size(2);
    auto acc = img.accessor<double, 3>();
    std::vector<png_byte> pixels(static_cast<std::size_t>(h * w * 3));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) pixels[static_cast<std::size_t>((y * w + x) * 3 + c)] = to_byte(acc[c][y][x]);
        }
    }
    RgbRows rows;
    rows.width = static_cast<png_uint_32>(w);
    rows.height = static_cast<png_uint_32>(h);
    for (int64_t y = 0; y < h; ++y) rows.rows.push_back(&pixels[static_cast<std::size_t>(y * w * 3)]);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    if (!encode_png(fp.get(), &rows)) throw IoError("libpng failed writing " + path.string());
}

torch::Tensor read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path.string() + " is not a PNG");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_byte> pixels;
    png_uint_32 w = 0;
    png_uint_32 h = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng failed reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    w = png_get_image_width(png, info);
    h = png_get_image_height(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": unsupported PNG layout");
    }
    pixels.resize(static_cast<std::size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = &pixels[static_cast<std::size_t>(y) * w * 3];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    auto out = torch::empty({3, static_cast<int64_t>(h), static_cast<int64_t>(w)}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                acc[c][y][x] = static_cast<float>(from_byte(pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]));
            }
        }
    }
    return out;
}

torch::Tensor contact_sheet(const std::vector<torch::Tensor>& images, int64_t columns) {
    if (images.empty()) throw ShapeError("contact_sheet: no images");
    columns = std::max<int64_t>(1, std::min<int64_t>(columns, static_cast<int64_t>(images.size())));
    const auto h = images.front().size(1);
    const auto w = images.front().size(2);
    const int64_t gap = 2;
    const int64_t rows = (static_cast<int64_t>(images.size()) + columns - 1) / columns;
    auto sheet = torch::ones({3, rows * (h + gap) - gap, columns * (w + gap) - gap}, torch::kFloat32);
    for (std::size_t i = 0; i < images.size(); ++i) {
        expect_shape(images[i], {3, h, w}, "contact_sheet tile");
        const int64_t r = static_cast<int64_t>(i) / columns;
        const int64_t c = static_cast<int64_t>(i) % columns;
        using torch::indexing::Slice;
        sheet.index_put_({Slice(), Slice(r * (h + gap), r * (h + gap) + h), Slice(c * (w + gap), c * (w + gap) + w)},
                         images[i].detach().to(torch::kCPU, torch::kFloat32));
    }
    return sheet;
}

}  // namespace sdic::io
