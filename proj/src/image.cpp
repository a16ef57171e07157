// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace forge {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::vector<png_byte> to_rgb8(const Image& image) {
    if (image.channels() != 3) throw PreconditionError("PNG export expects a 3-channel image");
    const auto h = image.rows(), w = image.cols();
    std::vector<png_byte> buf(static_cast<std::size_t>(h * w * 3));
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            for (Eigen::Index c = 0; c < 3; ++c) buf[static_cast<std::size_t>((y * w + x) * 3 + c)] = quantize(image(c, y, x));
        }
    }
    return buf;
}

void write_png(png_structp png, png_infop info, const Image& image) {
    const auto h = image.rows(), w = image.cols();
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    auto buf = to_rgb8(image);
    for (Eigen::Index y = 0; y < h; ++y) png_write_row(png, buf.data() + y * w * 3);
    png_write_end(png, nullptr);
}

} // namespace

Image load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw NotFoundError("cannot open image: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("malformed PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    png_set_expand(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const auto stride = png_get_rowbytes(png, info);
    pixels.resize(stride * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(3, h, w);
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) image(c, y, x) = rows[y][x * 3 + static_cast<png_uint_32>(c)] / 255.0;
        }
    }
    return image;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot write image: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed: " + path.string());
    }
    png_init_io(png, fp.get());
    write_png(png, info, image);
    png_destroy_write_struct(&png, &info);
}

std::string encode_png(const Image& image) {
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
        },
        nullptr);
    write_png(png, info, image);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image mask_to_image(const MaskGrid& mask) {
    const Grid<double> plane = mask.cast<double>();
    return Image(std::vector<Grid<double>>{plane, plane, plane});
}

Image resize_nearest(const Image& image, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1) throw PreconditionError("resize target must be at least 1x1");
    if (rows == image.rows() && cols == image.cols()) return image;
    Image out(image.channels(), rows, cols);
    for (Eigen::Index c = 0; c < image.channels(); ++c) {
        for (Eigen::Index y = 0; y < rows; ++y) {
            const Eigen::Index sy = (y * image.rows()) / rows;
            for (Eigen::Index x = 0; x < cols; ++x) out(c, y, x) = image(c, sy, (x * image.cols()) / cols);
        }
    }
    return out;
}

Grid<double> to_gray(const Image& image) {
    if (image.channels() == 1) return image[0];
    if (image.channels() != 3) throw PreconditionError("expected a 1- or 3-channel image");
    return 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2];
}

Eigen::VectorXd channel_means(const Image& image) {
    if (image.empty()) throw PreconditionError("channel means of an empty image");
    Eigen::VectorXd m(image.channels());
    for (Eigen::Index c = 0; c < image.channels(); ++c) m(c) = image[c].mean();
    return m;
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw PreconditionError("images differ in size");
    if (a.empty()) return 0.0;
    double total = 0.0;
    for (Eigen::Index c = 0; c < a.channels(); ++c) total += (a[c] - b[c]).abs().sum();
    return total / static_cast<double>(a.size());
}

MaskGrid edge_map(const Image& image, double threshold) {
    const Grid<double> g = to_gray(image);
    const Eigen::Index h = g.rows(), w = g.cols();
    MaskGrid out = MaskGrid::Zero(h, w);
    auto at = [&](Eigen::Index y, Eigen::Index x) {
        return g(std::clamp<Eigen::Index>(y, 0, h - 1), std::clamp<Eigen::Index>(x, 0, w - 1));
    };
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
            out(y, x) = std::hypot(gx, gy) > threshold ? 1 : 0;
        }
    }
    return out;
}

double laplacian_variance(const Image& image) {
    const Grid<double> g = to_gray(image);
    const Eigen::Index h = g.rows(), w = g.cols();
    if (h < 3 || w < 3) return 0.0;
    const Grid<double> lap = g.block(0, 1, h - 2, w - 2) + g.block(2, 1, h - 2, w - 2) + g.block(1, 0, h - 2, w - 2) +
                             g.block(1, 2, h - 2, w - 2) - 4.0 * g.block(1, 1, h - 2, w - 2);
    const double mean = lap.mean();
    return (lap - mean).square().mean();
}

Image composite(const Image& inside, const Image& outside, const MaskGrid& mask) {
    if (!inside.same_shape(outside)) throw PreconditionError("composite: images differ in size");
    if (mask.rows() != inside.rows() || mask.cols() != inside.cols()) throw PreconditionError("composite: mask size");
    const auto sel = mask != 0;
    return inside.binary(outside, [&](const auto& a, const auto& b) -> Grid<double> { return sel.select(a, b); });
}

} // namespace forge
