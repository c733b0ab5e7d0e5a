#include "palmforge/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

namespace palmforge::img {

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes to 8-bit rows with `channels` samples per pixel.
void read_png_rows(const std::filesystem::path& path, std::vector<std::uint8_t>& data,
                   int& width, int& height, int& channels) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open PNG for reading: " + path.string());

    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("not a PNG file: " + path.string());

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError("PNG decode error: " + path.string());

    png_init_io(r.png, fp.get());
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    width = static_cast<int>(png_get_image_width(r.png, r.info));
    height = static_cast<int>(png_get_image_height(r.png, r.info));
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (depth == 16) png_set_strip_16(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_read_update_info(r.png, r.info);

    channels = png_get_channels(r.png, r.info);
    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    data.resize(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + rowbytes * y;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
}

void write_png_gray(const std::filesystem::path& path, int width, int height, int bit_depth,
                    const std::vector<std::uint8_t>& rowdata, std::size_t rowbytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open PNG for writing: " + path.string());

    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG encode error: " + path.string());

    png_init_io(w.png, fp.get());
    png_set_IHDR(w.png, w.info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(rowdata.data() + rowbytes * y);
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
}

}  // namespace

Image load_png(const std::filesystem::path& path, bool allow_luminance_reduction) {
    std::vector<std::uint8_t> data;
    int w = 0, h = 0, ch = 0;
    read_png_rows(path, data, w, h, ch);

    if (ch != 1 && !allow_luminance_reduction)
        throw IoError("multi-channel PNG rejected (pass luminance flag to reduce): " + path.string());

    Image out(w, h);
    const std::size_t rowbytes = static_cast<std::size_t>(w) * ch;
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = data.data() + rowbytes * y;
        for (int x = 0; x < w; ++x) {
            float v;
            if (ch == 1) {
                v = row[x] / 255.0f;
            } else {
                // Rec.601 luma; alpha ignored.
                const std::uint8_t* p = row + static_cast<std::size_t>(x) * ch;
                v = (0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]) / 255.0f;
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

void save_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            rows[static_cast<std::size_t>(y) * img.width + x] = to_byte(img.at(x, y));
    write_png_gray(path, img.width, img.height, 8, rows, static_cast<std::size_t>(img.width));
}

BinaryImage load_png_binary(const std::filesystem::path& path) {
    // expand_gray_1_2_4_to_8 upscales bit depth 1 to {0,255}
    const Image im = load_png(path, false);
    BinaryImage out(im.width, im.height);
    for (std::size_t i = 0; i < im.pixels.size(); ++i)
        out.bits[i] = im.pixels[i] >= 0.5f ? 1 : 0;
    return out;
}

void save_png_binary(const std::filesystem::path& path, const BinaryImage& img) {
    const std::size_t rowbytes = (static_cast<std::size_t>(img.width) + 7) / 8;
    std::vector<std::uint8_t> rows(rowbytes * img.height, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y))
                rows[rowbytes * y + x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    write_png_gray(path, img.width, img.height, 1, rows, rowbytes);
}

Image load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open PGM: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5") throw IoError("unsupported PGM magic (want P5): " + path.string());
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comment lines
        int c = in.get();
        while (c == '#' || std::isspace(c)) {
            if (c == '#')
                while (c != '\n' && c != EOF) c = in.get();
            c = in.get();
        }
        int v = 0;
        bool any = false;
        while (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            any = true;
            c = in.get();
        }
        if (!any) throw IoError("malformed PGM header: " + path.string());
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw IoError("PGM maxval must be 255: " + path.string());
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("truncated PGM payload: " + path.string());
    Image out(w, h);
    for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] / 255.0f;
    return out;
}

void save_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open PGM for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> buf(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) buf[i] = to_byte(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing PGM payload: " + path.string());
}

}  // namespace palmforge::img
