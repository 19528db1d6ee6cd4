#include "cxrtutor/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "cxrtutor/errors.hpp"

namespace cxrtutor {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) {
        if (mode[0] == 'r') throw MissingFile("cannot open " + path.string());
        throw ImageWriteError("cannot open " + path.string() + " for writing");
    }
    return f;
}

class PngReader {
public:
    explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
        png_byte sig[8];
        if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
            throw MalformedSidecar(path.string() + ": not a PNG file");
        }
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) throw Error("libpng initialisation failed");
        if (setjmp(png_jmpbuf(png_))) {
            throw MalformedSidecar(path.string() + ": corrupt PNG data");
        }
        png_init_io(png_, file_.get());
        png_set_sig_bytes(png_, 8);
        png_read_info(png_, info_);
        path_ = path.string();
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    int width() const { return static_cast<int>(png_get_image_width(png_, info_)); }
    int height() const { return static_cast<int>(png_get_image_height(png_, info_)); }

    std::vector<std::uint8_t> read_rows(int channels_out) {
        if (setjmp(png_jmpbuf(png_))) {
            throw MalformedSidecar(path_ + ": corrupt PNG data");
        }
        png_read_update_info(png_, info_);
        const auto rowbytes = png_get_rowbytes(png_, info_);
        if (rowbytes != static_cast<std::size_t>(width()) * channels_out) {
            throw MalformedSidecar(path_ + ": unsupported PNG layout");
        }
        std::vector<std::uint8_t> data(rowbytes * height());
        std::vector<png_bytep> rows(height());
        for (int y = 0; y < height(); ++y) rows[y] = data.data() + rowbytes * y;
        // Re-arm so a longjmp lands where data and rows are still in scope.
        if (setjmp(png_jmpbuf(png_))) {
            throw MalformedSidecar(path_ + ": corrupt PNG data");
        }
        png_read_image(png_, rows.data());
        png_read_end(png_, nullptr);
        return data;
    }

    png_structp png() { return png_; }
    png_infop info() { return info_; }

private:
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
    std::string path_;
};

class PngWriter {
public:
    explicit PngWriter(const std::filesystem::path& path) : file_(open_file(path, "wb")) {
        png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) throw Error("libpng initialisation failed");
        path_ = path.string();
    }
    ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    void write(int width, int height, int color_type, const std::vector<png_color>* palette,
               const std::uint8_t* data, std::size_t rowbytes) {
        if (setjmp(png_jmpbuf(png_))) throw ImageWriteError("failed writing " + path_);
        png_init_io(png_, file_.get());
        png_set_IHDR(png_, info_, width, height, 8, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        if (palette) {
            png_set_PLTE(png_, info_, palette->data(), static_cast<int>(palette->size()));
        }
        png_write_info(png_, info_);
        for (int y = 0; y < height; ++y) {
            png_write_row(png_, const_cast<png_bytep>(data + rowbytes * y));
        }
        png_write_end(png_, nullptr);
        if (std::fflush(file_.get()) != 0) throw ImageWriteError("failed flushing " + path_);
    }

private:
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
    std::string path_;
};

}  // namespace

PngInfo read_png_info(const std::filesystem::path& path) {
    PngReader reader(path);
    return {reader.width(), reader.height()};
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    PngReader reader(path);
    auto* png = reader.png();
    auto* info = reader.info();
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);

    RgbImage image;
    image.width = reader.width();
    image.height = reader.height();
    image.pixels = reader.read_rows(3);
    return image;
}

std::vector<std::uint8_t> read_png_indices(const std::filesystem::path& path, int& width,
                                           int& height) {
    PngReader reader(path);
    auto* png = reader.png();
    auto* info = reader.info();
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY) {
        throw MalformedSidecar(path.string() + ": lobe mask must be palette-indexed or grayscale");
    }
    if (bit_depth == 16) throw MalformedSidecar(path.string() + ": 16-bit lobe mask unsupported");
    if (bit_depth < 8) png_set_packing(png);
    width = reader.width();
    height = reader.height();
    return reader.read_rows(1);
}

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path) {
    PngWriter writer(path);
    writer.write(image.width, image.height, PNG_COLOR_TYPE_RGB, nullptr, image.pixels.data(),
                 static_cast<std::size_t>(image.width) * 3);
}

void write_png_indexed(const std::vector<std::uint8_t>& indices, int width, int height,
                       const std::filesystem::path& path) {
    std::uint8_t max_index = 0;
    for (auto v : indices) max_index = std::max(max_index, v);
    std::vector<png_color> palette(static_cast<std::size_t>(max_index) + 1);
    for (std::size_t i = 0; i < palette.size(); ++i) {
        // Spread hues so masks are legible when opened in a viewer.
        palette[i] = png_color{static_cast<png_byte>((i * 97) % 256),
                               static_cast<png_byte>((i * 57 + 40) % 256),
                               static_cast<png_byte>((i * 151 + 80) % 256)};
    }
    palette[0] = png_color{0, 0, 0};
    PngWriter writer(path);
    writer.write(width, height, PNG_COLOR_TYPE_PALETTE, &palette, indices.data(),
                 static_cast<std::size_t>(width));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace cxrtutor
