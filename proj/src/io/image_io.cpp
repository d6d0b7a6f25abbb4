#include "svio/io/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#ifdef SVIO_HAVE_PNG
#include <png.h>
#endif

namespace svio {

namespace {

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5")
    throw std::runtime_error("load_image: unsupported PGM magic in " + path);
  auto next_int = [&in, &path]() {
    int v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v))
        throw std::runtime_error("load_image: malformed PGM header " + path);
      return v;
    }
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255)
    throw std::runtime_error("load_image: only 8-bit PGM supported " + path);
  in.get();  // single whitespace after header
  std::vector<unsigned char> raw(size_t(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!in)
    throw std::runtime_error("load_image: truncated PGM data in " + path);
  Image img(w, h);
  for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = float(raw[i]);
  return img;
}

#ifdef SVIO_HAVE_PNG
Image load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("load_image: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("load_image: PNG decode failed for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  std::vector<unsigned char> row(size_t(png_get_rowbytes(png, info)));
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img.at(x, y) = float(row[x]);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}
#endif

}  // namespace

bool png_supported() {
#ifdef SVIO_HAVE_PNG
  return true;
#else
  return false;
#endif
}

Image load_image(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".pgm" || ext == ".PGM") return load_pgm(path);
#ifdef SVIO_HAVE_PNG
  if (ext == ".png" || ext == ".PNG") return load_png(path);
#endif
  throw std::runtime_error("load_image: unsupported format " + path);
}

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw(size_t(img.width()) * img.height());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = img.data()[i];
    raw[i] = (unsigned char)(v < 0.f ? 0 : (v > 255.f ? 255 : v + 0.5f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            std::streamsize(raw.size()));
}

}  // namespace svio
