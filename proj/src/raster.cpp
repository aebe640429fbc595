#include "labelfuse/raster.hpp"

#include <sstream>

#include "labelfuse/error.hpp"
#include "labelfuse/manifest_io.hpp"

namespace labelfuse {

std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (magic != "P5" || !in || w <= 0 || h <= 0 || maxval != 255) {
    throw ValidationError("not an 8-bit binary PGM");
  }
  in.get();
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ValidationError("truncated PGM pixel data");
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  write_text_file(path, encode_pgm(img));
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_text_file(path)); }

GrayImage crop(const GrayImage& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > img.width || y + h > img.height) {
    throw ValidationError("crop rectangle outside the image");
  }
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(c, r) = img.at(x + c, y + r);
  }
  return out;
}

}  // namespace labelfuse
