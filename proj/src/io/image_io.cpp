#include "ynet/io/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "ynet/error.hpp"

namespace ynet::io {

namespace {

// Netpbm header: magic, width, height, maxval, separated by whitespace with
// optional '#' comments, then exactly one whitespace byte before the raster.
struct Header {
  std::size_t width = 0, height = 0;
};

Header read_header(std::istream& in, const std::string& magic, const std::filesystem::path& path) {
  auto token = [&]() {
    std::string t;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  const std::string m = token();
  if (m != magic) throw DataError(path.string() + ": expected " + magic + " image, found '" + m + "'");
  auto number = [&](const char* what) {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const auto v = std::stoull(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad " + what + " '" + t + "' in header");
    }
  };
  Header h;
  h.width = number("width");
  h.height = number("height");
  const std::size_t maxval = number("maxval");
  if (maxval != 255) throw DataError(path.string() + ": only maxval 255 is supported, got " + std::to_string(maxval));
  if (h.width == 0 || h.height == 0) throw DataError(path.string() + ": empty image");
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void read_raster(std::istream& in, std::vector<std::uint8_t>& dst, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size()));
  if (static_cast<std::size_t>(in.gcount()) != dst.size()) throw DataError(path.string() + ": truncated raster");
}

void write_file(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint8_t>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << header;
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  auto f = open_in(path);
  const Header h = read_header(f, "P6", path);
  RgbImage img{h.width, h.height, std::vector<std::uint8_t>(h.width * h.height * 3)};
  read_raster(f, img.pixels, path);
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  write_file(path, "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n", img.pixels);
}

LabelMask read_pgm(const std::filesystem::path& path) {
  auto f = open_in(path);
  const Header h = read_header(f, "P5", path);
  LabelMask m(h.width, h.height);
  read_raster(f, m.labels, path);
  return m;
}

void write_pgm(const std::filesystem::path& path, const LabelMask& mask) {
  write_file(path, "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n", mask.labels);
}

void check_labels(const LabelMask& mask, std::size_t classes, const std::filesystem::path& origin) {
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const auto v = mask.labels[i];
    if (v != LabelMask::kInvalid && v >= classes) {
      throw DataError((origin.empty() ? std::string("mask") : origin.string()) + ": label " + std::to_string(v) +
                      " at pixel " + std::to_string(i) + " is outside 0.." + std::to_string(classes - 1));
    }
  }
}

}  // namespace ynet::io
