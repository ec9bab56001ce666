#include "pdnet/pnm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "pdnet/error.hpp"

namespace pdnet::pnm {
namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw DataError(path.string() + ": " + what);
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in, const std::filesystem::path& path) {
  std::string out;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    out.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (out.empty()) fail(path, "truncated header");
  // The single whitespace byte after maxval has been consumed here.
  return out;
}

std::size_t number(std::istream& in, const std::filesystem::path& path, const char* field) {
  const std::string t = token(in, path);
  std::size_t value = 0;
  for (char ch : t) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) fail(path, std::string("bad ") + field + " '" + t + "'");
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (1u << 20)) fail(path, std::string(field) + " too large");
  }
  return value;
}

}  // namespace

Image read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = token(in, path);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    fail(path, "unsupported format '" + magic + "' (expected binary P5 or P6)");
  }
  img.width = number(in, path, "width");
  img.height = number(in, path, "height");
  const std::size_t maxval = number(in, path, "maxval");
  if (maxval != 255) fail(path, "only maxval 255 is supported (got " + std::to_string(maxval) + ")");
  if (img.width == 0 || img.height == 0) fail(path, "zero-size image");
  img.pixels.resize(img.width * img.height * img.channels);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    fail(path, "truncated pixel data");
  }
  return img;
}

void write(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) fail(path, "images must have 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) fail(path, "pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(path, "write failed");
}

}  // namespace pdnet::pnm
