#include "agentreg/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "agentreg/error.hpp"

namespace agentreg {

namespace {

// Header tokens are separated by whitespace; '#' comments run to end of line.
std::size_t header_number(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) fail(ErrorKind::kFormat, "malformed netpbm header");
  std::size_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    if (v > (1u << 24)) fail(ErrorKind::kFormat, "netpbm header value too large");
    c = in.get();
  }
  // Exactly one whitespace byte follows the last header field.
  if (c == EOF || !std::isspace(c)) fail(ErrorKind::kFormat, "malformed netpbm header");
  return v;
}

}  // namespace

Tensor read_pnm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    fail(ErrorKind::kFormat, "not a binary PGM/PPM image");
  }
  const std::size_t channels = magic[1] == '5' ? 1 : 3;
  const std::size_t w = header_number(in);
  const std::size_t h = header_number(in);
  const std::size_t maxval = header_number(in);
  if (w == 0 || h == 0) fail(ErrorKind::kFormat, "netpbm image has zero size");
  if (maxval == 0 || maxval > 65535) fail(ErrorKind::kFormat, "netpbm maxval out of range");
  const std::size_t bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(h * w * channels * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    fail(ErrorKind::kFormat, "netpbm pixel data truncated");
  }
  Tensor img({h, w, channels});
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::size_t v = bytes == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1];
    if (v > maxval) fail(ErrorKind::kFormat, "netpbm sample exceeds maxval");
    img[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read image " + path);
  try {
    return read_pnm(in);
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const Tensor& image, double lo, double hi) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    fail(ErrorKind::kDimension, "write_pnm expects H×W×1 or H×W×3");
  }
  if (!(hi > lo)) fail(ErrorKind::kContract, "write_pnm needs hi > lo");
  out << (image.dim(2) == 1 ? "P5" : "P6") << '\n'
      << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double t = std::clamp((image[i] - lo) / (hi - lo), 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(255.0 * t));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing netpbm image");
}

void write_pnm(const std::string& path, const Tensor& image, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write image " + path);
  write_pnm(out, image, lo, hi);
}

}  // namespace agentreg
