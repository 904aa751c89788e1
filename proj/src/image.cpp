#include "tpc/image.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tpc {

namespace {

int next_token(std::istream& in) {
  // skips whitespace and '#' comments per the netpbm header grammar
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("pgm: malformed header");
  return v;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") {
    throw std::runtime_error("pgm: unsupported magic '" + magic + "' in " + path);
  }
  GrayImage img;
  img.width = next_token(in);
  img.height = next_token(in);
  int maxval = next_token(in);
  if (maxval <= 0 || maxval > 255) {
    throw std::runtime_error("pgm: only 8-bit images supported: " + path);
  }
  size_t n = static_cast<size_t>(img.width) * img.height;
  img.pixels.resize(n);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) {
      throw std::runtime_error("pgm: truncated pixel data in " + path);
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      int v;
      if (!(in >> v)) throw std::runtime_error("pgm: truncated data in " + path);
      img.pixels[i] = static_cast<uint8_t>(v);
    }
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<uint8_t>(p * 255 / maxval);
    }
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage center_crop_square(const GrayImage& img) {
  int side = std::min(img.width, img.height);
  int x0 = (img.width - side) / 2;
  int y0 = (img.height - side) / 2;
  GrayImage out;
  out.width = out.height = side;
  out.pixels.resize(static_cast<size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out.pixels[static_cast<size_t>(y) * side + x] =
          img.pixels[static_cast<size_t>(y + y0) * img.width + (x + x0)];
    }
  }
  return out;
}

GrayImage resize_nearest(const GrayImage& img, int size) {
  GrayImage out;
  out.width = out.height = size;
  out.pixels.resize(static_cast<size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    int sy = static_cast<int>((y + 0.5) * img.height / size);
    for (int x = 0; x < size; ++x) {
      int sx = static_cast<int>((x + 0.5) * img.width / size);
      out.pixels[static_cast<size_t>(y) * size + x] =
          img.pixels[static_cast<size_t>(sy) * img.width + sx];
    }
  }
  return out;
}

}  // namespace tpc
