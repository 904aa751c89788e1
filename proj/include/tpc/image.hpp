#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tpc {

struct GrayImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;  // row-major
};

// 8-bit grayscale PGM, binary (P5) or ascii (P2).
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& img);

// Center-crop to square, then nearest-neighbor resize.
GrayImage center_crop_square(const GrayImage& img);
GrayImage resize_nearest(const GrayImage& img, int size);

}  // namespace tpc
