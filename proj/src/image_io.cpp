#include "uibd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uibd/common.hpp"

namespace uibd {

namespace {

unsigned char to_byte(double v) {
  const double b = std::lround((v + 1.0) * 127.5);
  return static_cast<unsigned char>(std::clamp(b, 0.0, 255.0));
}

double from_byte(unsigned char b) { return static_cast<double>(b) / 127.5 - 1.0; }

}  // namespace

double pgm_quantize_roundtrip(double v) { return from_byte(to_byte(v)); }

void write_pgm(const std::string& path, const Tensor& img) {
  require(img.rank() == 3 && img.dim(0) == 1, "write_pgm: expects a (1,H,W) tensor");
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "write_pgm: cannot open '" + path + "'");
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = to_byte(img.at(0, y, x));
    os.write(reinterpret_cast<const char*>(row.data()), w);
  }
  require(os.good(), "write_pgm: write failed for '" + path + "'");
}

Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "read_pgm: cannot open '" + path + "'");
  std::string magic;
  is >> magic;
  require(magic == "P5", "read_pgm: '" + path + "' is not binary PGM");
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  require(w >= 1 && h >= 1 && maxval == 255, "read_pgm: unsupported geometry");
  is.get();  // single whitespace after header
  Tensor img({1, h, w});
  std::vector<unsigned char> row(w);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), w);
    require(is.good(), "read_pgm: truncated file");
    for (int x = 0; x < w; ++x) img.at(0, y, x) = from_byte(row[x]);
  }
  return img;
}

void write_pgm_grid(const std::string& path, const std::vector<Tensor>& imgs, int cols) {
  require(!imgs.empty(), "write_pgm_grid: empty image list");
  require(cols >= 1, "write_pgm_grid: cols must be >= 1");
  const int h = imgs[0].dim(1), w = imgs[0].dim(2);
  const int rows = (static_cast<int>(imgs.size()) + cols - 1) / cols;
  Tensor grid({1, rows * (h + 1) - 1, cols * (w + 1) - 1});
  grid.fill(-1.0);
  for (size_t i = 0; i < imgs.size(); ++i) {
    require(imgs[i].dim(1) == h && imgs[i].dim(2) == w, "write_pgm_grid: mixed sizes");
    const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        grid.at(0, r * (h + 1) + y, c * (w + 1) + x) = imgs[i].at(0, y, x);
  }
  write_pgm(path, grid);
}

void write_pgm_rescaled(const std::string& path, const Tensor& img) {
  const double m = norm_linf(img);
  Tensor scaled = img;
  if (m > 0) scaled *= 1.0 / m;
  write_pgm(path, scaled);
}

}  // namespace uibd
