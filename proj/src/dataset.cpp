#include "uibd/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "uibd/common.hpp"
#include "uibd/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uibd {

namespace {

// Byte-lattice values, so saved pgm files reproduce the in-memory tensors.
double lattice(int byte) { return static_cast<double>(byte) / 127.5 - 1.0; }

struct GlyphCtx {
  int size;
  int cx, cy;   // center
  int r;        // half-extent
  double fg, bg;
};

void draw_glyph(int cls, const GlyphCtx& g, Tensor& img) {
  img.fill(g.bg);
  auto put = [&](int x, int y) {
    if (x >= 0 && x < g.size && y >= 0 && y < g.size) img.at(0, y, x) = g.fg;
  };
  const int r = g.r;
  switch (cls) {
    case 0:  // triangle (filled, apex up)
      for (int dy = -r; dy <= r; ++dy) {
        const int half = ((dy + r) * r) / (2 * r);
        for (int dx = -half; dx <= half; ++dx) put(g.cx + dx, g.cy + dy);
      }
      break;
    case 1:  // square (filled)
      for (int dy = -r + 1; dy <= r - 1; ++dy)
        for (int dx = -r + 1; dx <= r - 1; ++dx) put(g.cx + dx, g.cy + dy);
      break;
    case 2:  // cross
      for (int d = -r; d <= r; ++d) {
        put(g.cx + d, g.cy);
        put(g.cx + d, g.cy + 1);
        put(g.cx, g.cy + d);
        put(g.cx + 1, g.cy + d);
      }
      break;
    case 3:  // ring
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int d2 = dx * dx + dy * dy;
          if (d2 <= r * r && d2 >= (r - 2) * (r - 2)) put(g.cx + dx, g.cy + dy);
        }
      break;
    case 4:  // horizontal bar
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -r; dx <= r; ++dx) put(g.cx + dx, g.cy + dy);
      break;
    case 5:  // L
      for (int dy = -r; dy <= r; ++dy) {
        put(g.cx - r + 1, g.cy + dy);
        put(g.cx - r + 2, g.cy + dy);
      }
      for (int dx = -r; dx <= r; ++dx) {
        put(g.cx + dx, g.cy + r);
        put(g.cx + dx, g.cy + r - 1);
      }
      break;
    case 6:  // T
      for (int dx = -r; dx <= r; ++dx) {
        put(g.cx + dx, g.cy - r);
        put(g.cx + dx, g.cy - r + 1);
      }
      for (int dy = -r; dy <= r; ++dy) {
        put(g.cx, g.cy + dy);
        put(g.cx + 1, g.cy + dy);
      }
      break;
    case 7:  // diamond (filled)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (std::abs(dx) + std::abs(dy) <= r) put(g.cx + dx, g.cy + dy);
      break;
    case 8:  // dot grid
      for (int dy = -r; dy <= r; dy += 3)
        for (int dx = -r; dx <= r; dx += 3) {
          put(g.cx + dx, g.cy + dy);
          put(g.cx + dx + 1, g.cy + dy);
          put(g.cx + dx, g.cy + dy + 1);
          put(g.cx + dx + 1, g.cy + dy + 1);
        }
      break;
    case 9:  // diagonal stripes
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (((dx + dy) % 4 + 4) % 4 < 2) put(g.cx + dx, g.cy + dy);
      break;
    default:
      fail("draw_glyph: unknown class");
  }
}

}  // namespace

const std::vector<std::string>& glyph_class_names() {
  static const std::vector<std::string> kNames = {
      "triangle", "square", "cross", "ring", "bar",
      "L",        "T",      "diamond", "dot-grid", "stripe"};
  return kNames;
}

LabeledDataset synth_shapes_dataset(int n, int image_size, Rng& rng) {
  const int n_classes = static_cast<int>(glyph_class_names().size());
  require(n >= n_classes, "synth_shapes_dataset: need at least one image per class");
  require(image_size >= 16, "synth_shapes_dataset: image_size must be >= 16");
  LabeledDataset ds;
  ds.image_size = image_size;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  const int c0 = image_size / 2;
  for (int i = 0; i < n; ++i) {
    const int cls = i % n_classes;  // class-balanced (counts differ by <= 1)
    GlyphCtx g;
    g.size = image_size;
    g.r = (image_size / 16) * rng.uniform_int(4, 5);
    g.cx = c0 + rng.uniform_int(-1, 1) * (image_size / 16);
    g.cy = c0 + rng.uniform_int(-1, 1) * (image_size / 16);
    g.fg = lattice(rng.uniform_int(200, 255));
    g.bg = lattice(rng.uniform_int(0, 40));
    Tensor img({1, image_size, image_size});
    draw_glyph(cls, g, img);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(cls);
  }
  return ds;
}

void split_dataset(const LabeledDataset& all, double holdout_fraction,
                   LabeledDataset* train, LabeledDataset* holdout) {
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "split_dataset: bad fraction");
  const size_t n = all.size();
  const size_t n_hold = std::max<size_t>(1, static_cast<size_t>(holdout_fraction * n));
  require(n_hold < n, "split_dataset: nothing left to train on");
  train->image_size = holdout->image_size = all.image_size;
  // synth order cycles through the classes, so a tail split stays balanced
  for (size_t i = 0; i < n; ++i) {
    LabeledDataset* dst = (i >= n - n_hold) ? holdout : train;
    dst->images.push_back(all.images[i]);
    dst->labels.push_back(all.labels[i]);
  }
}

Tensor target_bitmap(const std::string& name, int image_size) {
  // 16x16 ascii art; '#' = +1, '.' = -1.
  static const char* kHat[16] = {
      "................",
      "................",
      "......####......",
      ".....######.....",
      "....########....",
      "....########....",
      "....########....",
      "....########....",
      "....########....",
      "....########....",
      "..############..",
      ".##############.",
      "################",
      "################",
      "................",
      "................",
  };
  static const char* kShoe[16] = {
      "................",
      "................",
      "....###.........",
      "....###.........",
      "....###.........",
      "....###.........",
      "....####........",
      "....#####.......",
      "....########....",
      "....##########..",
      "....###########.",
      "....###########.",
      ".##############.",
      ".##############.",
      ".############...",
      "................",
  };
  static const char* kCat[16] = {
      "................",
      "..##........##..",
      "..###......###..",
      "..####....####..",
      "..############..",
      ".##############.",
      ".##..######..##.",
      ".##..######..##.",
      ".##############.",
      ".######..######.",
      ".#####.##.#####.",
      ".######..######.",
      "..############..",
      "...##########...",
      ".....######.....",
      "................",
  };
  const char** art = nullptr;
  if (name == "hat") art = kHat;
  else if (name == "shoe") art = kShoe;
  else if (name == "cat") art = kCat;
  else fail("target_bitmap: unknown target '" + name + "' (want hat|shoe|cat)");

  require(image_size >= 16 && image_size % 16 == 0,
          "target_bitmap: image_size must be a positive multiple of 16");
  const int scale = image_size / 16;
  Tensor img({1, image_size, image_size});
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x)
      img.at(0, y, x) = (art[y / scale][x / scale] == '#') ? 1.0 : -1.0;
  return img;
}

void save_dataset(const std::string& dir, const LabeledDataset& ds, uint64_t seed) {
  fs::create_directories(fs::path(dir) / "images");
  json manifest;
  manifest["n"] = ds.size();
  manifest["image_size"] = ds.image_size;
  manifest["seed"] = seed;
  manifest["class_names"] = glyph_class_names();
  manifest["labels"] = ds.labels;
  std::vector<std::string> files;
  for (size_t i = 0; i < ds.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "images/img_%05zu.pgm", i);
    files.emplace_back(buf);
    write_pgm((fs::path(dir) / buf).string(), ds.images[i]);
  }
  manifest["files"] = files;
  std::ofstream os(fs::path(dir) / "dataset.json");
  require(os.good(), "save_dataset: cannot write manifest");
  os << manifest.dump(2) << "\n";
}

LabeledDataset load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "dataset.json");
  require(is.good(), "load_dataset: missing manifest in '" + dir + "'");
  json manifest = json::parse(is);
  LabeledDataset ds;
  ds.image_size = manifest.at("image_size").get<int>();
  ds.labels = manifest.at("labels").get<std::vector<int>>();
  for (const auto& f : manifest.at("files")) {
    ds.images.push_back(read_pgm((fs::path(dir) / f.get<std::string>()).string()));
  }
  require(ds.images.size() == ds.labels.size(), "load_dataset: manifest inconsistent");
  return ds;
}

}  // namespace uibd
