#ifndef UIBD_DATASET_HPP_
#define UIBD_DATASET_HPP_

#include <string>
#include <vector>

#include "uibd/rng.hpp"
#include "uibd/tensor.hpp"

namespace uibd {

// Labeled single-channel images in [-1, 1].
struct LabeledDataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  int image_size = 16;

  size_t size() const { return images.size(); }
};

// The ten procedural glyph classes, in label order.
const std::vector<std::string>& glyph_class_names();

// Class-balanced procedural dataset with integer position/scale jitter and
// byte-lattice contrast jitter, so pgm round-trips are exact. Deterministic
// under the rng seed.
LabeledDataset synth_shapes_dataset(int n, int image_size, Rng& rng);

// Deterministic train/holdout split (no rng; the tail fraction is held out
// class-interleaved, so both sides stay balanced).
void split_dataset(const LabeledDataset& all, double holdout_fraction,
                   LabeledDataset* train, LabeledDataset* holdout);

// Fixed 16x16 target bitmaps ("hat", "shoe", "cat"), nearest-upscaled when
// image_size is a multiple of 16.
Tensor target_bitmap(const std::string& name, int image_size);

// PGM directory + JSON manifest round trip.
void save_dataset(const std::string& dir, const LabeledDataset& ds, uint64_t seed);
LabeledDataset load_dataset(const std::string& dir);

}  // namespace uibd

#endif  // UIBD_DATASET_HPP_
