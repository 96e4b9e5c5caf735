#ifndef UIBD_IMAGE_IO_HPP_
#define UIBD_IMAGE_IO_HPP_

#include <string>
#include <vector>

#include "uibd/tensor.hpp"

namespace uibd {

// Binary PGM (P5, maxval 255). Values map byte = round((v + 1) * 127.5)
// clamped to [0, 255], v = byte / 127.5 - 1; so -1 and +1 round-trip
// exactly. Single-channel (1, H, W) tensors only.
void write_pgm(const std::string& path, const Tensor& img);
Tensor read_pgm(const std::string& path);

// Tiled grid of equally sized images with a 1px separator.
void write_pgm_grid(const std::string& path, const std::vector<Tensor>& imgs, int cols);

// Rescales by 1/max|v| before writing, for visualizing small-amplitude
// tensors like triggers.
void write_pgm_rescaled(const std::string& path, const Tensor& img);

double pgm_quantize_roundtrip(double v);

}  // namespace uibd

#endif  // UIBD_IMAGE_IO_HPP_
