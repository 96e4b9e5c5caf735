#ifndef UIBD_CHECKPOINT_HPP_
#define UIBD_CHECKPOINT_HPP_

#include <string>

#include "uibd/nn.hpp"

namespace uibd {

// Flat binary tensor container. Byte layout (all little-endian):
//   magic "UIBD" | u32 version (=1) | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | u64 dims[rank]
//               | f64 payload (row-major)
// The layout is frozen; alternate implementations interoperate at byte
// level.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

// Single-tensor convenience wrappers (trigger files, targets...).
void save_tensor(const std::string& path, const std::string& name, const Tensor& t);
Tensor load_tensor(const std::string& path, const std::string& name);

}  // namespace uibd

#endif  // UIBD_CHECKPOINT_HPP_
