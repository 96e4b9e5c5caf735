#include "uibd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "uibd/common.hpp"

namespace uibd {

namespace {

constexpr char kMagic[4] = {'U', 'I', 'B', 'D'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(is.good(), "checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  require(is.good(), "checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(params.count()));
  for (size_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.names[i];
    const Tensor& t = params.tensors[i];
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) put_u64(os, static_cast<uint64_t>(d));
    for (size_t k = 0; k < t.size(); ++k) put_f64(os, t[k]);
  }
  require(os.good(), "checkpoint: write failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, kMagic, 4) == 0,
          "checkpoint: bad magic in '" + path + "'");
  const uint32_t version = get_u32(is);
  require(version == kVersion, "checkpoint: unsupported version");
  const uint32_t count = get_u32(is);
  ModelParams params;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is);
    require(name_len <= 4096, "checkpoint: implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(is.good(), "checkpoint: truncated name");
    const uint32_t rank = get_u32(is);
    require(rank >= 1 && rank <= 8, "checkpoint: implausible rank");
    std::vector<int> shape(rank);
    size_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint64_t dim = get_u64(is);
      require(dim >= 1 && dim <= (1ULL << 32), "checkpoint: implausible dim");
      shape[d] = static_cast<int>(dim);
      numel *= dim;
    }
    Tensor t(shape);
    for (size_t k = 0; k < numel; ++k) t[k] = get_f64(is);
    params.names.push_back(std::move(name));
    params.tensors.push_back(std::move(t));
  }
  return params;
}

void save_tensor(const std::string& path, const std::string& name, const Tensor& t) {
  ModelParams p;
  p.names.push_back(name);
  p.tensors.push_back(t);
  save_checkpoint(path, p);
}

Tensor load_tensor(const std::string& path, const std::string& name) {
  ModelParams p = load_checkpoint(path);
  return p.find(name);
}

}  // namespace uibd
