#ifndef CURRICUBENCH_CHECKPOINT_HPP_
#define CURRICUBENCH_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "curricubench/tensor.hpp"

namespace curricubench {

// Named f32 tensor set plus string metadata; the unit of weight transfer
// between curriculum steps. Round-trips bit-exactly through the on-disk
// format: manifest.tsv rows `name<TAB>shape<TAB>f32<TAB>file<TAB>crc32`
// plus raw little-endian f32 files, row-major.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
};

std::uint32_t crc32(const void* data, std::size_t size);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace curricubench

#endif  // CURRICUBENCH_CHECKPOINT_HPP_
