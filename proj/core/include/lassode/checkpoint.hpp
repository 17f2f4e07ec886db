#pragma once

#include <filesystem>
#include <string>

#include "lassode/param_store.hpp"

namespace lassode {

/// Binary checkpoint layout (all integers and reals little-endian):
///
///   magic "LASSODE\x01" | u64 meta length | meta bytes (UTF-8 JSON)
///   u64 entry count
///   per entry: u32 path length | path | u8 flags (bit0 trainable,
///              bit1 lora adapter) | u32 ndim | u64 dims[ndim] | f64 values
///
/// `meta` carries the model configuration so a checkpoint is self-describing.
struct Checkpoint {
  std::string meta;
  ParamStore params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace lassode
