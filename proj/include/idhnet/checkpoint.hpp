#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "idhnet/tensor.hpp"

namespace idhnet {

/// Single-file weight container:
///   8-byte magic "IDHCKPT1" | u64 LE header length | JSON header | payload
/// The header carries caller metadata plus a "tensors" table of
/// {name, shape, offset} where offset is the byte offset of the tensor's
/// float64 little-endian data inside the payload.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace idhnet
