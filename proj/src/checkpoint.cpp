#include "idhnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "idhnet/errors.hpp"

namespace idhnet {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and require a little-endian host");

namespace {
constexpr char kMagic[8] = {'I', 'D', 'H', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header = checkpoint.header;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    table.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += tensor.size() * sizeof(double);
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t length = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, tensor] : checkpoint.tensors) {
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!out) throw FormatError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError("not a checkpoint file: " + path.string());
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw FormatError("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header is not JSON: " + std::string(e.what()));
  }
  const std::streamoff payload_start = in.tellg();
  try {
    for (const auto& entry : ck.header.at("tensors")) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::size_t count = 1;
      for (auto e : shape) count *= e;
      std::vector<double> data(count);
      in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
      in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
      if (!in) throw FormatError("truncated checkpoint payload: " + path.string());
      ck.tensors.emplace(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint tensor table: " + std::string(e.what()));
  }
  ck.header.erase("tensors");
  return ck;
}

}  // namespace idhnet
