#include "idhnet/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "idhnet/errors.hpp"

namespace idhnet {
namespace fs = std::filesystem;

Volume::Volume(GridDims dims, std::array<double, 3> voxel_size_mm, std::vector<float> data)
    : dims_(dims), voxel_size_mm_(voxel_size_mm), data_(std::move(data)) {
  if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0) throw DimensionError("volume dims must be positive");
  for (double s : voxel_size_mm_) {
    if (!(s > 0.0)) throw DataError("voxel size must be positive");
  }
  if (data_.size() != dims_.count()) {
    throw DimensionError("volume payload has " + std::to_string(data_.size()) + " values, dims need " +
                         std::to_string(dims_.count()));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw DataError("volume contains a non-finite value");
  }
}

Volume::Volume(GridDims dims, std::array<double, 3> voxel_size_mm, float fill)
    : Volume(dims, voxel_size_mm, std::vector<float>(dims.count(), fill)) {}

Mask::Mask(GridDims dims, std::vector<std::uint32_t> indices) : dims_(dims), indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (!indices_.empty() && indices_.back() >= dims_.count()) {
    throw DimensionError("mask index " + std::to_string(indices_.back()) + " outside grid of " +
                         std::to_string(dims_.count()) + " voxels");
  }
}

Mask Mask::from_volume(const Volume& volume) {
  std::vector<std::uint32_t> idx;
  auto data = volume.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] != 0.0f) idx.push_back(static_cast<std::uint32_t>(i));
  }
  return Mask(volume.dims(), std::move(idx));
}

bool Mask::contains(std::uint32_t flat) const {
  return std::binary_search(indices_.begin(), indices_.end(), flat);
}

Volume Mask::to_volume(std::array<double, 3> voxel_size_mm) const {
  Volume v(dims_, voxel_size_mm, 0.0f);
  for (auto i : indices_) v[i] = 1.0f;
  return v;
}

MultiModalScan::MultiModalScan(std::array<Volume, kModalityCount> modalities)
    : modalities_(std::move(modalities)) {
  for (const auto& m : modalities_) {
    if (m.dims() != modalities_[0].dims()) throw DimensionError("scan modalities have different dims");
  }
}

fs::path volume_header_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".json" || p.extension() == ".raw") p.replace_extension();
  p += ".json";
  return p;
}

fs::path volume_payload_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".json" || p.extension() == ".raw") p.replace_extension();
  p += ".raw";
  return p;
}

Volume load_volume(const fs::path& path) {
  const fs::path header_path = volume_header_path(path);
  std::ifstream hin(header_path);
  if (!hin) throw FormatError("cannot open volume header: " + header_path.string());
  GridDims dims;
  std::array<double, 3> voxel_size{};
  try {
    const auto header = nlohmann::json::parse(hin);
    const auto d = header.at("dims").get<std::vector<std::size_t>>();
    const auto s = header.at("voxel_size_mm").get<std::vector<double>>();
    if (d.size() != 3 || s.size() != 3) throw FormatError("dims and voxel_size_mm need 3 entries");
    if (header.at("dtype") != "f32le") throw FormatError("unsupported dtype " + header.at("dtype").dump());
    if (header.at("order") != "x-fastest") throw FormatError("unsupported order " + header.at("order").dump());
    dims = {d[0], d[1], d[2]};
    voxel_size = {s[0], s[1], s[2]};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed volume header " + header_path.string() + ": " + e.what());
  }
  if (dims.count() == 0) throw FormatError("volume dims must be positive: " + header_path.string());

  const fs::path payload_path = volume_payload_path(path);
  std::ifstream pin(payload_path, std::ios::binary | std::ios::ate);
  if (!pin) throw FormatError("cannot open volume payload: " + payload_path.string());
  const auto bytes = static_cast<std::size_t>(pin.tellg());
  if (bytes != dims.count() * sizeof(float)) {
    throw FormatError("volume payload " + payload_path.string() + " has " + std::to_string(bytes) +
                      " bytes, header requires " + std::to_string(dims.count() * sizeof(float)));
  }
  std::vector<float> data(dims.count());
  pin.seekg(0);
  pin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError("volume payload contains a non-finite value: " + payload_path.string());
  }
  return Volume(dims, voxel_size, std::move(data));
}

void save_volume(const Volume& volume, const fs::path& path) {
  static_assert(std::endian::native == std::endian::little);
  const auto& d = volume.dims();
  const auto& s = volume.voxel_size_mm();
  nlohmann::json header = {{"dims", {d.nx, d.ny, d.nz}},
                           {"voxel_size_mm", {s[0], s[1], s[2]}},
                           {"dtype", "f32le"},
                           {"order", "x-fastest"}};
  const fs::path header_path = volume_header_path(path);
  if (header_path.has_parent_path()) fs::create_directories(header_path.parent_path());
  std::ofstream hout(header_path, std::ios::trunc);
  hout << header.dump() << '\n';
  std::ofstream pout(volume_payload_path(path), std::ios::binary | std::ios::trunc);
  pout.write(reinterpret_cast<const char*>(volume.data().data()),
             static_cast<std::streamsize>(volume.data().size() * sizeof(float)));
  if (!hout || !pout) throw FormatError("failed writing volume: " + path.string());
}

Volume minmax_normalize(const Volume& volume, const Mask& brain_mask) {
  if (brain_mask.empty()) throw DataError("minmax_normalize: brain mask is empty");
  if (brain_mask.dims() != volume.dims()) throw DimensionError("minmax_normalize: mask dims differ from volume dims");
  float lo = volume[brain_mask.indices().front()];
  float hi = lo;
  for (auto i : brain_mask.indices()) {
    lo = std::min(lo, volume[i]);
    hi = std::max(hi, volume[i]);
  }
  Volume out(volume.dims(), volume.voxel_size_mm(), 0.0f);
  if (hi > lo) {
    const double range = static_cast<double>(hi) - static_cast<double>(lo);
    for (auto i : brain_mask.indices()) {
      out[i] = static_cast<float>((static_cast<double>(volume[i]) - lo) / range);
    }
  }
  return out;
}

MultiModalScan normalize_scan(const MultiModalScan& scan, const Mask& brain_mask) {
  return MultiModalScan({minmax_normalize(scan.modality(0), brain_mask), minmax_normalize(scan.modality(1), brain_mask),
                         minmax_normalize(scan.modality(2), brain_mask), minmax_normalize(scan.modality(3), brain_mask)});
}

VoxelVector extract_voxel_vector(const MultiModalScan& scan, const Mask& roi) {
  if (roi.dims() != scan.dims()) throw DimensionError("extract_voxel_vector: ROI dims differ from scan dims");
  VoxelVector out(kVoxelVectorLength, 0.0f);
  const auto idx = roi.indices();
  const std::size_t used = std::min(idx.size(), kVoxelSlots);
  for (std::size_t m = 0; m < kModalityCount; ++m) {
    const Volume& vol = scan.modality(m);
    float* block = out.data() + m * kVoxelSlots;
    for (std::size_t k = 0; k < used; ++k) block[k] = vol[idx[k]];
  }
  return out;
}

}  // namespace idhnet
