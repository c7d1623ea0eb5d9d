#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace idhnet {

struct GridDims {
  std::size_t nx = 0, ny = 0, nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  /// Flat index, x fastest.
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
  std::array<std::size_t, 3> coords(std::size_t flat) const {
    return {flat % nx, (flat / nx) % ny, flat / (nx * ny)};
  }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// MNI152 2 mm grid.
inline constexpr GridDims kMniGrid{91, 109, 91};

/// 3D scalar grid stored as float32, x-fastest.
class Volume {
 public:
  Volume() = default;
  Volume(GridDims dims, std::array<double, 3> voxel_size_mm, std::vector<float> data);
  Volume(GridDims dims, std::array<double, 3> voxel_size_mm = {2.0, 2.0, 2.0}, float fill = 0.0f);

  const GridDims& dims() const { return dims_; }
  const std::array<double, 3>& voxel_size_mm() const { return voxel_size_mm_; }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  GridDims dims_;
  std::array<double, 3> voxel_size_mm_{2.0, 2.0, 2.0};
  std::vector<float> data_;
};

/// Set of voxels on a grid, stored as strictly increasing flat indices.
class Mask {
 public:
  Mask() = default;
  /// Sorts and deduplicates; every index must be inside the grid.
  Mask(GridDims dims, std::vector<std::uint32_t> indices);
  /// Voxels with a nonzero value.
  static Mask from_volume(const Volume& volume);

  const GridDims& dims() const { return dims_; }
  std::span<const std::uint32_t> indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(std::uint32_t flat) const;

  /// Binary volume (1 inside, 0 outside).
  Volume to_volume(std::array<double, 3> voxel_size_mm = {2.0, 2.0, 2.0}) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  GridDims dims_;
  std::vector<std::uint32_t> indices_;
};

enum class Modality : std::size_t { T1 = 0, T1PostContrast = 1, T2 = 2, Flair = 3 };
inline constexpr std::size_t kModalityCount = 4;
inline constexpr std::array<const char*, kModalityCount> kModalityNames = {"t1", "t1c", "t2", "flair"};

/// The four co-registered modalities of one subject, in the fixed order
/// T1, post-contrast T1, T2, FLAIR.
class MultiModalScan {
 public:
  explicit MultiModalScan(std::array<Volume, kModalityCount> modalities);

  const Volume& modality(std::size_t m) const { return modalities_[m]; }
  const Volume& modality(Modality m) const { return modalities_[static_cast<std::size_t>(m)]; }
  const GridDims& dims() const { return modalities_[0].dims(); }

 private:
  std::array<Volume, kModalityCount> modalities_;
};

inline constexpr std::size_t kVoxelSlots = 2500;
inline constexpr std::size_t kVoxelVectorLength = kVoxelSlots * kModalityCount;

/// Fixed-length voxel vector: 4 blocks of 2500 slots, one per modality.
using VoxelVector = std::vector<float>;

/// Loads a volume from "<stem>.json" + "<stem>.raw". The path may name the
/// stem or either file.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);

/// Header and payload paths for a volume stem.
std::filesystem::path volume_header_path(const std::filesystem::path& path);
std::filesystem::path volume_payload_path(const std::filesystem::path& path);

/// Linear map of in-mask values onto [0, 1]; voxels outside the mask become 0.
/// A constant in-mask range maps to 0.
Volume minmax_normalize(const Volume& volume, const Mask& brain_mask);
MultiModalScan normalize_scan(const MultiModalScan& scan, const Mask& brain_mask);

/// Modality values at the ROI voxels in ascending flat-index order, at most
/// 2500 per modality, zero padded.
VoxelVector extract_voxel_vector(const MultiModalScan& scan, const Mask& roi);

}  // namespace idhnet
