#include "idhnet/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "idhnet/errors.hpp"

namespace idhnet {
namespace fs = std::filesystem;

NodeAtlas::NodeAtlas(Volume labels, int region_count) : labels_(std::move(labels)), region_count_(region_count) {
  if (region_count_ < 1) throw FormatError("node atlas needs at least one region");
  voxel_counts_.assign(static_cast<std::size_t>(region_count_), 0);
  for (float v : labels_.data()) {
    if (v != std::floor(v)) throw FormatError("node atlas label " + std::to_string(v) + " is not an integer");
    if (v < 0.0f || v > static_cast<float>(region_count_)) {
      throw FormatError("node atlas label " + std::to_string(static_cast<long>(v)) + " outside 0.." +
                        std::to_string(region_count_));
    }
    if (v > 0.0f) voxel_counts_[static_cast<std::size_t>(v) - 1] += 1;
  }
  for (int r = 1; r <= region_count_; ++r) {
    if (voxel_counts_[r - 1] == 0) throw FormatError("node atlas region " + std::to_string(r) + " has no voxels");
  }
}

Mask NodeAtlas::region_mask(int region) const {
  if (region < 1 || region > region_count_) throw LookupError("no region " + std::to_string(region));
  std::vector<std::uint32_t> idx;
  idx.reserve(voxel_counts_[region - 1]);
  const float label = static_cast<float>(region);
  auto data = labels_.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] == label) idx.push_back(static_cast<std::uint32_t>(i));
  }
  return Mask(labels_.dims(), std::move(idx));
}

Mask NodeAtlas::brain_mask() const { return Mask::from_volume(labels_); }

NodeAtlas load_node_atlas(const fs::path& path, std::optional<int> region_count) {
  Volume labels = load_volume(path);
  int r = 0;
  if (region_count) {
    r = *region_count;
  } else {
    for (float v : labels.data()) r = std::max(r, static_cast<int>(v));
  }
  return NodeAtlas(std::move(labels), r);
}

void TractDensitySet::validate() const {
  for (const auto& subject : subjects) {
    for (const auto& [key, vol] : subject) {
      if (key.first >= key.second) throw FormatError("tract pair keys must satisfy i < j");
      if (vol.dims() != dims) throw DimensionError("tract density volumes must share one grid");
      for (float v : vol.data()) {
        if (v < 0.0f) throw DataError("tract densities must be non-negative");
      }
    }
  }
}

TractDensitySet load_tract_densities(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("density directory not found: " + dir.string());
  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subject_dirs.push_back(entry.path());
  }
  std::sort(subject_dirs.begin(), subject_dirs.end());
  if (subject_dirs.empty()) throw FormatError("density directory has no subject subdirectories: " + dir.string());

  static const std::regex pair_name(R"((\d+)_(\d+)\.json)");
  TractDensitySet set;
  bool have_dims = false;
  for (const auto& sdir : subject_dirs) {
    std::map<EdgeKey, Volume> subject;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(sdir)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      std::smatch m;
      const std::string name = file.filename().string();
      if (!std::regex_match(name, m, pair_name)) continue;
      const int a = std::stoi(m[1]);
      const int b = std::stoi(m[2]);
      if (a == b) throw FormatError("self-pair density file: " + file.string());
      Volume v = load_volume(file);
      if (!have_dims) {
        set.dims = v.dims();
        have_dims = true;
      }
      subject.insert_or_assign(EdgeKey::of(a, b), std::move(v));
    }
    set.subjects.push_back(std::move(subject));
  }
  if (!have_dims) throw FormatError("no density volumes found under " + dir.string());
  set.validate();
  return set;
}

void save_tract_densities(const TractDensitySet& set, const fs::path& dir) {
  for (std::size_t s = 0; s < set.subjects.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "sub-%03zu", s);
    const fs::path sdir = dir / name;
    fs::create_directories(sdir);
    for (const auto& [key, vol] : set.subjects[s]) {
      save_volume(vol, sdir / (std::to_string(key.first) + "_" + std::to_string(key.second)));
    }
  }
}

EdgeAtlas::EdgeAtlas(GridDims dims, std::vector<EdgeKey> edges, std::vector<Mask> masks)
    : dims_(dims), edges_(std::move(edges)), masks_(std::move(masks)) {
  if (edges_.size() != masks_.size()) throw DimensionError("edge atlas: one mask per edge required");
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (edges_[e].first >= edges_[e].second) throw FormatError("edge atlas pairs must satisfy i < j");
    if (e > 0 && !(edges_[e - 1] < edges_[e])) throw FormatError("edge atlas pairs must be sorted and unique");
    if (masks_[e].empty()) throw FormatError("edge atlas mask is empty");
    if (masks_[e].dims() != dims_) throw DimensionError("edge atlas mask dims differ from atlas dims");
  }
}

bool EdgeAtlas::contains(int i, int j) const {
  return std::binary_search(edges_.begin(), edges_.end(), EdgeKey::of(i, j));
}

const Mask& EdgeAtlas::edge_mask(int i, int j) const {
  const EdgeKey key = EdgeKey::of(i, j);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) {
    throw LookupError("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ") not in atlas");
  }
  return masks_[static_cast<std::size_t>(it - edges_.begin())];
}

std::size_t top_voxel_count(std::size_t positive_voxels, double top_fraction) {
  if (positive_voxels == 0) return 0;
  // the small slack absorbs products like 0.05 * 100 landing a hair above 5
  const double raw = top_fraction * static_cast<double>(positive_voxels);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, positive_voxels);
}

EdgeAtlas build_edge_atlas(const TractDensitySet& densities, const EdgeAtlasConfig& config) {
  const std::size_t subject_count = densities.subjects.size();
  if (config.retention_quorum < 1 || static_cast<std::size_t>(config.retention_quorum) > subject_count) {
    throw DataError("retention quorum must lie in 1.." + std::to_string(subject_count));
  }
  if (!(config.top_fraction > 0.0 && config.top_fraction <= 1.0)) {
    throw DataError("top fraction must lie in (0, 1]");
  }
  densities.validate();

  std::map<EdgeKey, int> support;
  for (const auto& subject : densities.subjects) {
    for (const auto& [key, vol] : subject) {
      const bool any = std::any_of(vol.data().begin(), vol.data().end(), [](float v) { return v > 0.0f; });
      support[key] += any ? 1 : 0;
    }
  }

  const std::size_t voxels = densities.dims.count();
  std::vector<EdgeKey> edges;
  std::vector<Mask> masks;
  std::vector<double> samples;
  samples.reserve(subject_count);
  for (const auto& [key, count] : support) {
    if (count < config.retention_quorum) continue;

    std::vector<const Volume*> present;
    for (const auto& subject : densities.subjects) {
      auto it = subject.find(key);
      if (it != subject.end()) present.push_back(&it->second);
    }
    // Per-voxel mean; summing sorted samples makes the result independent
    // of subject order.
    std::vector<std::pair<double, std::uint32_t>> positive;
    for (std::size_t v = 0; v < voxels; ++v) {
      samples.clear();
      for (const Volume* vol : present) {
        if ((*vol)[v] > 0.0f) samples.push_back((*vol)[v]);
      }
      if (samples.empty()) continue;
      std::sort(samples.begin(), samples.end());
      double sum = 0.0;
      for (double s : samples) sum += s;
      positive.emplace_back(sum / static_cast<double>(subject_count), static_cast<std::uint32_t>(v));
    }
    if (positive.empty()) {
      throw Error("internal: kept edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                  ") has an all-zero mean density");
    }

    const std::size_t k = top_voxel_count(positive.size(), config.top_fraction);
    std::vector<double> values(positive.size());
    std::transform(positive.begin(), positive.end(), values.begin(), [](const auto& p) { return p.first; });
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                     std::greater<>());
    const double threshold = values[k - 1];

    std::vector<std::uint32_t> kept;
    for (const auto& [mean, index] : positive) {
      if (mean >= threshold) kept.push_back(index);
    }
    edges.push_back(key);
    masks.emplace_back(densities.dims, std::move(kept));
  }
  if (edges.empty()) throw EmptyAtlasError("no edge reached the retention quorum");
  return EdgeAtlas(densities.dims, std::move(edges), std::move(masks));
}

namespace {

fs::path with_ext(const fs::path& path, const char* ext) {
  fs::path p = path;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  p += ext;
  return p;
}

}  // namespace

void save_edge_atlas(const EdgeAtlas& atlas, const fs::path& path) {
  nlohmann::json index;
  const auto& d = atlas.dims();
  index["dims"] = {d.nx, d.ny, d.nz};
  index["dtype"] = "u32le";
  nlohmann::json edges = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t e = 0; e < atlas.size(); ++e) {
    const auto& mask = atlas.masks()[e];
    edges.push_back({{"i", atlas.edges()[e].first},
                     {"j", atlas.edges()[e].second},
                     {"voxel_count", mask.size()},
                     {"offset", offset}});
    offset += mask.size() * sizeof(std::uint32_t);
  }
  index["edges"] = edges;
  const fs::path json_path = with_ext(path, ".json");
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::ofstream jout(json_path, std::ios::trunc);
  jout << index.dump(1) << '\n';
  std::ofstream bout(with_ext(path, ".bin"), std::ios::binary | std::ios::trunc);
  for (const auto& mask : atlas.masks()) {
    bout.write(reinterpret_cast<const char*>(mask.indices().data()),
               static_cast<std::streamsize>(mask.size() * sizeof(std::uint32_t)));
  }
  if (!jout || !bout) throw FormatError("failed writing edge atlas: " + path.string());
}

EdgeAtlas load_edge_atlas(const fs::path& path) {
  std::ifstream jin(with_ext(path, ".json"));
  if (!jin) throw FormatError("cannot open edge atlas index: " + with_ext(path, ".json").string());
  std::ifstream bin(with_ext(path, ".bin"), std::ios::binary);
  if (!bin) throw FormatError("cannot open edge atlas payload: " + with_ext(path, ".bin").string());
  try {
    const auto index = nlohmann::json::parse(jin);
    const auto d = index.at("dims").get<std::vector<std::size_t>>();
    if (d.size() != 3) throw FormatError("edge atlas dims need 3 entries");
    const GridDims dims{d[0], d[1], d[2]};
    std::vector<EdgeKey> edges;
    std::vector<Mask> masks;
    for (const auto& e : index.at("edges")) {
      const auto count = e.at("voxel_count").get<std::size_t>();
      std::vector<std::uint32_t> idx(count);
      bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
      bin.read(reinterpret_cast<char*>(idx.data()), static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
      if (!bin) throw FormatError("truncated edge atlas payload");
      edges.push_back({e.at("i").get<int>(), e.at("j").get<int>()});
      masks.emplace_back(dims, std::move(idx));
    }
    return EdgeAtlas(dims, std::move(edges), std::move(masks));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed edge atlas index: " + std::string(e.what()));
  }
}

}  // namespace idhnet
