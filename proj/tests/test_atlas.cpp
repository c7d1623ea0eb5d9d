#include <algorithm>

#include <gtest/gtest.h>

#include "idhnet/atlas.hpp"
#include "idhnet/errors.hpp"
#include "test_support.hpp"

using namespace idhnet;
using idhnet::testing::brute_force_atlas;
using idhnet::testing::random_density_set;
using idhnet::testing::TempDir;

namespace {

std::vector<std::uint32_t> as_vector(const Mask& m) { return {m.indices().begin(), m.indices().end()}; }

TractDensitySet single_edge_set(const Volume& density, std::size_t subjects) {
  TractDensitySet s;
  s.dims = density.dims();
  s.subjects.resize(subjects);
  for (auto& subject : s.subjects) subject.emplace(EdgeKey{1, 2}, density);
  return s;
}

}  // namespace

TEST(NodeAtlas, MinimalTwoRegionAtlas) {
  Volume v({3, 1, 1});
  v[1] = 1;
  v[2] = 2;
  NodeAtlas a(v, 2);
  EXPECT_EQ(a.region_count(), 2);
  EXPECT_EQ(a.voxel_counts(), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(a.brain_mask().size(), 2u);
  EXPECT_EQ(as_vector(a.region_mask(2)), (std::vector<std::uint32_t>{2}));
}

TEST(NodeAtlas, LabelAboveRegionCountIsFormatError) {
  Volume v({2, 1, 1});
  v[0] = 91;
  v[1] = 1;
  EXPECT_THROW(NodeAtlas(v, 90), FormatError);
}

TEST(NodeAtlas, EmptyRegionIsFormatError) {
  Volume v({5, 1, 1});
  for (int i = 0; i < 4; ++i) v[i] = static_cast<float>(i + 1);
  EXPECT_THROW(NodeAtlas(v, 5), FormatError);
}

TEST(NodeAtlas, NonIntegralLabelIsFormatError) {
  Volume v({2, 1, 1});
  v[0] = 1.5f;
  EXPECT_THROW(NodeAtlas(v, 2), FormatError);
}

TEST(NodeAtlas, LoadInfersRegionCount) {
  TempDir dir("atlas");
  Volume v({4, 1, 1});
  v[0] = 1;
  v[1] = 3;
  v[2] = 2;
  save_volume(v, dir / "labels");
  EXPECT_EQ(load_node_atlas(dir / "labels").region_count(), 3);
  EXPECT_THROW(load_node_atlas(dir / "labels", 2), FormatError);
}

TEST(TopVoxels, CeilOfFraction) {
  EXPECT_EQ(top_voxel_count(100, 0.05), 5u);
  EXPECT_EQ(top_voxel_count(101, 0.05), 6u);
  EXPECT_EQ(top_voxel_count(10, 0.3), 3u);
  EXPECT_EQ(top_voxel_count(3, 0.05), 1u);
  EXPECT_EQ(top_voxel_count(7, 1.0), 7u);
}

TEST(EdgeAtlas, HundredDistinctValuesKeepTopFive) {
  Volume d({10, 10, 1});
  Rng rng(2);
  std::vector<float> values(100);
  for (int i = 0; i < 100; ++i) values[i] = static_cast<float>(i + 1);
  rng.shuffle(std::span<float>(values));
  for (int i = 0; i < 100; ++i) d[i] = values[i];
  EdgeAtlas a = build_edge_atlas(single_edge_set(d, 10), {9, 0.05});
  ASSERT_EQ(a.size(), 1u);
  const Mask& m = a.edge_mask(1, 2);
  ASSERT_EQ(m.size(), 5u);
  for (auto idx : m.indices()) EXPECT_GE(d[idx], 96.0f);
}

TEST(EdgeAtlas, TiesAtThresholdAreKept) {
  Volume d({10, 1, 1});
  const float vals[10] = {9, 8, 8, 8, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < 10; ++i) d[i] = vals[i];
  EdgeAtlas a = build_edge_atlas(single_edge_set(d, 10), {9, 0.2});
  EXPECT_EQ(a.edge_mask(1, 2).size(), 4u);
}

TEST(EdgeAtlas, PairWithoutTractsIsAbsent) {
  TractDensitySet s;
  s.dims = {3, 1, 1};
  s.subjects.resize(10);
  Volume d(s.dims);
  d[0] = 1;
  for (auto& subject : s.subjects) {
    subject.emplace(EdgeKey{1, 2}, d);
    subject.emplace(EdgeKey{1, 3}, Volume(s.dims));
  }
  EdgeAtlas a = build_edge_atlas(s);
  EXPECT_TRUE(a.contains(1, 2));
  EXPECT_FALSE(a.contains(1, 3));
}

TEST(EdgeAtlas, QuorumCountsSubjectsWithTracts) {
  TractDensitySet s;
  s.dims = {3, 1, 1};
  s.subjects.resize(10);
  Volume d(s.dims);
  d[1] = 2;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i >= 1) s.subjects[i].emplace(EdgeKey{1, 2}, d);  // 9 of 10
    if (i >= 2) s.subjects[i].emplace(EdgeKey{2, 3}, d);  // 8 of 10
  }
  EdgeAtlas a = build_edge_atlas(s, {9, 0.05});
  EXPECT_EQ(a.edges(), (std::vector<EdgeKey>{{1, 2}}));
  EXPECT_EQ(build_edge_atlas(s, {8, 0.05}).size(), 2u);
}

TEST(EdgeAtlas, NoSurvivorsIsEmptyAtlasError) {
  TractDensitySet s;
  s.dims = {2, 1, 1};
  s.subjects.resize(10);
  Volume d(s.dims);
  d[0] = 1;
  s.subjects[0].emplace(EdgeKey{1, 2}, d);
  EXPECT_THROW(build_edge_atlas(s), EmptyAtlasError);
}

TEST(EdgeAtlas, InvalidConfigIsRejected) {
  Rng rng(1);
  auto s = random_density_set(rng, 3, 3, {3, 3, 1});
  EXPECT_ANY_THROW(build_edge_atlas(s, {4, 0.05}));
  EXPECT_ANY_THROW(build_edge_atlas(s, {2, 0.0}));
  EXPECT_ANY_THROW(build_edge_atlas(s, {2, 1.5}));
}

TEST(EdgeAtlas, MaskLookupIsSymmetric) {
  Rng rng(5);
  EdgeAtlas a = build_edge_atlas(random_density_set(rng, 10, 5, {4, 4, 4}, 1.0), {9, 0.1});
  ASSERT_TRUE(a.contains(3, 4));
  EXPECT_EQ(a.edge_mask(3, 4), a.edge_mask(4, 3));
  for (const auto& m : a.masks()) EXPECT_GE(m.size(), 1u);
}

TEST(EdgeAtlas, AbsentPairIsLookupError) {
  Volume d({3, 1, 1});
  d[0] = 1;
  TractDensitySet s;
  s.dims = d.dims();
  s.subjects.resize(10);
  for (auto& subject : s.subjects) subject.emplace(EdgeKey{2, 3}, d);
  EdgeAtlas a = build_edge_atlas(s);
  EXPECT_THROW(a.edge_mask(1, 2), LookupError);
}

TEST(EdgeAtlas, MatchesBruteForceOnRandomSets) {
  Rng rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t subjects = 4 + rng.below(7);
    const int quorum = 1 + static_cast<int>(rng.below(subjects));
    const double fraction = std::vector<double>{0.05, 0.1, 0.2, 0.3, 0.5, 1.0}[rng.below(6)];
    auto set = random_density_set(rng, subjects, 4, {4, 3, 3}, 0.7);
    auto expected = brute_force_atlas(set, quorum, fraction);
    if (expected.empty()) {
      EXPECT_THROW(build_edge_atlas(set, {quorum, fraction}), EmptyAtlasError);
      continue;
    }
    EdgeAtlas got = build_edge_atlas(set, {quorum, fraction});
    ASSERT_EQ(got.size(), expected.size()) << "trial " << trial;
    for (std::size_t e = 0; e < got.size(); ++e) {
      ASSERT_TRUE(expected.count(got.edges()[e]));
      EXPECT_EQ(as_vector(got.masks()[e]), expected.at(got.edges()[e])) << "trial " << trial;
    }
  }
}

TEST(EdgeAtlas, InvariantToSubjectOrder) {
  Rng rng(8);
  auto set = random_density_set(rng, 10, 5, {4, 4, 2});
  auto shuffled = set;
  rng.shuffle(std::span(shuffled.subjects));
  EdgeAtlas a = build_edge_atlas(set, {8, 0.1}), b = build_edge_atlas(shuffled, {8, 0.1});
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.masks(), b.masks());
}

TEST(EdgeAtlas, LargerFractionNeverShrinksMasks) {
  Rng rng(9);
  auto set = random_density_set(rng, 10, 5, {5, 4, 3}, 1.0);
  EdgeAtlas prev = build_edge_atlas(set, {10, 0.02});
  for (double f : {0.05, 0.1, 0.25, 0.5, 1.0}) {
    EdgeAtlas next = build_edge_atlas(set, {10, f});
    ASSERT_EQ(prev.edges(), next.edges());
    for (std::size_t e = 0; e < next.size(); ++e) {
      auto small = as_vector(prev.masks()[e]), big = as_vector(next.masks()[e]);
      EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
    prev = next;
  }
}

TEST(EdgeAtlasIo, RoundTrip) {
  TempDir dir("atlas");
  Rng rng(3);
  EdgeAtlas a = build_edge_atlas(random_density_set(rng, 10, 4, {4, 4, 4}, 1.0), {9, 0.1});
  save_edge_atlas(a, dir / "edges");
  EdgeAtlas b = load_edge_atlas(dir / "edges");
  EXPECT_EQ(a.dims(), b.dims());
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.masks(), b.masks());
}

TEST(TractDensityIo, RoundTrip) {
  TempDir dir("atlas");
  Rng rng(4);
  auto set = random_density_set(rng, 3, 3, {3, 3, 3});
  save_tract_densities(set, dir / "densities");
  auto back = load_tract_densities(dir / "densities");
  ASSERT_EQ(back.subjects.size(), set.subjects.size());
  for (std::size_t s = 0; s < set.subjects.size(); ++s) EXPECT_EQ(back.subjects[s], set.subjects[s]);
}

TEST(TractDensityIo, MissingDirectoryIsFormatError) {
  TempDir dir("atlas");
  EXPECT_THROW(load_tract_densities(dir / "nope"), FormatError);
}
