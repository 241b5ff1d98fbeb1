#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "okdad/synthvid.hpp"

using namespace okdad;
using namespace okdad::synthvid;

namespace {
GeneratorConfig small_config() {
  GeneratorConfig c;
  c.num_classes = 10;
  c.frame_height = 32;
  c.frame_width = 32;
  c.min_clip_len = 12;
  c.max_clip_len = 24;
  c.gap_len_min = 6;
  c.gap_len_max = 12;
  c.seed = 99;
  return c;
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("okdad_test_") + tag);
  std::filesystem::remove_all(p);
  return p;
}
}  // namespace

TEST_CASE("gen_clip is deterministic and in bounds") {
  auto cfg = small_config();
  auto a = gen_clip(cfg, 3, 7);
  auto b = gen_clip(cfg, 3, 7);
  CHECK(a.video.frames == b.video.frames);
  CHECK(a.video.keypoints == b.video.keypoints);
  CHECK(a.label == 3);
  const int n = a.video.num_frames();
  CHECK(n >= cfg.min_clip_len);
  CHECK(n <= cfg.max_clip_len);
  for (double v : a.video.keypoints) CHECK(v >= 0.0);
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < a.video.joints; ++j) {
      CHECK(a.video.keypoints_at(t)[2 * j] <= cfg.frame_height - 1);
      CHECK(a.video.keypoints_at(t)[2 * j + 1] <= cfg.frame_width - 1);
    }
}

TEST_CASE("different classes render differently") {
  auto cfg = small_config();
  auto a = gen_clip(cfg, 0, 1);
  auto b = gen_clip(cfg, 1, 1);
  const int n = std::min(a.video.num_frames(), b.video.num_frames());
  double diff = 0.0;
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < cfg.frame_height * cfg.frame_width; ++i)
      diff += std::abs((double)a.video.frame(t)[i] - b.video.frame(t)[i]);
  diff /= n * cfg.frame_height * cfg.frame_width * 255.0;
  CHECK(diff > 0.0);
}

TEST_CASE("gen_clip rejects bad class") {
  auto cfg = small_config();
  CHECK_THROWS_AS((void)gen_clip(cfg, cfg.num_classes, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)gen_clip(cfg, -1, 0), std::invalid_argument);
}

TEST_CASE("gen_sequence intervals are sorted, non-overlapping, in range") {
  auto cfg = small_config();
  auto seq = gen_sequence(cfg, 3, 11);
  REQUIRE(seq.intervals.size() == 3);
  const int N = seq.video.num_frames();
  int prev_end = 0;
  for (const auto& iv : seq.intervals) {
    CHECK(iv.start_frame >= prev_end);
    CHECK(iv.start_frame < iv.end_frame);
    CHECK(iv.end_frame <= N);
    CHECK(iv.label >= 0);
    CHECK(iv.label < cfg.num_classes);
    prev_end = iv.end_frame;
  }
  // every frame covered by zero or one interval
  std::vector<int> cover(N, 0);
  for (const auto& iv : seq.intervals)
    for (int t = iv.start_frame; t < iv.end_frame; ++t) cover[t]++;
  for (int c : cover) CHECK(c <= 1);
}

TEST_CASE("gap frames are static, action frames move") {
  auto cfg = small_config();
  cfg.intensity_noise_std = 0.0;  // isolate motion
  auto seq = gen_sequence(cfg, 1, 5);
  const auto& iv = seq.intervals[0];
  const int hw = cfg.frame_height * cfg.frame_width;
  auto frame_diff = [&](int t0, int t1) {
    double d = 0;
    for (int i = 0; i < hw; ++i)
      d += std::abs((double)seq.video.frame(t0)[i] - seq.video.frame(t1)[i]);
    return d / hw;
  };
  if (iv.start_frame >= 2) CHECK(frame_diff(0, 1) == doctest::Approx(0.0));
  CHECK(frame_diff(iv.start_frame, iv.start_frame + 3) > 0.1);
}

TEST_CASE("dataset round-trips bit-identically") {
  auto cfg = small_config();
  auto ds = make_clip_dataset(cfg, 20, 5);
  CHECK(ds.splits.train.size() + ds.splits.val.size() == 20);
  CHECK(ds.splits.test.size() == 5);
  // splits partition all items (fractions sum to 1)
  std::vector<char> seen(ds.items.size(), 0);
  for (int i : ds.splits.train) seen[i]++;
  for (int i : ds.splits.val) seen[i]++;
  for (int i : ds.splits.test) seen[i]++;
  for (char c : seen) CHECK(c == 1);

  auto dir = temp_dir("clips");
  write_dataset(ds, dir.string());
  auto ds2 = load_clip_dataset(dir.string());
  REQUIRE(ds2.items.size() == ds.items.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    CHECK(ds2.items[i].label == ds.items[i].label);
    CHECK(ds2.items[i].video.frames == ds.items[i].video.frames);
    CHECK(ds2.items[i].video.keypoints == ds.items[i].video.keypoints);
  }
  CHECK(dataset_kind(dir.string()) == "clips");
  CHECK(dataset_hash(dir.string()) == dataset_hash(dir.string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sequence dataset round-trip keeps intervals") {
  auto cfg = small_config();
  auto ds = make_sequence_dataset(cfg, 4, 2, 2);
  auto dir = temp_dir("seqs");
  write_dataset(ds, dir.string());
  auto ds2 = load_sequence_dataset(dir.string());
  REQUIRE(ds2.items.size() == ds.items.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    REQUIRE(ds2.items[i].intervals.size() == ds.items[i].intervals.size());
    for (size_t k = 0; k < ds.items[i].intervals.size(); ++k) {
      CHECK(ds2.items[i].intervals[k].start_frame ==
            ds.items[i].intervals[k].start_frame);
      CHECK(ds2.items[i].intervals[k].end_frame ==
            ds.items[i].intervals[k].end_frame);
      CHECK(ds2.items[i].intervals[k].label == ds.items[i].intervals[k].label);
    }
    CHECK(ds2.items[i].video.frames == ds.items[i].video.frames);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("loading a missing or mismatched dataset fails with the file name") {
  auto dir = temp_dir("missing");
  CHECK_THROWS_WITH_AS((void)load_clip_dataset(dir.string()),
                       doctest::Contains("manifest"), std::runtime_error);
  auto cfg = small_config();
  auto ds = make_clip_dataset(cfg, 4, 2);
  write_dataset(ds, dir.string());
  CHECK_THROWS_AS((void)load_sequence_dataset(dir.string()),
                  std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pixel-mean nearest-centroid beats chance") {
  auto cfg = small_config();
  cfg.num_classes = 6;
  auto ds = make_clip_dataset(cfg, 120, 48);
  const int hw = cfg.frame_height * cfg.frame_width;
  auto mean_image = [&](const LabeledClip& c) {
    std::vector<double> m(hw, 0.0);
    const int n = c.video.num_frames();
    for (int t = 0; t < n; ++t)
      for (int i = 0; i < hw; ++i) m[i] += c.video.frame(t)[i] / 255.0;
    for (auto& v : m) v /= n;
    return m;
  };
  std::vector<std::vector<double>> centroid(cfg.num_classes,
                                            std::vector<double>(hw, 0.0));
  std::vector<int> counts(cfg.num_classes, 0);
  for (int i : ds.splits.train) {
    auto m = mean_image(ds.items[i]);
    for (int k = 0; k < hw; ++k) centroid[ds.items[i].label][k] += m[k];
    counts[ds.items[i].label]++;
  }
  for (int c = 0; c < cfg.num_classes; ++c)
    for (int k = 0; k < hw; ++k) centroid[c][k] /= std::max(1, counts[c]);
  int correct = 0, total = 0;
  for (int i : ds.splits.test) {
    auto m = mean_image(ds.items[i]);
    int best = -1;
    double bestd = 1e300;
    for (int c = 0; c < cfg.num_classes; ++c) {
      double d = 0;
      for (int k = 0; k < hw; ++k)
        d += (m[k] - centroid[c][k]) * (m[k] - centroid[c][k]);
      if (d < bestd) {
        bestd = d;
        best = c;
      }
    }
    correct += best == ds.items[i].label;
    total++;
  }
  const double acc = (double)correct / total;
  CHECK(acc > 1.0 / cfg.num_classes);
}
