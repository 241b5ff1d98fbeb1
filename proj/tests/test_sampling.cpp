#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "okdad/sampling.hpp"
#include "okdad/synthvid.hpp"

using namespace okdad;
using namespace okdad::sampling;

namespace {
synthvid::Video flat_video(int N, int H, int W, uint8_t base = 0) {
  synthvid::Video v;
  v.height = H;
  v.width = W;
  v.joints = 2;
  v.frames.resize((size_t)N * H * W);
  v.keypoints.resize((size_t)N * 2 * 2);
  for (int t = 0; t < N; ++t) {
    for (int i = 0; i < H * W; ++i)
      v.frames[(size_t)t * H * W + i] = (uint8_t)((base + t) % 256);
    // keypoints spanning the full frame
    double* kp = v.keypoints.data() + (size_t)t * 4;
    kp[0] = 0;
    kp[1] = 0;
    kp[2] = H - 1;
    kp[3] = W - 1;
  }
  return v;
}
}  // namespace

TEST_CASE("truncate_ratio matches the clamped floor rule") {
  CHECK(truncate_ratio(100, 0.8) == 80);
  CHECK(truncate_ratio(57, 1.0) == 57);
  CHECK(truncate_ratio(7, 0.025) == 1);  // floor gives 0, clamp applies
  CHECK(truncate_ratio(10, 0.3) == 3);
  CHECK_THROWS_AS((void)truncate_ratio(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)truncate_ratio(10, -0.5), std::invalid_argument);
  CHECK_THROWS_AS((void)truncate_ratio(10, 1.5), std::invalid_argument);
}

TEST_CASE("truncate_ratio is monotone and never zero") {
  for (int N : {1, 3, 17, 140}) {
    int prev = 1;
    for (double r = 0.01; r <= 1.0; r += 0.01) {
      int n = truncate_ratio(N, r);
      CHECK(n >= 1);
      CHECK(n >= prev);
      CHECK(n <= N);
      prev = n;
    }
  }
  // monotone in N as well
  for (double r : {0.1, 0.33, 0.77}) {
    int prev = 0;
    for (int N = 1; N < 60; ++N) {
      int n = truncate_ratio(N, r);
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("crop_frame box arithmetic") {
  auto v = flat_video(1, 40, 50);
  // two keypoints at (10,10) and (20,30), margin 0: box rows 10..20, cols
  // 10..30. Check that the resampled content comes from that box by using a
  // gradient image.
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 50; ++x) v.frames[(size_t)y * 50 + x] = (uint8_t)(y * 5);
  double kp[4] = {10, 10, 20, 30};
  auto res = crop_frame(v.frame(0), 40, 50, kp, 2, 0.0, 11, 21);
  CHECK_FALSE(res.used_fallback);
  // with out dims equal to the box pixel count, resampling is the identity
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 21; ++j)
      CHECK(res.frame[(int64_t)i * 21 + j] ==
            doctest::Approx((10 + i) * 5 / 255.0).epsilon(1e-9));
}

TEST_CASE("crop_frame margin expands the box and is clipped") {
  auto v = flat_video(1, 40, 50);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 50; ++x) v.frames[(size_t)y * 50 + x] = (uint8_t)(y * 5);
  // box rows 10..30 (span 20), margin 0.1 -> 2 px per side -> rows 8..32
  double kp[4] = {10, 5, 30, 25};
  auto res = crop_frame(v.frame(0), 40, 50, kp, 2, 0.1, 25, 25);
  CHECK(res.frame[12] == doctest::Approx(8 * 5 / 255.0).epsilon(1e-9));
  // independent arithmetic check of the sampled top row: ymin = 8
  const double bh = (32.0 - 8.0) + 1.0;
  const double y0 = 8.0 + 0.5 * bh / 25.0 - 0.5;
  const double expect = (std::floor(y0) * 5 * (1 - (y0 - std::floor(y0))) +
                         (std::floor(y0) + 1) * 5 * (y0 - std::floor(y0))) /
                        255.0;
  CHECK(res.frame[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("crop_frame full-span keypoints with matching dims is identity") {
  auto v = flat_video(1, 24, 24);
  for (int i = 0; i < 24 * 24; ++i) v.frames[i] = (uint8_t)(i % 251);
  auto res = crop_frame(v.frame(0), 24, 24, v.keypoints_at(0), 2, 0.0, 24, 24);
  for (int i = 0; i < 24 * 24; ++i)
    CHECK(res.frame[i] == doctest::Approx(v.frames[i] / 255.0).epsilon(1e-12));
}

TEST_CASE("crop_frame falls back to the full frame without valid keypoints") {
  auto v = flat_video(1, 20, 20);
  double kp[4] = {-5, -5, 100, 100};
  auto res = crop_frame(v.frame(0), 20, 20, kp, 2, 0.1, 10, 10);
  CHECK(res.used_fallback);
}

TEST_CASE("offline_indices partitions into near-even subwindows") {
  // N_partial=30, T_off=15: all subwindows have size 2, indices increasing
  auto idx = offline_indices(30, 15, nullptr);
  REQUIRE(idx.size() == 15);
  for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] > idx[i - 1]);
  for (size_t w = 0; w < idx.size(); ++w) {
    CHECK(idx[w] >= (int)(w * 2));
    CHECK(idx[w] < (int)(w * 2 + 2));
  }
  // N_partial == T_off: exactly 0..T_off-1
  auto idx2 = offline_indices(15, 15, nullptr);
  for (int i = 0; i < 15; ++i) CHECK(idx2[i] == i);
  // random mode stays inside subwindows
  rng::Stream rs(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto idx3 = offline_indices(47, 15, &rs);
    for (size_t w = 0; w < idx3.size(); ++w) {
      CHECK(idx3[w] >= (int)((w * 47) / 15));
      CHECK(idx3[w] < (int)(((w + 1) * 47) / 15));
    }
  }
}

TEST_CASE("sample_offline pads with black frames") {
  auto v = flat_video(10, 20, 20, 100);
  OfflineSampleConfig cfg;
  cfg.t_off = 15;
  cfg.out_height = 8;
  cfg.out_width = 8;
  auto stack = sample_offline(v, 10, cfg, nullptr);
  CHECK(stack.shape == std::vector<int>{15, 8, 8});
  // first 10 frames are real (bright), last 5 are black
  for (int t = 0; t < 10; ++t)
    CHECK(stack[(int64_t)t * 64] > 0.0);
  for (int t = 10; t < 15; ++t)
    for (int i = 0; i < 64; ++i) CHECK(stack[(int64_t)t * 64 + i] == 0.0);
  // deterministic mode is a pure function
  auto stack2 = sample_offline(v, 10, cfg, nullptr);
  CHECK(stack.data == stack2.data);
}

TEST_CASE("chunk_online block arithmetic and padding") {
  OnlineChunkConfig chunk;
  chunk.stride = 1;
  chunk.delta = 5;
  OfflineSampleConfig crop;
  crop.out_height = 8;
  crop.out_width = 8;

  // 98 strided frames with delta=5 -> 20 blocks
  auto v = flat_video(98, 20, 20, 10);
  auto blocks = chunk_online(v, chunk, crop);
  CHECK(blocks.size() == 20);
  CHECK(blocks.back().valid == 3);

  // N = s*delta exactly -> one full block, no padding
  chunk.stride = 3;
  auto v2 = flat_video(15, 20, 20, 10);
  auto blocks2 = chunk_online(v2, chunk, crop);
  CHECK(blocks2.size() == 1);
  CHECK(blocks2[0].valid == 5);

  // 7 strided frames, delta 5 -> 2 blocks, second has 3 black frames
  chunk.stride = 1;
  auto v3 = flat_video(7, 20, 20, 10);
  auto blocks3 = chunk_online(v3, chunk, crop);
  CHECK(blocks3.size() == 2);
  CHECK(blocks3[1].valid == 2);
  for (int t = 2; t < 5; ++t)
    for (int i = 0; i < 64; ++i)
      CHECK(blocks3[1].frames[(int64_t)t * 64 + i] == 0.0);
}

TEST_CASE("concatenated blocks reproduce the strided crop list") {
  OnlineChunkConfig chunk;
  chunk.stride = 3;
  chunk.delta = 4;
  OfflineSampleConfig crop;
  crop.out_height = 6;
  crop.out_width = 6;
  auto v = flat_video(33, 20, 20, 7);
  auto blocks = chunk_online(v, chunk, crop);
  const int count = strided_count(33, 3);
  CHECK((int)blocks.size() == num_blocks(count, 4));
  int pos = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.valid; ++i, ++pos) {
      const int src = pos * chunk.stride;
      auto direct =
          crop_frame(v.frame(src), v.height, v.width, v.keypoints_at(src),
                     v.joints, crop.crop_margin, 6, 6);
      for (int k = 0; k < 36; ++k)
        CHECK(b.frames[(int64_t)i * 36 + k] == direct.frame[k]);
    }
  }
  CHECK(pos == count);
}
