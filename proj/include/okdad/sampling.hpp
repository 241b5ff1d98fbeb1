#pragma once

#include <cstdint>
#include <vector>

#include "okdad/rng.hpp"
#include "okdad/synthvid.hpp"
#include "okdad/tensor.hpp"

namespace okdad::sampling {

struct OfflineSampleConfig {
  int t_off = 15;
  double r_min = 0.025;
  double crop_margin = 0.1;
  int out_height = 20;
  int out_width = 20;

  void validate() const;
};

struct OnlineChunkConfig {
  int stride = 3;  // s: keep one of every s frames
  int delta = 5;   // frames per block

  void validate() const;
};

struct CropResult {
  Tensor frame;              // [out_h, out_w], values in [0,1]
  bool used_fallback = false;  // no valid keypoint -> full frame
};

/// Crop one frame to the keypoint bounding box (min/max over joints),
/// expanded by `margin` times the box span per side, clipped to the frame,
/// then bilinearly resized to out_h x out_w. The box is recomputed
/// independently per frame.
CropResult crop_frame(const uint8_t* frame, int H, int W,
                      const double* keypoints, int num_joints, double margin,
                      int out_h, int out_w);

/// N_partial = max(1, floor(r*N)). r outside (0,1] is an input error.
int truncate_ratio(int N, double r);

/// Subwindow boundaries: the first n_partial frames split into t_off
/// contiguous windows with sizes differing by at most one. Returns the chosen
/// frame index per window (center in deterministic mode, uniform draw
/// otherwise). If n_partial < t_off the result is just 0..n_partial-1 and the
/// caller pads.
std::vector<int> offline_indices(int n_partial, int t_off, rng::Stream* rs);

/// Offline sample: crop the selected frames of the first n_partial, stack to
/// [t_off, out_h, out_w], appending black frames when n_partial < t_off.
/// Deterministic when rs == nullptr.
Tensor sample_offline(const synthvid::Video& video, int n_partial,
                      const OfflineSampleConfig& cfg, rng::Stream* rs);

/// One block of the online stream: delta cropped frames [delta, out_h, out_w],
/// black-padded at the tail.
struct Block {
  Tensor frames;
  int valid = 0;  // real (non-padding) frames in this block
};

/// Online chunking over the first n_partial original frames: keep original
/// indices 0, s, 2s, ... < n_partial, crop each, group into blocks of delta,
/// pad the last block with black frames. Block t (1-based) corresponds to the
/// original-frame horizon t*s*delta.
std::vector<Block> chunk_online(const synthvid::Video& video,
                                const OnlineChunkConfig& chunk,
                                const OfflineSampleConfig& crop,
                                int n_partial);

inline std::vector<Block> chunk_online(const synthvid::Video& video,
                                       const OnlineChunkConfig& chunk,
                                       const OfflineSampleConfig& crop) {
  return chunk_online(video, chunk, crop, video.num_frames());
}

/// ceil(n_partial / s): how many strided frames a prefix holds.
int strided_count(int n_partial, int stride);
/// ceil(count / delta): blocks needed for `count` strided frames.
int num_blocks(int count, int delta);

}  // namespace okdad::sampling
