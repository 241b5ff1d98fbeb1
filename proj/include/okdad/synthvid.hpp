#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace okdad::synthvid {

struct GeneratorConfig {
  int num_classes = 10;
  int frame_height = 36;
  int frame_width = 36;
  int min_clip_len = 30;
  int max_clip_len = 60;
  int gap_len_min = 24;
  int gap_len_max = 60;
  int actors_per_clip = 1;
  double intensity_noise_std = 0.03;
  uint64_t seed = 0;

  void validate() const;
};

/// Grayscale video with per-frame keypoints. Pixels are stored 8-bit and
/// exposed in [0,1]; keypoints are (row, col) pixel coordinates, J per frame.
struct Video {
  int height = 0;
  int width = 0;
  int joints = 0;
  std::vector<uint8_t> frames;    // [N * H * W]
  std::vector<double> keypoints;  // [N * J * 2]

  int num_frames() const {
    return height * width == 0
               ? 0
               : (int)(frames.size() / ((size_t)height * width));
  }
  const uint8_t* frame(int t) const {
    return frames.data() + (size_t)t * height * width;
  }
  const double* keypoints_at(int t) const {
    return keypoints.data() + (size_t)t * joints * 2;
  }
};

struct LabeledClip {
  Video video;
  int label = 0;
};

/// Half-open frame interval [start_frame, end_frame) with a class label.
struct ActionInterval {
  int start_frame = 0;
  int end_frame = 0;
  int label = 0;
};

struct LongSequence {
  Video video;
  std::vector<ActionInterval> intervals;
};

/// Number of keypoints tracked per actor.
inline constexpr int kJointsPerActor = 5;

/// Generate one clip of the given class. Bit-identical for identical
/// (config, class_id, seed) on any platform.
LabeledClip gen_clip(const GeneratorConfig& config, int class_id,
                     uint64_t seed);

/// Generate a long multi-action sequence: actions with idle gaps (frozen
/// actor) before, between and after them. Intervals mark action extents.
LongSequence gen_sequence(const GeneratorConfig& config, int num_actions,
                          uint64_t seed);

/// Copy of frames/keypoints for the half-open frame range [start, end).
Video slice_video(const Video& v, int start, int end);

struct DatasetSplits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

struct ClipDataset {
  GeneratorConfig config;
  std::vector<LabeledClip> items;
  DatasetSplits splits;
};

struct SequenceDataset {
  GeneratorConfig config;
  std::vector<LongSequence> items;
  DatasetSplits splits;
};

/// Generate a balanced clip dataset (item i has class i mod C) and split it:
/// `num_test` items go to test, 5% of the remaining training items to val.
ClipDataset make_clip_dataset(const GeneratorConfig& config, int num_train,
                              int num_test);
SequenceDataset make_sequence_dataset(const GeneratorConfig& config,
                                      int num_train, int num_test,
                                      int actions_per_sequence);

// Directory layout: manifest.json plus one container file per item under
// items/. The manifest schema is documented in docs/dataset_format.md.
void write_dataset(const ClipDataset& ds, const std::string& dir);
void write_dataset(const SequenceDataset& ds, const std::string& dir);
ClipDataset load_clip_dataset(const std::string& dir);
SequenceDataset load_sequence_dataset(const std::string& dir);

/// Kind recorded in a dataset manifest ("clips" or "sequences").
std::string dataset_kind(const std::string& dir);

/// FNV-1a hash of the manifest bytes; identifies a dataset for cache checks.
uint64_t dataset_hash(const std::string& dir);

}  // namespace okdad::synthvid
