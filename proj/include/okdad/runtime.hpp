#pragma once

#include <optional>
#include <vector>

#include "okdad/metrics.hpp"
#include "okdad/nets.hpp"
#include "okdad/sampling.hpp"
#include "okdad/synthvid.hpp"

namespace okdad::runtime {

/// Per-block emission of the streaming detector. `actionness` is present only
/// for models with an actionness LSTM.
struct BlockOutput {
  int t = 0;  // 0-based block index
  std::optional<double> actionness;
  Tensor class_dist;  // [C], sums to 1
};

/// All state carried across stream steps: both recurrent states, the block
/// counter, and the open-segment accumulator. Memory is bounded by the
/// longest single segment, not by the sequence length.
struct StreamState {
  nets::RecurrentState act{Tensor(), Tensor()};
  nets::RecurrentState cls{Tensor(), Tensor()};
  int t = 0;
  // open segment accumulator
  int open_start = -1;
  std::vector<double> open_actionness;
  std::vector<Tensor> open_dists;

  int64_t memory_bytes() const;
};

struct StepResult {
  BlockOutput output;
  // emitted when a run of positive actionness ends at this step
  std::optional<metrics::Segment> closed_segment;
};

/// Preprocessing geometry the model was trained with.
sampling::OfflineSampleConfig crop_config(const nets::ModelConfig& cfg);
sampling::OnlineChunkConfig chunk_config(const nets::ModelConfig& cfg);

StreamState stream_init(const nets::Model& model);

/// Consume one block [delta, H, W]. Strictly causal. For okdad models the
/// classification state is gated by the actionness probability before the
/// classification step; `gate_override` substitutes the gate scalar (used for
/// teacher forcing and gating tests).
StepResult stream_step(const nets::Model& model, StreamState& state,
                       const Tensor& block,
                       std::optional<double> gate_override = std::nullopt);

/// Close any open segment at end of stream.
std::optional<metrics::Segment> stream_finish(const nets::Model& model,
                                              StreamState& state);

/// Stream the first n_partial frames of a sequence block by block.
/// n_partial < 0 means the whole sequence. Collects closed segments when
/// `segments` is given.
std::vector<BlockOutput> run_stream(const nets::Model& model,
                                    const synthvid::Video& video,
                                    int n_partial = -1,
                                    std::vector<metrics::Segment>* segments =
                                        nullptr);

/// Whole-sequence evaluation through the same parameters: one batched
/// backbone call over all blocks, then the recurrences. Reference for the
/// streaming/batch equivalence property.
std::vector<BlockOutput> batched_outputs(const nets::Model& model,
                                         const synthvid::Video& video);

/// Maximal runs of consecutive blocks with actionness > threshold. Segment
/// label is the argmax of the sigmoid-weighted average class distribution
/// over the run; confidence is mean actionness times the weighted probability
/// of the chosen label.
std::vector<metrics::Segment> propose_segments(
    const std::vector<BlockOutput>& outputs, double threshold);

/// Early-prediction protocol: stream the blocks covering the first
/// truncate_ratio(N, r) frames and return the argmax of the sigmoid-weighted
/// class distribution.
int predict_at_ratio(const nets::Model& model, const synthvid::Video& video,
                     double r);

/// Teacher feature x_p and class distribution on the first n_partial frames
/// (eval mode, deterministic offline sampling).
std::pair<Tensor, Tensor> teacher_feature_at(nets::Model& teacher,
                                             const synthvid::Video& video,
                                             int n_partial);

/// Which interval owns each block: the maximal-overlap interval when the
/// overlap covers at least half the block's frame span, else -1. Block t
/// spans original frames [t*s*delta, (t+1)*s*delta) clipped to N.
std::vector<int> block_owners(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta);

/// Block-level actionness ground truth: 1 where a block is owned by any
/// interval under the half-coverage rule.
std::vector<double> block_actionness_labels(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta);

/// Ground-truth intervals mapped to block segments under the same >= 50%
/// coverage rule (each block assigned to its maximal-overlap interval).
std::vector<metrics::Segment> gt_block_segments(
    const std::vector<synthvid::ActionInterval>& intervals, int num_frames,
    int stride, int delta);

}  // namespace okdad::runtime
