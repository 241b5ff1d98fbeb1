#pragma once

#include <optional>
#include <string>
#include <vector>

#include "okdad/nets.hpp"
#include "okdad/synthvid.hpp"
#include "okdad/tensor.hpp"

namespace okdad::metrics {

/// Half-open block interval with a class label and a ranking confidence.
struct Segment {
  int start_block = 0;
  int end_block = 0;
  int label = 0;
  double confidence = 1.0;
};

/// Temporal intersection over union on block indices; 0 when disjoint.
double tiou(const Segment& a, const Segment& b);

/// Mean average precision over the classes present in the ground truth.
/// Proposals are ranked by confidence; a proposal is a true positive when it
/// reaches tIoU >= theta with a not-yet-matched same-class ground-truth
/// segment (greedy, best-ranked proposal first, highest-overlap ground truth
/// chosen). AP uses all-point interpolation of the precision-recall curve.
double map_a(const std::vector<Segment>& proposals,
             const std::vector<Segment>& ground_truth, double theta);

struct SimilarityStats {
  std::optional<double> intra;  // empty when no same-class pair exists
  std::optional<double> inter;
};

/// Mean pairwise cosine similarity over same-label and different-label pairs
/// (i < j).
SimilarityStats intra_inter_similarity(const std::vector<Tensor>& features,
                                       const std::vector<int>& labels);

struct Fidelity {
  double similarity = 0;  // mean cosine over pairs
  double mse = 0;         // mean over pairs of (1/D)*|x_p - x_c|^2
};

Fidelity teacher_student_fidelity(const std::vector<Tensor>& x_p,
                                  const std::vector<Tensor>& x_c);

// ---------------------------------------------------------------------------
// evaluation protocols (model-in-the-loop drivers live in src/metrics.cpp)
// ---------------------------------------------------------------------------

inline std::vector<double> default_ratios() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

inline std::vector<double> default_thetas() { return {0.1, 0.3, 0.5, 0.7}; }

/// Fraction of clips classified correctly at each observation ratio, on the
/// given item indices. Teachers run the offline protocol (deterministic
/// sampling at N_partial); students stream blocks and use the
/// sigmoid-weighted prediction.
std::vector<double> accuracy_at_ratios(nets::Model& model,
                                       const synthvid::ClipDataset& ds,
                                       const std::vector<int>& items,
                                       const std::vector<double>& ratios);

/// Per-ratio intra/inter-class cosine similarity of teacher features on the
/// given items (deterministic eval-mode sampling).
std::vector<SimilarityStats> similarity_at_ratios(
    nets::Model& teacher, const synthvid::ClipDataset& ds,
    const std::vector<int>& items, const std::vector<double>& ratios);

/// Per-ratio similarity/MSE between teacher features x_p and the student's
/// reconstruction x_c at the matching horizon.
std::vector<Fidelity> fidelity_at_ratios(nets::Model& teacher,
                                         nets::Model& student,
                                         const synthvid::ClipDataset& ds,
                                         const std::vector<int>& items,
                                         const std::vector<double>& ratios);

/// Stream every sequence, form segment proposals at `threshold`, and score
/// them against the block-level ground truth at each theta.
std::vector<double> detection_map(nets::Model& okdad,
                                  const synthvid::SequenceDataset& ds,
                                  const std::vector<int>& items,
                                  const std::vector<double>& thetas,
                                  double threshold);

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::vector<double> ratios;
  std::vector<double> accuracy;                  // ratios protocol
  std::vector<SimilarityStats> similarity;       // ratios protocol (teacher)
  std::vector<Fidelity> fidelity;                // fidelity protocol
  std::vector<double> thetas;
  std::vector<double> map;                       // detection protocol
};

/// One CSV per populated table plus a plain-text summary. Undefined cells
/// (no pair of a kind) are written as "n/a", never as 0.
void write_report(const EvalReport& report, const std::string& dir);

}  // namespace okdad::metrics
