#include "okdad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "okdad/losses.hpp"
#include "okdad/runtime.hpp"
#include "okdad/sampling.hpp"

namespace okdad::metrics {

double tiou(const Segment& a, const Segment& b) {
  if (a.start_block >= a.end_block || b.start_block >= b.end_block)
    throw std::invalid_argument("tiou: invalid interval");
  const int inter = std::max(
      0, std::min(a.end_block, b.end_block) - std::max(a.start_block, b.start_block));
  const int uni =
      (a.end_block - a.start_block) + (b.end_block - b.start_block) - inter;
  return (double)inter / (double)uni;
}

namespace {

// AP for one class with the pinned convention: proposals ranked by
// confidence (ties broken by interval then label for determinism), greedy
// matching against the highest-overlap unmatched ground truth, all-point
// interpolated precision-recall area.
double average_precision(std::vector<Segment> proposals,
                         const std::vector<Segment>& gt, double theta) {
  const int G = (int)gt.size();
  if (G == 0) return 0.0;
  std::sort(proposals.begin(), proposals.end(),
            [](const Segment& a, const Segment& b) {
              if (a.confidence != b.confidence)
                return a.confidence > b.confidence;
              if (a.start_block != b.start_block)
                return a.start_block < b.start_block;
              return a.end_block < b.end_block;
            });
  std::vector<char> matched(gt.size(), 0);
  std::vector<int> is_tp(proposals.size(), 0);
  for (size_t i = 0; i < proposals.size(); ++i) {
    // standard detection-AP matching: the proposal is assigned its
    // highest-overlap ground truth regardless of status; it only counts as a
    // true positive if that ground truth is still unclaimed
    int best = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gt.size(); ++g) {
      const double v = tiou(proposals[i], gt[g]);
      if (v > best_iou) {
        best_iou = v;
        best = (int)g;
      }
    }
    if (best >= 0 && best_iou >= theta && !matched[best]) {
      matched[best] = 1;
      is_tp[i] = 1;
    }
  }
  // precision/recall at every rank, then the all-point interpolated area
  std::vector<double> precision, recall;
  int tp = 0;
  for (size_t i = 0; i < proposals.size(); ++i) {
    tp += is_tp[i];
    precision.push_back((double)tp / (double)(i + 1));
    recall.push_back((double)tp / (double)G);
  }
  double ap = 0.0, prev_recall = 0.0, max_prec = 0.0;
  // walk ranks backwards to build the precision envelope
  std::vector<double> envelope(precision.size());
  for (int i = (int)precision.size() - 1; i >= 0; --i) {
    max_prec = std::max(max_prec, precision[i]);
    envelope[i] = max_prec;
  }
  for (size_t i = 0; i < precision.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

}  // namespace

double map_a(const std::vector<Segment>& proposals,
             const std::vector<Segment>& ground_truth, double theta) {
  if (!(theta > 0.0 && theta <= 1.0))
    throw std::invalid_argument("map_a: theta must be in (0,1]");
  std::vector<int> classes;
  for (const auto& g : ground_truth) classes.push_back(g.label);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (int c : classes) {
    std::vector<Segment> p, g;
    for (const auto& s : proposals)
      if (s.label == c) p.push_back(s);
    for (const auto& s : ground_truth)
      if (s.label == c) g.push_back(s);
    sum += average_precision(std::move(p), g, theta);
  }
  return sum / (double)classes.size();
}

SimilarityStats intra_inter_similarity(const std::vector<Tensor>& features,
                                       const std::vector<int>& labels) {
  if (features.size() != labels.size() || features.size() < 2)
    throw std::invalid_argument("intra_inter_similarity: need >= 2 features");
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (size_t i = 0; i < features.size(); ++i)
    for (size_t j = i + 1; j < features.size(); ++j) {
      const double c = losses::cosine_sim(features[i], features[j]);
      if (labels[i] == labels[j]) {
        intra += c;
        n_intra++;
      } else {
        inter += c;
        n_inter++;
      }
    }
  SimilarityStats out;
  if (n_intra > 0) out.intra = intra / n_intra;
  if (n_inter > 0) out.inter = inter / n_inter;
  return out;
}

Fidelity teacher_student_fidelity(const std::vector<Tensor>& x_p,
                                  const std::vector<Tensor>& x_c) {
  if (x_p.size() != x_c.size())
    throw std::invalid_argument("fidelity: length mismatch");
  if (x_p.empty()) throw std::invalid_argument("fidelity: empty input");
  Fidelity f;
  for (size_t i = 0; i < x_p.size(); ++i) {
    f.similarity += losses::cosine_sim(x_p[i], x_c[i]);
    double se = 0;
    for (int64_t k = 0; k < x_p[i].numel(); ++k) {
      const double d = x_p[i][k] - x_c[i][k];
      se += d * d;
    }
    f.mse += se / (double)x_p[i].numel();
  }
  f.similarity /= (double)x_p.size();
  f.mse /= (double)x_p.size();
  return f;
}

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

namespace {

using runtime::teacher_feature_at;

int argmax(const Tensor& t) {
  int best = 0;
  for (int64_t i = 1; i < t.numel(); ++i)
    if (t[i] > t[best]) best = (int)i;
  return best;
}

}  // namespace

std::vector<double> accuracy_at_ratios(nets::Model& model,
                                       const synthvid::ClipDataset& ds,
                                       const std::vector<int>& items,
                                       const std::vector<double>& ratios) {
  if (items.empty())
    throw std::invalid_argument("accuracy_at_ratios: empty dataset split");
  std::vector<double> acc(ratios.size(), 0.0);
  std::vector<std::vector<int>> correct(ratios.size(),
                                        std::vector<int>(items.size(), 0));
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < items.size(); ++k) {
    const auto& clip = ds.items[(size_t)items[k]];
    const int N = clip.video.num_frames();
    for (size_t ri = 0; ri < ratios.size(); ++ri) {
      int pred;
      if (model.cfg.kind == nets::ModelKind::teacher) {
        const int n_partial = sampling::truncate_ratio(N, ratios[ri]);
        pred = argmax(teacher_feature_at(model, clip.video, n_partial).second);
      } else {
        pred = runtime::predict_at_ratio(model, clip.video, ratios[ri]);
      }
      correct[ri][k] = pred == clip.label ? 1 : 0;
    }
  }
  for (size_t ri = 0; ri < ratios.size(); ++ri) {
    int sum = 0;
    for (int v : correct[ri]) sum += v;
    acc[ri] = (double)sum / (double)items.size();
  }
  return acc;
}

std::vector<SimilarityStats> similarity_at_ratios(
    nets::Model& teacher, const synthvid::ClipDataset& ds,
    const std::vector<int>& items, const std::vector<double>& ratios) {
  if (teacher.cfg.kind != nets::ModelKind::teacher)
    throw std::invalid_argument("similarity_at_ratios: teacher model needed");
  std::vector<SimilarityStats> out(ratios.size());
  std::vector<std::vector<Tensor>> feats(ratios.size(),
                                         std::vector<Tensor>(items.size()));
  std::vector<int> labels(items.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < items.size(); ++k) {
    const auto& clip = ds.items[(size_t)items[k]];
    labels[k] = clip.label;
    for (size_t ri = 0; ri < ratios.size(); ++ri) {
      const int n_partial =
          sampling::truncate_ratio(clip.video.num_frames(), ratios[ri]);
      feats[ri][k] = teacher_feature_at(teacher, clip.video, n_partial).first;
    }
  }
  for (size_t ri = 0; ri < ratios.size(); ++ri)
    out[ri] = intra_inter_similarity(feats[ri], labels);
  return out;
}

std::vector<Fidelity> fidelity_at_ratios(nets::Model& teacher,
                                         nets::Model& student,
                                         const synthvid::ClipDataset& ds,
                                         const std::vector<int>& items,
                                         const std::vector<double>& ratios) {
  if (teacher.cfg.kind != nets::ModelKind::teacher ||
      !student.has_class_lstm())
    throw std::invalid_argument("fidelity_at_ratios: wrong model kinds");
  std::vector<std::vector<Tensor>> xps(ratios.size(),
                                       std::vector<Tensor>(items.size()));
  std::vector<std::vector<Tensor>> xcs(ratios.size(),
                                       std::vector<Tensor>(items.size()));
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < items.size(); ++k) {
    const auto& video = ds.items[(size_t)items[k]].video;
    const int N = video.num_frames();
    for (size_t ri = 0; ri < ratios.size(); ++ri) {
      const int n_partial = sampling::truncate_ratio(N, ratios[ri]);
      xps[ri][k] = teacher_feature_at(teacher, video, n_partial).first;
      // student reconstruction at the matching horizon: last block of the
      // truncated stream
      const auto crop = runtime::crop_config(student.cfg);
      const auto chunk = runtime::chunk_config(student.cfg);
      auto blocks = sampling::chunk_online(video, chunk, crop, n_partial);
      auto st = runtime::stream_init(student);
      Tensor x_c;
      for (const auto& b : blocks) {
        Tensor xin({1, student.cfg.delta, 1, student.cfg.backbone.in_h,
                    student.cfg.backbone.in_w});
        xin.data = b.frames.data;
        auto feats = student.features(ad::constant(std::move(xin)));
        auto feat =
            ad::slice(feats, 0, student.cfg.backbone.feature_dim);
        auto step = student.class_step(feat, ad::constant(st.cls.h),
                                       ad::constant(st.cls.c));
        st.cls.h = step.h->value;
        st.cls.c = step.c->value;
        x_c = step.x_c->value;
      }
      xcs[ri][k] = std::move(x_c);
    }
  }
  std::vector<Fidelity> out(ratios.size());
  for (size_t ri = 0; ri < ratios.size(); ++ri)
    out[ri] = teacher_student_fidelity(xps[ri], xcs[ri]);
  return out;
}

std::vector<double> detection_map(nets::Model& okdad,
                                  const synthvid::SequenceDataset& ds,
                                  const std::vector<int>& items,
                                  const std::vector<double>& thetas,
                                  double threshold) {
  if (!okdad.has_actionness())
    throw std::invalid_argument("detection_map: okdad model needed");
  // Segments are pooled across sequences with disjoint block offsets so that
  // matching stays within each sequence.
  std::vector<Segment> proposals, gt;
  int offset = 0;
  std::vector<std::vector<runtime::BlockOutput>> outs(items.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < items.size(); ++k)
    outs[k] = runtime::run_stream(okdad, ds.items[(size_t)items[k]].video);
  for (size_t k = 0; k < items.size(); ++k) {
    const auto& seq = ds.items[(size_t)items[k]];
    auto props = runtime::propose_segments(outs[k], threshold);
    auto truth =
        runtime::gt_block_segments(seq.intervals, seq.video.num_frames(),
                                   okdad.cfg.stride, okdad.cfg.delta);
    for (auto s : props) {
      s.start_block += offset;
      s.end_block += offset;
      proposals.push_back(s);
    }
    for (auto s : truth) {
      s.start_block += offset;
      s.end_block += offset;
      gt.push_back(s);
    }
    offset += (int)outs[k].size() + 1;
  }
  std::vector<double> out;
  out.reserve(thetas.size());
  for (double th : thetas) out.push_back(map_a(proposals, gt, th));
  return out;
}

// ---------------------------------------------------------------------------
// report files
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("n/a");
}

}  // namespace

void write_report(const EvalReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream summary(dir + "/summary.txt");
  if (!summary) throw std::runtime_error("cannot write report in " + dir);

  if (!report.accuracy.empty()) {
    std::ofstream f(dir + "/ratios.csv");
    f << "ratio";
    for (double r : report.ratios) f << "," << fmt(r);
    f << "\naccuracy";
    for (double a : report.accuracy) f << "," << fmt(a);
    f << "\n";
    summary << "accuracy per ratio:";
    for (double a : report.accuracy) summary << " " << fmt(a);
    summary << "\n";
  }
  if (!report.similarity.empty()) {
    std::ofstream f(dir + "/similarity.csv");
    f << "ratio";
    for (double r : report.ratios) f << "," << fmt(r);
    f << "\nintra";
    for (const auto& s : report.similarity) f << "," << fmt(s.intra);
    f << "\ninter";
    for (const auto& s : report.similarity) f << "," << fmt(s.inter);
    f << "\n";
    summary << "similarity table written\n";
  }
  if (!report.fidelity.empty()) {
    std::ofstream f(dir + "/fidelity.csv");
    f << "ratio";
    for (double r : report.ratios) f << "," << fmt(r);
    f << "\nsimilarity";
    for (const auto& s : report.fidelity) f << "," << fmt(s.similarity);
    f << "\nmse";
    for (const auto& s : report.fidelity) f << "," << fmt(s.mse);
    f << "\n";
    summary << "fidelity table written\n";
  }
  if (!report.map.empty()) {
    std::ofstream f(dir + "/detection.csv");
    f << "theta";
    for (double t : report.thetas) f << "," << fmt(t);
    f << "\nmap_a";
    for (double m : report.map) f << "," << fmt(m);
    f << "\n";
    summary << "map_a:";
    for (double m : report.map) summary << " " << fmt(m);
    summary << "\n";
  }
}

}  // namespace okdad::metrics
