#include "okdad/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace okdad::sampling {

void OfflineSampleConfig::validate() const {
  if (t_off < 1) throw std::invalid_argument("sampling: t_off must be >= 1");
  if (!(r_min > 0.0 && r_min <= 1.0))
    throw std::invalid_argument("sampling: r_min must be in (0,1]");
  if (crop_margin < 0.0)
    throw std::invalid_argument("sampling: crop_margin must be >= 0");
  if (out_height < 4 || out_width < 4)
    throw std::invalid_argument("sampling: output dims too small");
}

void OnlineChunkConfig::validate() const {
  if (stride < 1) throw std::invalid_argument("sampling: stride must be >= 1");
  if (delta < 1) throw std::invalid_argument("sampling: delta must be >= 1");
}

namespace {

double sample_bilinear(const uint8_t* frame, int H, int W, double y,
                       double x) {
  y = std::min(std::max(y, 0.0), (double)H - 1);
  x = std::min(std::max(x, 0.0), (double)W - 1);
  const int y0 = (int)std::floor(y), x0 = (int)std::floor(x);
  const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const double fy = y - y0, fx = x - x0;
  const double v00 = frame[(size_t)y0 * W + x0] / 255.0;
  const double v01 = frame[(size_t)y0 * W + x1] / 255.0;
  const double v10 = frame[(size_t)y1 * W + x0] / 255.0;
  const double v11 = frame[(size_t)y1 * W + x1] / 255.0;
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) +
         fy * ((1 - fx) * v10 + fx * v11);
}

}  // namespace

CropResult crop_frame(const uint8_t* frame, int H, int W,
                      const double* keypoints, int num_joints, double margin,
                      int out_h, int out_w) {
  double ymin = 1e30, ymax = -1e30, xmin = 1e30, xmax = -1e30;
  bool any = false;
  for (int j = 0; j < num_joints; ++j) {
    const double y = keypoints[2 * j], x = keypoints[2 * j + 1];
    if (y < 0 || y > H - 1 || x < 0 || x > W - 1) continue;
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    any = true;
  }
  CropResult res;
  res.used_fallback = !any;
  if (!any) {
    ymin = 0;
    ymax = H - 1;
    xmin = 0;
    xmax = W - 1;
  } else {
    const double sy = ymax - ymin, sx = xmax - xmin;
    ymin = std::max(0.0, ymin - margin * sy);
    ymax = std::min((double)H - 1, ymax + margin * sy);
    xmin = std::max(0.0, xmin - margin * sx);
    xmax = std::min((double)W - 1, xmax + margin * sx);
  }
  // Box footprint covers [ymin, ymax+1) so that a full-frame box with
  // matching output dims is an identity resample.
  const double bh = ymax - ymin + 1.0;
  const double bw = xmax - xmin + 1.0;
  res.frame = Tensor({out_h, out_w});
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      const double y = ymin + (i + 0.5) * bh / out_h - 0.5;
      const double x = xmin + (j + 0.5) * bw / out_w - 0.5;
      res.frame[(int64_t)i * out_w + j] = sample_bilinear(frame, H, W, y, x);
    }
  return res;
}

int truncate_ratio(int N, double r) {
  if (N < 1) throw std::invalid_argument("truncate_ratio: N must be >= 1");
  if (!(r > 0.0 && r <= 1.0))
    throw std::invalid_argument("truncate_ratio: r must be in (0,1]");
  const int n = (int)std::floor(r * (double)N + 1e-9);
  return std::max(1, n);
}

std::vector<int> offline_indices(int n_partial, int t_off, rng::Stream* rs) {
  if (n_partial < 1)
    throw std::invalid_argument("offline_indices: n_partial must be >= 1");
  std::vector<int> idx;
  if (n_partial < t_off) {
    idx.resize(n_partial);
    for (int i = 0; i < n_partial; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(t_off);
  for (int w = 0; w < t_off; ++w) {
    // boundaries floor(w*n/t) partition the prefix into windows whose sizes
    // differ by at most one
    const int lo = (int)(((int64_t)w * n_partial) / t_off);
    const int hi = (int)(((int64_t)(w + 1) * n_partial) / t_off);
    if (rs)
      idx.push_back(lo + (int)rs->next_below(hi - lo));
    else
      idx.push_back(lo + (hi - 1 - lo) / 2);
  }
  return idx;
}

Tensor sample_offline(const synthvid::Video& video, int n_partial,
                      const OfflineSampleConfig& cfg, rng::Stream* rs) {
  cfg.validate();
  const int N = video.num_frames();
  if (n_partial < 1 || n_partial > N)
    throw std::invalid_argument("sample_offline: bad n_partial");
  const auto idx = offline_indices(n_partial, cfg.t_off, rs);
  Tensor out({cfg.t_off, cfg.out_height, cfg.out_width});
  const int64_t fsz = (int64_t)cfg.out_height * cfg.out_width;
  for (size_t i = 0; i < idx.size(); ++i) {
    auto crop = crop_frame(video.frame(idx[i]), video.height, video.width,
                           video.keypoints_at(idx[i]), video.joints,
                           cfg.crop_margin, cfg.out_height, cfg.out_width);
    std::copy(crop.frame.data.begin(), crop.frame.data.end(),
              out.data.begin() + (int64_t)i * fsz);
  }
  // remaining frames stay black (zero)
  return out;
}

int strided_count(int n_partial, int stride) {
  return (n_partial + stride - 1) / stride;
}

int num_blocks(int count, int delta) { return (count + delta - 1) / delta; }

std::vector<Block> chunk_online(const synthvid::Video& video,
                                const OnlineChunkConfig& chunk,
                                const OfflineSampleConfig& crop,
                                int n_partial) {
  chunk.validate();
  crop.validate();
  const int N = video.num_frames();
  if (N < 1) throw std::invalid_argument("chunk_online: empty sequence");
  n_partial = std::min(n_partial, N);
  const int count = strided_count(n_partial, chunk.stride);
  const int T_on = num_blocks(count, chunk.delta);
  const int64_t fsz = (int64_t)crop.out_height * crop.out_width;
  std::vector<Block> blocks(T_on);
  for (int b = 0; b < T_on; ++b) {
    Block& blk = blocks[b];
    blk.frames = Tensor({chunk.delta, crop.out_height, crop.out_width});
    const int lo = b * chunk.delta;
    const int hi = std::min((b + 1) * chunk.delta, count);
    blk.valid = hi - lo;
    for (int i = lo; i < hi; ++i) {
      const int src = i * chunk.stride;
      auto c = crop_frame(video.frame(src), video.height, video.width,
                          video.keypoints_at(src), video.joints,
                          crop.crop_margin, crop.out_height, crop.out_width);
      std::copy(c.frame.data.begin(), c.frame.data.end(),
                blk.frames.data.begin() + (int64_t)(i - lo) * fsz);
    }
  }
  return blocks;
}

}  // namespace okdad::sampling
