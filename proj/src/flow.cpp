#include "jmpose/flow.hpp"

#include <algorithm>
#include <cmath>

#include "jmpose/synthetic.hpp"

namespace jmpose {

namespace {

Tensor to_gray(const Tensor& frame) {
  if (frame.ndim() == 2) return frame;
  const int c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  Tensor g({h, w});
  for (int ch = 0; ch < c; ++ch) {
    const double* p = frame.plane(ch);
    for (int i = 0; i < h * w; ++i) g[i] += p[i] / c;
  }
  return g;
}

Tensor downsample2(const Tensor& img) {
  const int h = img.dim(0), w = img.dim(1);
  const int oh = h / 2, ow = w / 2;
  Tensor out({oh, ow});
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out.at(y, x) = 0.25 * (img.at(2 * y, 2 * x) + img.at(2 * y, 2 * x + 1) +
                             img.at(2 * y + 1, 2 * x) + img.at(2 * y + 1, 2 * x + 1));
  return out;
}

double clamped(const Tensor& img, int y, int x) {
  y = std::clamp(y, 0, img.dim(0) - 1);
  x = std::clamp(x, 0, img.dim(1) - 1);
  return img.at(y, x);
}

double block_ssd(const Tensor& a, const Tensor& b, int ax, int ay, int bx, int by, int r) {
  double ssd = 0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) {
      double d = clamped(a, ay + j, ax + i) - clamped(b, by + j, bx + i);
      ssd += d * d;
    }
  return ssd;
}

// One matching level: integer search of radius `search` around the initial
// displacement, then parabolic sub-pixel refinement per axis.
void match_level(const Tensor& a, const Tensor& b, FlowField& flow, int search, int block_r) {
  const int h = a.dim(0), w = a.dim(1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int ix = static_cast<int>(std::lround(flow.u.at(y, x)));
      int iy = static_cast<int>(std::lround(flow.v.at(y, x)));
      // Seed with zero displacement too, so flat background stays put.
      int best_dx = 0, best_dy = 0;
      double best = block_ssd(a, b, x, y, x, y, block_r);
      double seeded = block_ssd(a, b, x, y, x + ix, y + iy, block_r);
      if (seeded < best) {
        best = seeded;
        best_dx = ix;
        best_dy = iy;
      }
      for (int dy = iy - search; dy <= iy + search; ++dy)
        for (int dx = ix - search; dx <= ix + search; ++dx) {
          double c = block_ssd(a, b, x, y, x + dx, y + dy, block_r);
          if (c < best) {
            best = c;
            best_dx = dx;
            best_dy = dy;
          }
        }
      double fx = best_dx, fy = best_dy;
      // Parabola fit through the SSD neighbours of the winner.
      double cl = block_ssd(a, b, x, y, x + best_dx - 1, y + best_dy, block_r);
      double cr = block_ssd(a, b, x, y, x + best_dx + 1, y + best_dy, block_r);
      double denom = cl - 2 * best + cr;
      if (denom > 1e-12) fx += 0.5 * (cl - cr) / denom;
      double cu = block_ssd(a, b, x, y, x + best_dx, y + best_dy - 1, block_r);
      double cd = block_ssd(a, b, x, y, x + best_dx, y + best_dy + 1, block_r);
      denom = cu - 2 * best + cd;
      if (denom > 1e-12) fy += 0.5 * (cu - cd) / denom;
      flow.u.at(y, x) = fx;
      flow.v.at(y, x) = fy;
    }
  }
}

}  // namespace

FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b) {
  if (!frame_a.same_shape(frame_b)) throw std::invalid_argument("estimate_flow: shape mismatch");
  Tensor a = to_gray(frame_a), b = to_gray(frame_b);

  std::vector<Tensor> pyr_a{a}, pyr_b{b};
  while (pyr_a.size() < 3 && std::min(pyr_a.back().dim(0), pyr_a.back().dim(1)) >= 32) {
    pyr_a.push_back(downsample2(pyr_a.back()));
    pyr_b.push_back(downsample2(pyr_b.back()));
  }

  FlowField flow(pyr_a.back().dim(0), pyr_a.back().dim(1));
  for (int level = static_cast<int>(pyr_a.size()) - 1; level >= 0; --level) {
    const Tensor& la = pyr_a[static_cast<size_t>(level)];
    const Tensor& lb = pyr_b[static_cast<size_t>(level)];
    if (level < static_cast<int>(pyr_a.size()) - 1) {
      FlowField up(la.dim(0), la.dim(1));
      for (int y = 0; y < la.dim(0); ++y)
        for (int x = 0; x < la.dim(1); ++x) {
          int sy = std::min(y / 2, flow.height() - 1);
          int sx = std::min(x / 2, flow.width() - 1);
          up.u.at(y, x) = 2.0 * flow.u.at(sy, sx);
          up.v.at(y, x) = 2.0 * flow.v.at(sy, sx);
        }
      flow = std::move(up);
    }
    int search = (level == static_cast<int>(pyr_a.size()) - 1) ? 4 : 2;
    match_level(la, lb, flow, search, 3);
  }
  return flow;
}

FlowField OracleFlowProvider::between(const ClipSample& sample, int from, int to) const {
  const int h = sample.clip.frames[0].dim(1), w = sample.clip.frames[0].dim(2);
  if (from < 0 || to < 0 || from >= sample.clip.num_frames() || to >= sample.clip.num_frames())
    throw std::invalid_argument("OracleFlowProvider: frame index out of range");
  if (from == to) return FlowField(h, w);
  return flow_between_poses(sample.poses[static_cast<size_t>(from)],
                            sample.poses[static_cast<size_t>(to)], h, w, limb_width_,
                            width_scale_);
}

FlowField BlockMatchFlowProvider::between(const ClipSample& sample, int from, int to) const {
  return estimate_flow(sample.clip.frames[static_cast<size_t>(from)],
                       sample.clip.frames[static_cast<size_t>(to)]);
}

FlowField StoredFlowProvider::between(const ClipSample& sample, int from, int to) const {
  if (sample.flows.empty()) throw std::invalid_argument("StoredFlowProvider: clip has no flow files");
  if (from > to) throw std::invalid_argument("StoredFlowProvider: reverse spans are not stored");
  const int h = sample.clip.frames[0].dim(1), w = sample.clip.frames[0].dim(2);
  if (from == to) return FlowField(h, w);
  FlowField acc = sample.flows[static_cast<size_t>(from)];
  for (int i = from + 1; i < to; ++i) acc = compose_flows(acc, sample.flows[static_cast<size_t>(i)]);
  return acc;
}

std::unique_ptr<FlowProvider> make_flow_provider(const std::string& name) {
  if (name == "oracle") return std::make_unique<OracleFlowProvider>();
  if (name == "blockmatch") return std::make_unique<BlockMatchFlowProvider>();
  if (name == "file") return std::make_unique<StoredFlowProvider>();
  throw ConfigError("unknown flow provider: " + name);
}

namespace {

double bilinear_zero(const Tensor& plane, double x, double y) {
  const int h = plane.dim(0), w = plane.dim(1);
  if (x <= -1 || x >= w || y <= -1 || y >= h) return 0.0;
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double tx = x - x0, ty = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
    return plane.at(yy, xx);
  };
  return (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) +
         ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
}

}  // namespace

FlowField compose_flows(const FlowField& ab, const FlowField& bc) {
  if (!ab.same_shape(bc)) throw std::invalid_argument("compose_flows: shape mismatch");
  const int h = ab.height(), w = ab.width();
  FlowField out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double u1 = ab.u.at(y, x), v1 = ab.v.at(y, x);
      if (u1 == 0.0 && v1 == 0.0) continue;  // background stays zero
      double u2 = bilinear_zero(bc.u, x + u1, y + v1);
      double v2 = bilinear_zero(bc.v, x + u1, y + v1);
      out.u.at(y, x) = u1 + u2;
      out.v.at(y, x) = v1 + v2;
    }
  return out;
}

MotionVolume build_motion_volume(const ClipSample& sample, const FlowProvider& provider,
                                 int stride) {
  sample.clip.validate();
  if (sample.clip.num_frames() < 3)
    throw std::invalid_argument("build_motion_volume: clip needs at least 3 frames");
  const int h = sample.clip.frames[0].dim(1), w = sample.clip.frames[0].dim(2);
  if (h % stride != 0 || w % stride != 0)
    throw std::invalid_argument("build_motion_volume: frame size not divisible by stride");
  const int kf = sample.clip.keyframe_index, d = sample.clip.delta;

  FlowField prev = provider.between(sample, kf - d, kf);
  FlowField next = provider.between(sample, kf, kf + d);

  const int hh = h / stride, hw = w / stride;
  MotionVolume mv;
  mv.channels = Tensor({4, hh, hw});
  const Tensor* planes[4] = {&prev.u, &prev.v, &next.u, &next.v};
  for (int c = 0; c < 4; ++c) {
    double* dst = mv.channels.plane(c);
    const Tensor& src = *planes[c];
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < hw; ++x) {
        double acc = 0;
        for (int j = 0; j < stride; ++j)
          for (int i = 0; i < stride; ++i) acc += src.at(y * stride + j, x * stride + i);
        // Area average, then magnitude rescale into heatmap units.
        dst[y * hw + x] = acc / (stride * stride) / stride;
      }
  }
  return mv;
}

}  // namespace jmpose
