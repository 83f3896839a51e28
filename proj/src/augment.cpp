#include "jmpose/augment.hpp"

#include <cmath>

namespace jmpose {

Affine2 Affine2::inverse() const {
  double det = m00 * m11 - m01 * m10;
  if (std::fabs(det) < 1e-12) throw std::invalid_argument("Affine2: singular transform");
  Affine2 inv;
  inv.m00 = m11 / det;
  inv.m01 = -m01 / det;
  inv.m10 = -m10 / det;
  inv.m11 = m00 / det;
  inv.cx = cx;
  inv.cy = cy;
  return inv;
}

Affine2 augment_affine(const AugmentParams& params, int img_w, int img_h) {
  double rad = params.rotation_deg * M_PI / 180.0;
  double c = std::cos(rad), s = std::sin(rad);
  double fx = params.flip ? -1.0 : 1.0;
  Affine2 a;
  // rotation * scale * flip
  a.m00 = params.scale * c * fx;
  a.m01 = params.scale * -s;
  a.m10 = params.scale * s * fx;
  a.m11 = params.scale * c;
  a.cx = 0.5 * (img_w - 1);
  a.cy = 0.5 * (img_h - 1);
  return a;
}

namespace {

double bilinear(const double* plane, int h, int w, double x, double y) {
  if (x <= -1 || x >= w || y <= -1 || y >= h) return 0.0;
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double tx = x - x0, ty = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
    return plane[yy * w + xx];
  };
  return (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) +
         ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
}

}  // namespace

Tensor warp_affine(const Tensor& chw, const Affine2& fwd) {
  if (chw.ndim() != 3) throw std::invalid_argument("warp_affine: expected (C,H,W)");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Affine2 inv = fwd.inverse();
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = chw.plane(ch);
    double* dst = out.plane(ch);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sx, sy;
        inv.apply(x, y, sx, sy);
        dst[y * w + x] = bilinear(src, h, w, sx, sy);
      }
  }
  return out;
}

FlowField transform_flow(const FlowField& flow, const Affine2& fwd) {
  const int h = flow.height(), w = flow.width();
  Affine2 inv = fwd.inverse();
  FlowField out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sx, sy;
      inv.apply(x, y, sx, sy);
      double u = bilinear(flow.u.ptr(), h, w, sx, sy);
      double v = bilinear(flow.v.ptr(), h, w, sx, sy);
      double tu, tv;
      fwd.apply_vector(u, v, tu, tv);
      out.u.at(y, x) = tu;
      out.v.at(y, x) = tv;
    }
  return out;
}

std::pair<FrameClip, std::vector<PersonPose>> augment(const FrameClip& clip,
                                                      const std::vector<PersonPose>& poses,
                                                      const AugmentParams& params) {
  clip.validate();
  if (poses.size() != clip.frames.size())
    throw std::invalid_argument("augment: pose count must match frame count");
  const int h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  Affine2 a = augment_affine(params, w, h);

  FrameClip out = clip;
  for (auto& frame : out.frames) {
    frame = warp_affine(frame, a);
    if (params.truncation) {
      const Rect& t = *params.truncation;
      const int c = frame.dim(0);
      for (int ch = 0; ch < c; ++ch) {
        double* p = frame.plane(ch);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (!t.contains(x, y)) p[y * w + x] = 0.0;
      }
    }
  }

  std::vector<PersonPose> out_poses(poses.size());
  for (size_t f = 0; f < poses.size(); ++f) {
    PersonPose p = poses[f];
    for (auto& kp : p.keypoints) {
      double nx, ny;
      a.apply(kp.x, kp.y, nx, ny);
      kp.x = nx;
      kp.y = ny;
      bool inside = nx >= 0 && nx < w && ny >= 0 && ny < h;
      if (params.truncation) inside = inside && params.truncation->contains(nx, ny);
      kp.visible = kp.visible && inside;
    }
    if (params.flip) {
      for (auto [l, r] : flip_pairs()) std::swap(p.keypoints[static_cast<size_t>(l)],
                                                 p.keypoints[static_cast<size_t>(r)]);
    }
    out_poses[f] = std::move(p);
  }

  if (auto box = out_poses[static_cast<size_t>(clip.keyframe_index)].visible_bbox())
    out.person_box = *box;
  return {std::move(out), std::move(out_poses)};
}

}  // namespace jmpose
