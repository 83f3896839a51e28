#include "jmpose/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace jmpose {

namespace {

// Joint indices, matching joint_names(); 15 is the derived pelvis.
enum : int {
  kHeadTop = 0, kNose, kNeck, kLShoulder, kRShoulder, kLElbow, kRElbow,
  kLWrist, kRWrist, kLHip, kRHip, kLKnee, kRKnee, kLAnkle, kRAnkle, kPelvis
};

struct Vec2 {
  double x = 0, y = 0;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double len(Vec2 a) { return std::sqrt(dot(a, a)); }

// Direction of a segment pointing "up" at angle 0, image y growing down.
Vec2 dir_up(double a) { return {std::sin(a), -std::cos(a)}; }
// Direction pointing "down" at angle 0 (arms/legs at rest).
Vec2 dir_down(double a) { return {std::sin(a), std::cos(a)}; }

double point_segment_dist(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 d = b - a;
  double l2 = dot(d, d);
  double t = l2 > 0 ? std::clamp(dot(p - a, d) / l2, 0.0, 1.0) : 0.0;
  Vec2 q = a + t * d;
  return len(p - q);
}

}  // namespace

double& FigureAngles::operator[](int i) {
  double* f[kCount] = {&torso, &head, &l_upper_arm, &r_upper_arm, &l_forearm,
                       &r_forearm, &l_thigh, &r_thigh, &l_shin, &r_shin};
  return *f[i];
}
double FigureAngles::operator[](int i) const {
  return (*const_cast<FigureAngles*>(this))[i];
}

const std::vector<std::pair<int, int>>& figure_segments() {
  static const std::vector<std::pair<int, int>> segs = {
      {kHeadTop, kNose}, {kNose, kNeck},   {kNeck, kPelvis},  {kNeck, kLShoulder},
      {kNeck, kRShoulder}, {kLShoulder, kLElbow}, {kLElbow, kLWrist},
      {kRShoulder, kRElbow}, {kRElbow, kRWrist}, {kLHip, kRHip},
      {kLHip, kLKnee}, {kLKnee, kLAnkle}, {kRHip, kRKnee}, {kRKnee, kRAnkle}};
  return segs;
}

const std::vector<double>& segment_width_scale() {
  static const std::vector<double> scale = {3.0, 1.0, 1.5, 1.0, 1.0, 1.0, 1.0,
                                            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  return scale;
}

FigureGeometry figure_at_frame(const SyntheticSceneSpec& spec, int frame) {
  FigureAngles a = spec.pose0;
  for (int i = 0; i < FigureAngles::kCount; ++i) a[i] += frame * spec.angular_velocity[i];
  const FigureSpec& f = spec.figure;

  Vec2 pelvis{spec.root_x + frame * spec.root_vx, spec.root_y + frame * spec.root_vy};
  Vec2 up = dir_up(a.torso);
  Vec2 side{std::cos(a.torso), std::sin(a.torso)};  // perpendicular to the torso

  Vec2 neck = pelvis + f.torso_len * up;
  Vec2 head_dir = dir_up(a.torso + a.head);
  Vec2 nose = neck + 0.45 * f.head_len * head_dir;
  Vec2 head_top = neck + f.head_len * head_dir;
  Vec2 lsh = neck - f.shoulder_half * side;
  Vec2 rsh = neck + f.shoulder_half * side;
  Vec2 lel = lsh + f.upper_arm * dir_down(a.torso + a.l_upper_arm);
  Vec2 rel = rsh + f.upper_arm * dir_down(a.torso + a.r_upper_arm);
  Vec2 lwr = lel + f.forearm * dir_down(a.torso + a.l_upper_arm + a.l_forearm);
  Vec2 rwr = rel + f.forearm * dir_down(a.torso + a.r_upper_arm + a.r_forearm);
  Vec2 lhip = pelvis - f.hip_half * side;
  Vec2 rhip = pelvis + f.hip_half * side;
  Vec2 lkn = lhip + f.thigh * dir_down(a.torso + a.l_thigh);
  Vec2 rkn = rhip + f.thigh * dir_down(a.torso + a.r_thigh);
  Vec2 lan = lkn + f.shin * dir_down(a.torso + a.l_thigh + a.l_shin);
  Vec2 ran = rkn + f.shin * dir_down(a.torso + a.r_thigh + a.r_shin);

  FigureGeometry g;
  const Vec2 pts[16] = {head_top, nose, neck, lsh, rsh, lel, rel, lwr,
                        rwr, lhip, rhip, lkn, rkn, lan, ran, pelvis};
  for (int i = 0; i < 16; ++i) {
    g.px[static_cast<size_t>(i)] = pts[i].x;
    g.py[static_cast<size_t>(i)] = pts[i].y;
  }
  return g;
}

FigureGeometry geometry_from_pose(const PersonPose& pose) {
  if (pose.num_joints() != kNumJoints)
    throw std::invalid_argument("geometry_from_pose: expected 15 joints");
  FigureGeometry g;
  for (int i = 0; i < kNumJoints; ++i) {
    g.px[static_cast<size_t>(i)] = pose.keypoints[static_cast<size_t>(i)].x;
    g.py[static_cast<size_t>(i)] = pose.keypoints[static_cast<size_t>(i)].y;
  }
  g.px[kPelvis] = 0.5 * (g.px[kLHip] + g.px[kRHip]);
  g.py[kPelvis] = 0.5 * (g.py[kLHip] + g.py[kRHip]);
  return g;
}

Tensor render_figure_coverage(const FigureGeometry& geo, const FigureSpec& fig, int h, int w) {
  constexpr int kSS = 4;  // supersampling factor per axis
  const auto& segs = figure_segments();
  const auto& wscale = segment_width_scale();
  std::vector<uint8_t> hit(static_cast<size_t>(h) * w * kSS * kSS, 0);
  const int sw = w * kSS, sh = h * kSS;

  for (size_t s = 0; s < segs.size(); ++s) {
    Vec2 a{geo.px[static_cast<size_t>(segs[s].first)], geo.py[static_cast<size_t>(segs[s].first)]};
    Vec2 b{geo.px[static_cast<size_t>(segs[s].second)], geo.py[static_cast<size_t>(segs[s].second)]};
    double r = 0.5 * fig.limb_width * wscale[s];
    int x0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - r) * kSS)));
    int x1 = std::min(sw - 1, static_cast<int>(std::ceil((std::max(a.x, b.x) + r) * kSS)));
    int y0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - r) * kSS)));
    int y1 = std::min(sh - 1, static_cast<int>(std::ceil((std::max(a.y, b.y) + r) * kSS)));
    for (int sy = y0; sy <= y1; ++sy) {
      double py = (sy + 0.5) / kSS;
      for (int sx = x0; sx <= x1; ++sx) {
        double px = (sx + 0.5) / kSS;
        if (point_segment_dist({px, py}, a, b) <= r)
          hit[static_cast<size_t>(sy) * sw + sx] = 1;
      }
    }
  }

  Tensor cov({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int j = 0; j < kSS; ++j)
        for (int i = 0; i < kSS; ++i)
          n += hit[static_cast<size_t>(y * kSS + j) * sw + (x * kSS + i)];
      cov.at(y, x) = n / double(kSS * kSS);
    }
  return cov;
}

FlowField flow_between_geometries(const FigureGeometry& a, const FigureGeometry& b,
                                  const FigureSpec& fig, int h, int w, double width_scale) {
  const auto& segs = figure_segments();
  const auto& wscale = segment_width_scale();
  FigureSpec scaled = fig;
  scaled.limb_width = fig.limb_width * width_scale;
  Tensor cov = render_figure_coverage(a, scaled, h, w);

  FlowField flow(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (cov.at(y, x) <= 0) continue;
      Vec2 p{x + 0.5, y + 0.5};
      // Assign the pixel to its nearest capsule in frame a.
      size_t best = 0;
      double best_d = 1e30;
      for (size_t s = 0; s < segs.size(); ++s) {
        Vec2 sa{a.px[static_cast<size_t>(segs[s].first)], a.py[static_cast<size_t>(segs[s].first)]};
        Vec2 sb{a.px[static_cast<size_t>(segs[s].second)], a.py[static_cast<size_t>(segs[s].second)]};
        double d = point_segment_dist(p, sa, sb) / wscale[s];
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      Vec2 a0{a.px[static_cast<size_t>(segs[best].first)], a.py[static_cast<size_t>(segs[best].first)]};
      Vec2 a1{a.px[static_cast<size_t>(segs[best].second)], a.py[static_cast<size_t>(segs[best].second)]};
      Vec2 b0{b.px[static_cast<size_t>(segs[best].first)], b.py[static_cast<size_t>(segs[best].first)]};
      Vec2 b1{b.px[static_cast<size_t>(segs[best].second)], b.py[static_cast<size_t>(segs[best].second)]};
      Vec2 da = a1 - a0, db = b1 - b0;
      double la = len(da), lb = len(db);
      Vec2 q;
      if (la < 1e-9 || lb < 1e-9) {
        // Degenerate segment: pure translation of its anchor point.
        q = p + (b0 - a0);
      } else {
        // Similarity transform of the segment's local frame; exact for the
        // rigid articulation used here and for uniformly scaled poses.
        Vec2 ua{da.x / la, da.y / la}, na{-ua.y, ua.x};
        Vec2 ub{db.x / lb, db.y / lb}, nb{-ub.y, ub.x};
        double s = lb / la;
        double ca = dot(p - a0, ua), cn = dot(p - a0, na);
        q = b0 + (s * ca) * ub + (s * cn) * nb;
      }
      flow.u.at(y, x) = q.x - p.x;
      flow.v.at(y, x) = q.y - p.y;
    }
  }
  return flow;
}

FlowField flow_between_poses(const PersonPose& a, const PersonPose& b, int h, int w,
                             double limb_width, double width_scale) {
  FigureSpec fig;
  fig.limb_width = limb_width;
  return flow_between_geometries(geometry_from_pose(a), geometry_from_pose(b), fig, h, w,
                                 width_scale);
}

namespace {

void gaussian_blur_inplace(Tensor& img, double sigma) {
  if (sigma <= 0) return;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    k[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  const int h = img.dim(0), w = img.dim(1);
  Tensor tmp({h, w});
  // Horizontal pass, kernel renormalized over in-bounds taps.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0, norm = 0;
      for (int i = -radius; i <= radius; ++i) {
        int xx = x + i;
        if (xx < 0 || xx >= w) continue;
        acc += k[static_cast<size_t>(i + radius)] * img.at(y, xx);
        norm += k[static_cast<size_t>(i + radius)];
      }
      tmp.at(y, x) = acc / norm;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0, norm = 0;
      for (int i = -radius; i <= radius; ++i) {
        int yy = y + i;
        if (yy < 0 || yy >= h) continue;
        acc += k[static_cast<size_t>(i + radius)] * tmp.at(yy, x);
        norm += k[static_cast<size_t>(i + radius)];
      }
      img.at(y, x) = acc / norm;
    }
}

}  // namespace

SyntheticClip generate_synthetic_clip(const SyntheticSceneSpec& spec) {
  if (spec.delta < 1) throw std::invalid_argument("generate_synthetic_clip: delta must be >= 1");
  const int n = 2 * spec.delta + 1;
  const int h = spec.height, w = spec.width;

  std::vector<FigureGeometry> geos;
  geos.reserve(static_cast<size_t>(n));
  for (int f = 0; f < n; ++f) {
    FigureGeometry g = figure_at_frame(spec, f);
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    for (int i = 0; i < 16; ++i) {
      x0 = std::min(x0, g.px[static_cast<size_t>(i)]);
      x1 = std::max(x1, g.px[static_cast<size_t>(i)]);
      y0 = std::min(y0, g.py[static_cast<size_t>(i)]);
      y1 = std::max(y1, g.py[static_cast<size_t>(i)]);
    }
    double m = 0.5 * spec.figure.limb_width * 3.0;  // widest capsule radius
    if (x1 + m < 0 || x0 - m >= w || y1 + m < 0 || y0 - m >= h)
      throw std::invalid_argument("generate_synthetic_clip: figure left the canvas entirely");
    geos.push_back(g);
  }

  SyntheticClip out;
  out.clip.delta = spec.delta;
  out.clip.keyframe_index = spec.delta;
  out.clip.meta.occluded = spec.occluder.has_value();
  out.clip.meta.defocused = spec.blur_sigma > 0;

  Rng rng(spec.seed);
  for (int f = 0; f < n; ++f) {
    Tensor cov = render_figure_coverage(geos[static_cast<size_t>(f)], spec.figure, h, w);
    Tensor img({1, h, w});
    for (int i = 0; i < h * w; ++i) img[i] = cov[i];
    if (spec.occluder) {
      const OccluderSpec& oc = *spec.occluder;
      Rect box{oc.box.x + f * oc.vx, oc.box.y + f * oc.vy, oc.box.w, oc.box.h};
      int bx0 = std::max(0, static_cast<int>(std::floor(box.x)));
      int bx1 = std::min(w, static_cast<int>(std::ceil(box.x + box.w)));
      int by0 = std::max(0, static_cast<int>(std::floor(box.y)));
      int by1 = std::min(h, static_cast<int>(std::ceil(box.y + box.h)));
      for (int y = by0; y < by1; ++y)
        for (int x = bx0; x < bx1; ++x) img[y * w + x] = oc.intensity;
    }
    if (spec.blur_sigma > 0) {
      Tensor plane({h, w});
      for (int i = 0; i < h * w; ++i) plane[i] = img[i];
      gaussian_blur_inplace(plane, spec.blur_sigma);
      for (int i = 0; i < h * w; ++i) img[i] = plane[i];
    }
    if (spec.noise_sigma > 0)
      for (int i = 0; i < h * w; ++i) img[i] += spec.noise_sigma * rng.normal();
    for (int i = 0; i < h * w; ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
    out.clip.frames.push_back(std::move(img));

    PersonPose pose;
    for (int j = 0; j < kNumJoints; ++j) {
      Keypoint& kp = pose.keypoints[static_cast<size_t>(j)];
      kp.x = geos[static_cast<size_t>(f)].px[static_cast<size_t>(j)];
      kp.y = geos[static_cast<size_t>(f)].py[static_cast<size_t>(j)];
      kp.visible = kp.x >= 0 && kp.x < w && kp.y >= 0 && kp.y < h;
    }
    out.poses.push_back(std::move(pose));
  }

  for (int f = 0; f + 1 < n; ++f)
    out.flows.push_back(flow_between_geometries(geos[static_cast<size_t>(f)],
                                                geos[static_cast<size_t>(f + 1)], spec.figure,
                                                h, w));

  auto box = out.poses[static_cast<size_t>(spec.delta)].visible_bbox();
  if (!box)
    throw std::invalid_argument("generate_synthetic_clip: no visible joints in the keyframe");
  out.clip.person_box = *box;
  return out;
}

}  // namespace jmpose
