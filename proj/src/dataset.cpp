#include "jmpose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace jmpose {

namespace {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const void* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace

void write_pgm16(const std::string& path, const Tensor& gray_hw) {
  if (gray_hw.ndim() != 2) throw std::invalid_argument("write_pgm16: expected (H,W)");
  const int h = gray_hw.dim(0), w = gray_hw.dim(1);
  std::ostringstream head;
  head << "P5\n" << w << " " << h << "\n65535\n";
  std::string hs = head.str();
  std::vector<uint8_t> buf(hs.begin(), hs.end());
  buf.reserve(hs.size() + static_cast<size_t>(h) * w * 2);
  for (int i = 0; i < h * w; ++i) {
    double v = std::clamp(gray_hw[i], 0.0, 1.0);
    auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
    buf.push_back(static_cast<uint8_t>(q >> 8));  // PGM samples are big-endian
    buf.push_back(static_cast<uint8_t>(q & 0xff));
  }
  write_file(path, buf.data(), buf.size());
}

Tensor read_pgm16(const std::string& path) {
  std::vector<char> data = read_file(path);
  // Parse the three header tokens (magic, width, height, maxval), skipping
  // whitespace and # comments.
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return std::string(data.begin() + static_cast<long>(start), data.begin() + static_cast<long>(pos));
  };
  if (next_token() != "P5") throw std::runtime_error("read_pgm16: not a P5 file: " + path);
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  ++pos;  // single whitespace after maxval
  if (maxval != 65535) throw std::runtime_error("read_pgm16: expected 16-bit maxval in " + path);
  if (data.size() - pos < static_cast<size_t>(h) * w * 2)
    throw std::runtime_error("read_pgm16: truncated file " + path);
  Tensor out({h, w});
  const auto* p = reinterpret_cast<const uint8_t*>(data.data() + pos);
  for (int i = 0; i < h * w; ++i) {
    uint16_t q = static_cast<uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    out[i] = q / 65535.0;
  }
  return out;
}

void write_jmfl(const std::string& path, const FlowField& flow) {
  const int h = flow.height(), w = flow.width();
  if (h > 65535 || w > 65535) throw std::invalid_argument("write_jmfl: field too large");
  std::vector<uint8_t> buf;
  buf.reserve(8 + static_cast<size_t>(h) * w * 8);
  buf.push_back('J');
  buf.push_back('M');
  buf.push_back('F');
  buf.push_back('L');
  auto push_u16 = [&](uint16_t v) {
    buf.push_back(static_cast<uint8_t>(v & 0xff));
    buf.push_back(static_cast<uint8_t>(v >> 8));
  };
  push_u16(static_cast<uint16_t>(h));
  push_u16(static_cast<uint16_t>(w));
  auto push_plane = [&](const Tensor& t) {
    for (int i = 0; i < h * w; ++i) {
      float f = static_cast<float>(t[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int k = 0; k < 4; ++k) buf.push_back(static_cast<uint8_t>((bits >> (8 * k)) & 0xff));
    }
  };
  push_plane(flow.u);
  push_plane(flow.v);
  write_file(path, buf.data(), buf.size());
}

FlowField read_jmfl(const std::string& path) {
  std::vector<char> data = read_file(path);
  if (data.size() < 8 || std::memcmp(data.data(), "JMFL", 4) != 0)
    throw std::runtime_error("read_jmfl: bad magic in " + path);
  const auto* p = reinterpret_cast<const uint8_t*>(data.data());
  int h = p[4] | (p[5] << 8);
  int w = p[6] | (p[7] << 8);
  if (data.size() != 8 + static_cast<size_t>(h) * w * 8)
    throw std::runtime_error("read_jmfl: size mismatch in " + path);
  FlowField flow(h, w);
  const uint8_t* q = p + 8;
  auto read_plane = [&](Tensor& t) {
    for (int i = 0; i < h * w; ++i) {
      uint32_t bits = static_cast<uint32_t>(q[0]) | (static_cast<uint32_t>(q[1]) << 8) |
                      (static_cast<uint32_t>(q[2]) << 16) | (static_cast<uint32_t>(q[3]) << 24);
      float f;
      std::memcpy(&f, &bits, 4);
      t[i] = f;
      q += 4;
    }
  };
  read_plane(flow.u);
  read_plane(flow.v);
  return flow;
}

namespace {

json pose_to_json(const PersonPose& p) {
  json arr = json::array();
  for (const auto& kp : p.keypoints) arr.push_back({kp.x, kp.y, kp.visible ? 1 : 0});
  return arr;
}

PersonPose pose_from_json(const json& arr) {
  PersonPose p;
  p.keypoints.clear();
  for (const auto& j : arr) {
    Keypoint kp;
    kp.x = j.at(0).get<double>();
    kp.y = j.at(1).get<double>();
    kp.visible = j.at(2).get<int>() != 0;
    p.keypoints.push_back(kp);
  }
  return p;
}

}  // namespace

void write_clip_dir(const std::string& dir, const ClipSample& sample) {
  sample.clip.validate();
  fs::create_directories(dir);
  const int n = sample.clip.num_frames();
  for (int f = 0; f < n; ++f) {
    const Tensor& img = sample.clip.frames[static_cast<size_t>(f)];
    if (img.dim(0) != 1)
      throw std::invalid_argument("write_clip_dir: only single-channel frames are stored");
    Tensor plane({img.dim(1), img.dim(2)});
    std::copy(img.ptr(), img.ptr() + img.size(), plane.ptr());
    write_pgm16(dir + "/" + format_index("frame_", f, 3) + ".pgm", plane);
  }
  json flow_files = json::array();
  for (size_t i = 0; i < sample.flows.size(); ++i) {
    std::string name = format_index("flow_", static_cast<int>(i), 3) + ".jmfl";
    write_jmfl(dir + "/" + name, sample.flows[i]);
    flow_files.push_back(name);
  }
  json meta = {{"occluded", sample.clip.meta.occluded},
               {"defocused", sample.clip.meta.defocused}};
  json poses = json::array();
  for (const auto& p : sample.poses) poses.push_back(pose_to_json(p));
  json doc = {{"delta", sample.clip.delta},
              {"keyframe_index", sample.clip.keyframe_index},
              {"person_box",
               {{"x", sample.clip.person_box.x},
                {"y", sample.clip.person_box.y},
                {"w", sample.clip.person_box.w},
                {"h", sample.clip.person_box.h}}},
              {"meta", meta},
              {"poses", poses},
              {"flow_files", flow_files}};
  std::ofstream out(dir + "/clip.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + dir + "/clip.json");
  out << doc.dump(2) << "\n";
}

ClipSample load_clip_dir(const std::string& dir, bool load_flows) {
  std::vector<char> raw = read_file(dir + "/clip.json");
  json doc = json::parse(raw.begin(), raw.end());
  ClipSample s;
  s.id = fs::path(dir).filename().string();
  s.clip.delta = doc.at("delta").get<int>();
  s.clip.keyframe_index = doc.at("keyframe_index").get<int>();
  const auto& box = doc.at("person_box");
  s.clip.person_box = Rect{box.at("x").get<double>(), box.at("y").get<double>(),
                           box.at("w").get<double>(), box.at("h").get<double>()};
  s.clip.meta.occluded = doc.at("meta").at("occluded").get<bool>();
  s.clip.meta.defocused = doc.at("meta").at("defocused").get<bool>();
  for (const auto& p : doc.at("poses")) s.poses.push_back(pose_from_json(p));

  const int n = 2 * s.clip.delta + 1;
  for (int f = 0; f < n; ++f) {
    Tensor plane = read_pgm16(dir + "/" + format_index("frame_", f, 3) + ".pgm");
    Tensor img({1, plane.dim(0), plane.dim(1)});
    std::copy(plane.ptr(), plane.ptr() + plane.size(), img.ptr());
    s.clip.frames.push_back(std::move(img));
  }
  if (load_flows)
    for (const auto& name : doc.at("flow_files"))
      s.flows.push_back(read_jmfl(dir + "/" + name.get<std::string>()));
  s.clip.validate();
  return s;
}

std::vector<ClipSample> load_dataset(const std::string& dir, bool load_flows) {
  if (!fs::is_directory(dir)) throw std::runtime_error("load_dataset: no such directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("clip_", 0) == 0)
      names.push_back(e.path().string());
  std::sort(names.begin(), names.end());
  std::vector<ClipSample> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(load_clip_dir(n, load_flows));
  return out;
}

std::vector<size_t> select_challenging_subset(const std::vector<ClipSample>& clips) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < clips.size(); ++i)
    if (clips[i].clip.meta.occluded || clips[i].clip.meta.defocused) idx.push_back(i);
  return idx;
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  DatasetSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("dataset spec line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    try {
      if (key == "clips_train") spec.clips_train = std::stoi(val);
      else if (key == "clips_val") spec.clips_val = std::stoi(val);
      else if (key == "seed") spec.seed = std::stoull(val);
      else if (key == "image_width") spec.image_width = std::stoi(val);
      else if (key == "image_height") spec.image_height = std::stoi(val);
      else if (key == "delta") spec.delta = std::stoi(val);
      else if (key == "occluded_fraction") spec.occluded_fraction = std::stod(val);
      else if (key == "defocused_fraction") spec.defocused_fraction = std::stod(val);
      else if (key == "noise_sigma") spec.noise_sigma = std::stod(val);
      else if (key == "max_speed") spec.max_speed = std::stod(val);
      else if (key == "max_limb_rate") spec.max_limb_rate = std::stod(val);
      else throw ConfigError("dataset spec: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("dataset spec: bad value for '" + key + "': " + val);
    }
  }
  if (spec.clips_train < 0 || spec.clips_val < 0 || spec.delta < 1)
    throw ConfigError("dataset spec: invalid counts");
  return spec;
}

DatasetSpec load_dataset_spec(const std::string& path) {
  std::vector<char> data = read_file(path);
  return parse_dataset_spec(std::string(data.begin(), data.end()));
}

SyntheticSceneSpec sample_scene(Rng& rng, const DatasetSpec& spec, bool occluded,
                                bool defocused) {
  SyntheticSceneSpec s;
  s.width = spec.image_width;
  s.height = spec.image_height;
  s.delta = spec.delta;
  s.noise_sigma = spec.noise_sigma;
  s.seed = rng.next_u64();

  double scale = rng.uniform(0.8, 1.1);
  s.figure.torso_len *= scale;
  s.figure.head_len *= scale;
  s.figure.upper_arm *= scale;
  s.figure.forearm *= scale;
  s.figure.thigh *= scale;
  s.figure.shin *= scale;
  s.figure.shoulder_half *= scale;
  s.figure.hip_half *= scale;

  const int n = 2 * spec.delta + 1;
  for (int attempt = 0; attempt < 60; ++attempt) {
    s.root_x = spec.image_width * rng.uniform(0.35, 0.65);
    s.root_y = spec.image_height * rng.uniform(0.5, 0.68);
    double speed = rng.uniform(0.3, spec.max_speed);
    double dir = rng.uniform(0, 2 * M_PI);
    s.root_vx = speed * std::cos(dir);
    s.root_vy = speed * std::sin(dir);

    s.pose0.torso = rng.uniform(-0.3, 0.3);
    s.pose0.head = rng.uniform(-0.25, 0.25);
    s.pose0.l_upper_arm = rng.uniform(0.15, 1.0);
    s.pose0.r_upper_arm = rng.uniform(-1.0, -0.15);
    s.pose0.l_forearm = rng.uniform(-0.2, 0.8);
    s.pose0.r_forearm = rng.uniform(-0.8, 0.2);
    s.pose0.l_thigh = rng.uniform(0.05, 0.5);
    s.pose0.r_thigh = rng.uniform(-0.5, -0.05);
    s.pose0.l_shin = rng.uniform(-0.3, 0.15);
    s.pose0.r_shin = rng.uniform(-0.15, 0.3);

    s.angular_velocity.torso = rng.uniform(-0.05, 0.05);
    s.angular_velocity.head = rng.uniform(-0.08, 0.08);
    for (int i = 2; i < FigureAngles::kCount; ++i)
      s.angular_velocity[i] = rng.uniform(-spec.max_limb_rate, spec.max_limb_rate);

    // Keep most of the keyframe visible; the figure may still clip an edge in
    // the supporting frames.
    bool ok = true;
    for (int f = 0; f < n && ok; ++f) {
      FigureGeometry g = figure_at_frame(s, f);
      int inside = 0;
      for (int j = 0; j < kNumJoints; ++j)
        if (g.px[static_cast<size_t>(j)] >= 2 && g.px[static_cast<size_t>(j)] < spec.image_width - 2 &&
            g.py[static_cast<size_t>(j)] >= 2 && g.py[static_cast<size_t>(j)] < spec.image_height - 2)
          ++inside;
      if (inside < (f == spec.delta ? kNumJoints : 9)) ok = false;
    }
    if (ok) break;
    if (attempt == 58) {  // fall back to a static centered figure
      s.root_vx = s.root_vy = 0;
      s.root_x = spec.image_width * 0.5;
      s.root_y = spec.image_height * 0.58;
    }
  }

  if (defocused) s.blur_sigma = rng.uniform(1.0, 2.0);
  if (occluded) {
    FigureGeometry g = figure_at_frame(s, spec.delta);
    int j = rng.uniform_int(kNumJoints);
    double w = rng.uniform(0.22, 0.4) * spec.image_width;
    double h = rng.uniform(0.22, 0.4) * spec.image_height;
    OccluderSpec oc;
    oc.box = Rect{g.px[static_cast<size_t>(j)] - 0.5 * w, g.py[static_cast<size_t>(j)] - 0.5 * h, w, h};
    oc.vx = rng.uniform(-1.0, 1.0);
    oc.vy = rng.uniform(-1.0, 1.0);
    oc.intensity = rng.uniform(0.45, 0.7);
    s.occluder = oc;
  }
  return s;
}

namespace {

void generate_split(Rng& rng, const DatasetSpec& spec, int count, const std::string& dir) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    bool occ = rng.bernoulli(spec.occluded_fraction);
    bool blur = rng.bernoulli(spec.defocused_fraction);
    SyntheticSceneSpec scene = sample_scene(rng, spec, occ, blur);
    SyntheticClip clip = generate_synthetic_clip(scene);
    ClipSample s;
    s.clip = std::move(clip.clip);
    s.poses = std::move(clip.poses);
    s.flows = std::move(clip.flows);
    s.id = format_index("clip_", i, 4);
    write_clip_dir(dir + "/" + s.id, s);
  }
}

}  // namespace

void generate_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  Rng rng(spec.seed);
  generate_split(rng, spec, spec.clips_train, out_dir + "/train");
  generate_split(rng, spec, spec.clips_val, out_dir + "/val");
}

std::vector<AnnotatedImage> load_posetrack_annotations(const std::string& json_path) {
  std::vector<char> data = read_file(json_path);
  json doc = json::parse(data.begin(), data.end());
  std::map<int64_t, AnnotatedImage> by_id;
  for (const auto& img : doc.at("images")) {
    AnnotatedImage a;
    a.image_id = img.at("id").get<int64_t>();
    a.file_name = img.value("file_name", std::string());
    by_id[a.image_id] = std::move(a);
  }
  for (const auto& ann : doc.at("annotations")) {
    int64_t id = ann.at("image_id").get<int64_t>();
    auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    const auto& kps = ann.at("keypoints");
    PersonPose pose;
    pose.keypoints.clear();
    for (size_t i = 0; i + 3 <= kps.size(); i += 3) {
      Keypoint kp;
      kp.x = kps.at(i).get<double>();
      kp.y = kps.at(i + 1).get<double>();
      kp.visible = kps.at(i + 2).get<double>() > 0;
      pose.keypoints.push_back(kp);
    }
    it->second.poses.push_back(std::move(pose));
    Rect box;
    if (ann.contains("bbox")) {
      const auto& b = ann.at("bbox");
      box = Rect{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                 b.at(3).get<double>()};
    }
    it->second.boxes.push_back(box);
  }
  std::vector<AnnotatedImage> out;
  out.reserve(by_id.size());
  for (auto& [id, img] : by_id) out.push_back(std::move(img));
  return out;
}

}  // namespace jmpose
