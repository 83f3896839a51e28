#pragma once

#include <string>
#include <vector>

#include "jmpose/clip_sample.hpp"
#include "jmpose/synthetic.hpp"

namespace jmpose {

// ---- primitive file formats ----

/// 16-bit binary PGM (P5), values quantized from [0,1].
void write_pgm16(const std::string& path, const Tensor& gray_hw);
Tensor read_pgm16(const std::string& path);

/// Raw flow file: 8-byte header (magic "JMFL", u16 height, u16 width, both
/// little-endian) followed by the u plane then the v plane as little-endian
/// float32, row-major.
void write_jmfl(const std::string& path, const FlowField& flow);
FlowField read_jmfl(const std::string& path);

// ---- clip directories ----

/// Writes one clip directory: frame_000..frame_{2*delta} as PGM, consecutive
/// pair flows as flow_000.. and the annotation file clip.json.
void write_clip_dir(const std::string& dir, const ClipSample& sample);

/// Loads a clip directory; `load_flows` skips reading the flow files (the
/// oracle provider does not need them).
ClipSample load_clip_dir(const std::string& dir, bool load_flows);

/// Loads every clip_* subdirectory of `dir`, sorted by name.
std::vector<ClipSample> load_dataset(const std::string& dir, bool load_flows);

/// Indices of the clips whose meta marks them occluded or defocused.
std::vector<size_t> select_challenging_subset(const std::vector<ClipSample>& clips);

// ---- synthetic dataset generation ----

/// Ranges for randomly sampled scenes; parsed from a key=value spec file.
struct DatasetSpec {
  int clips_train = 500;
  int clips_val = 120;
  uint64_t seed = 7;
  int image_width = 96;
  int image_height = 72;
  int delta = 2;
  double occluded_fraction = 0.18;
  double defocused_fraction = 0.18;
  double noise_sigma = 0.01;
  double max_speed = 3.0;       // px/frame root translation
  double max_limb_rate = 0.18;  // rad/frame
};

DatasetSpec parse_dataset_spec(const std::string& text);
DatasetSpec load_dataset_spec(const std::string& path);

/// Draws one scene; `occluded`/`defocused` force the respective challenge.
SyntheticSceneSpec sample_scene(Rng& rng, const DatasetSpec& spec, bool occluded,
                                bool defocused);

/// Generates DIR/train/clip_NNNN and DIR/val/clip_NNNN. Deterministic in the
/// spec (including its seed).
void generate_dataset(const DatasetSpec& spec, const std::string& out_dir);

// ---- adapter for PoseTrack-style annotation JSON ----

struct AnnotatedImage {
  std::string file_name;
  int64_t image_id = 0;
  std::vector<PersonPose> poses;
  std::vector<Rect> boxes;
};

/// Reads a PoseTrack-style annotation file ({"images":[...],
/// "annotations":[{"image_id","keypoints":[x,y,v]*K,"bbox":[x,y,w,h]}]})
/// into the in-memory pose types.
std::vector<AnnotatedImage> load_posetrack_annotations(const std::string& json_path);

}  // namespace jmpose
