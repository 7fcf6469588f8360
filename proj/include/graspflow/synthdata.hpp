#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "graspflow/geometry.hpp"
#include "graspflow/rng.hpp"

namespace graspflow {

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ShapeClass { kBar, kTee, kEll, kDisc };

inline constexpr int kShapeCount = 4;

std::string shape_name(ShapeClass c);
ShapeClass shape_from_name(const std::string& name);

// Canonical grasp rectangles per named part, in the object frame at unit
// scale. A part may admit more than one valid grasp (the bar body has two
// symmetric ones).
struct PartSpec {
  std::string name;
  std::vector<GraspPose> grasps;
};

struct ShapeSpec {
  ShapeClass cls;
  double bounding_radius;  // every part corner lies within this radius
  std::vector<PartSpec> parts;
};

const std::vector<ShapeSpec>& shape_catalog();
const ShapeSpec& shape_spec(ShapeClass c);

// (shape, part) combinations excluded from seen-split data; evaluation on
// them probes compositional generalization
const std::vector<std::pair<ShapeClass, std::string>>& held_out_combos();
bool is_held_out(ShapeClass c, const std::string& part);

struct SceneObject {
  ShapeClass shape = ShapeClass::kBar;
  double px = 0.0;
  double py = 0.0;
  double scale = 1.0;
  double rotation = 0.0;
};

struct Scene {
  double extent = 100.0;
  std::vector<SceneObject> objects;
};

struct Prompt {
  int object_index = 0;
  std::string part_name;
  std::string text;  // "grasp the {shape} at its {part}"
};

// conditioning vector layout: 4 scene slots x 16 descriptor dims, then a
// 32-dim hashed prompt embedding with unit L2 norm
inline constexpr int kSceneSlots = 4;
inline constexpr int kSlotDim = 16;
inline constexpr int kPromptEmbedDim = 32;
inline constexpr int kConditionDim = kSceneSlots * kSlotDim + kPromptEmbedDim;

struct Sample {
  Scene scene;
  Prompt prompt;
  Eigen::VectorXd condition;          // dim kConditionDim
  std::vector<GraspPose> gt_grasps;   // scene units
  std::string split_tag;              // "seen" | "unseen"
};

struct SynthConfig {
  double extent = 100.0;
  int k_max = 2;                 // objects per scene drawn uniformly from 1..k_max
  double scale_min = 12.0;       // scene units
  double scale_max = 22.0;
  double rotation_limit = 1.3;   // |rotation| bound, radians; stays away from the
                                 // angle wrap so theta regression is single-valued
  double unseen_fraction = 0.0;  // deterministic share of held-out-combo samples

  void validate() const;  // throws std::invalid_argument
};

// minimum pairwise center distance, as a fraction of extent
inline constexpr double kMinSeparationFrac = 0.15;

// Rejection-samples placements until the separation constraint holds (at most
// 1000 attempts overall, then GenerationError). Objects keep a margin of
// 0.65 * scale from the workspace edge so every grasp rectangle stays inside.
Scene generate_scene(RandomStream& rng, const SynthConfig& config);

Prompt make_prompt(const Scene& scene, int object_index, const std::string& part_name);

// canonical part grasps carried through the object's scale/rotation/position;
// unknown part or bad index throws std::invalid_argument
std::vector<GraspPose> ground_truth_grasp(const Scene& scene, const Prompt& prompt);

// Deterministic conditioning stand-in for the vision-language stack. Scene
// block: per-object (px/E, py/E, scale/E, sin rot, cos rot, shape one-hot),
// zero-padded to 4 slots. Prompt block: unit vector seeded by the hash of
// "{shape}|{part}|{object_index}".
Eigen::VectorXd encode_condition(const Scene& scene, const Prompt& prompt);

// Fully deterministic sample from its own seed; `unseen` picks the prompt
// from held-out combos (re-drawing the scene until one is present).
Sample generate_sample(const SynthConfig& config, uint64_t sample_seed, bool unseen);

std::string sample_to_json_line(const Sample& sample);
Sample sample_from_json_line(const std::string& line);

// Writes out_dir/samples.jsonl (one sample per line) and out_dir/manifest.json.
// Per-sample seeds derive from (seed, index) so any sharding or resumption
// yields identical bytes; the unseen share is an exact deterministic
// interleave of round(n * unseen_fraction) samples.
void build_dataset(const std::filesystem::path& out_dir, int n, const SynthConfig& config,
                   uint64_t seed);

// accepts the samples.jsonl path or the dataset directory
std::vector<Sample> load_dataset(const std::filesystem::path& path);

// flat key=value file for generator settings; unknown keys are named in the
// thrown error
SynthConfig parse_synth_config(const std::filesystem::path& path);

}  // namespace graspflow
