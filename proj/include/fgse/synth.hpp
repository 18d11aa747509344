#pragma once

#include <string>
#include <vector>

#include "fgse/dataset.hpp"
#include "fgse/scene_graph.hpp"

namespace fgse {

/// Scripted manipulation actions; the label vocabulary of every generated
/// episode, in this order.
enum class ActionType { idle, approach, lift, hold, pour, place, retreat, drink };
inline constexpr int kActionCount = 8;
const char* action_name(ActionType a);

struct ScriptObject {
  std::string name;
  Box3 box;
  HandRole hand = HandRole::none;
};

struct Segment {
  ActionType action = ActionType::idle;
  int target = -1;      // object index the hand works on
  int aux_target = -1;  // pour destination
  int duration = 0;     // frames, >= 3
};

/// A deterministic episode script: desk objects with initial poses and one
/// segment list per hand. Both lists must tile the same episode length.
struct ScenarioScript {
  std::vector<ScriptObject> objects;
  std::vector<Segment> left;
  std::vector<Segment> right;
  float noise_sigma = 0.005f;  // center jitter, m
  unsigned seed = 0;
  float fps = 15.0f;
  int subject = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Hands follow piecewise-linear trajectories realizing each segment:
/// approach closes in on a hover point above the target; lift snaps to
/// contact and raises the grasped object; hold keeps it still; pour hovers
/// it above the destination with a small wiggle; place lowers and releases;
/// retreat pops the hand off contact and returns to rest; drink carries the
/// object to the face anchor. Per-frame Gaussian jitter is added to every
/// emitted box center; graphs come from build_scene_graph over consecutive
/// noisy frames and labels are the scripted actions. Bit-identical per seed.
/// Throws when both hands would grasp one object at once.
GraphSequence generate_episode(const ScenarioScript& script, const RelationThresholds& cfg = {});

struct SuiteProfile {
  int base_duration = 18;      // frames per segment before speed scaling
  float noise_sigma = 0.005f;  // the hard profile raises this to 0.02
  float fps = 15.0f;
};

/// Named profiles: "default", "long" (extended segment durations), "hard"
/// (2 cm jitter).
SuiteProfile suite_profile(const std::string& name);

/// Desk-scale benchmark: subjects differ by speed (x0.8..x1.2) and a
/// workspace shift; every episode covers all eight actions on both hands.
/// Requires n_subjects >= 2.
EpisodeDataset generate_benchmark_suite(int n_subjects, int episodes_per_subject, unsigned seed,
                                        const SuiteProfile& profile = {},
                                        const RelationThresholds& cfg = {});

}  // namespace fgse
