#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fgse {

/// Frozen 14-relation vocabulary. The index order below is the published
/// bit order of every RelationVector, the native file format, and every
/// checkpoint; it must never be reordered.
enum class Relation : int {
  touching = 0,
  above = 1,
  below = 2,
  inside = 3,
  surround = 4,
  around = 5,
  left_of = 6,
  right_of = 7,
  getting_close = 8,
  moving_apart = 9,
  moving_together = 10,
  halting_together = 11,
  fixed_moving_together = 12,
  stable = 13,
};

inline constexpr int kRelationCount = 14;
extern const std::array<const char*, kRelationCount> kRelationNames;

/// Relation name -> bit index, or -1 when unknown.
int relation_index(const std::string& name);

/// 14-bit spatiotemporal relation vector.
/// Mutually exclusive groups: {above, below}, {inside, surround},
/// {getting_close, moving_apart, stable}.
struct RelationVector {
  std::bitset<kRelationCount> bits;

  bool test(Relation r) const { return bits.test(static_cast<std::size_t>(r)); }
  void set(Relation r, bool v = true) { bits.set(static_cast<std::size_t>(r), v); }
  bool any() const { return bits.any(); }
  bool operator==(const RelationVector&) const = default;

  /// True when no exclusive group has two bits set.
  bool groups_exclusive() const;
};

enum class HandRole : std::uint8_t { none = 0, left = 1, right = 2 };

const char* hand_role_name(HandRole role);
std::optional<HandRole> hand_role_from_name(const std::string& name);

/// Axis-aligned box: center plus full side lengths, meters.
/// Axes: x lateral (left/right), y depth, z up.
struct Box3 {
  std::array<float, 3> center{0, 0, 0};
  std::array<float, 3> extent{0, 0, 0};

  float lo(int axis) const { return center[axis] - 0.5f * extent[axis]; }
  float hi(int axis) const { return center[axis] + 0.5f * extent[axis]; }
  float volume() const { return extent[0] * extent[1] * extent[2]; }
};

float center_distance(const Box3& a, const Box3& b);
/// Euclidean separation between the boxes' surfaces; 0 when they overlap.
float box_gap(const Box3& a, const Box3& b);
float intersection_volume(const Box3& a, const Box3& b);

/// One tracked object in one frame.
struct ObjectTrack {
  int object_id = 0;
  int category = 0;
  Box3 box;
  HandRole hand = HandRole::none;
};

/// Geometry thresholds for relation extraction. All values are config keys;
/// the defaults are desk-scale.
struct RelationThresholds {
  float contact_tolerance = 0.02f;   // box inflation for touching, m
  float motion_epsilon = 0.01f;      // per-frame displacement floor, m
  float containment_ratio = 0.9f;    // inside/surround volume fraction
  float max_edge_distance = 1.5f;    // pairs farther apart get no edge, m
  float vertical_gap_max = 0.5f;     // above/below proximity limit, m
  float lateral_gap_max = 0.5f;      // left-of/right-of proximity limit, m
};

struct SceneGraphNode {
  int object_id = 0;
  int category = 0;
  HandRole hand = HandRole::none;
};

struct SceneGraphEdge {
  int src_id = 0;
  int dst_id = 0;
  RelationVector rel;
};

/// One frame's symbolic graph: objects as nodes, directed 14-bit relation
/// edges. Edges reference object ids, not node positions, so node order is
/// free to permute.
struct SceneGraph {
  int time_index = 0;
  std::vector<SceneGraphNode> nodes;
  std::vector<SceneGraphEdge> edges;

  int node_row(int object_id) const;  // -1 when absent
};

/// Time-ordered labeled graph stream; labels[head][frame].
struct GraphSequence {
  std::vector<SceneGraph> graphs;
  std::vector<std::vector<int>> labels;
  int subject = 0;
  float fps = 30.0f;

  int head_count() const { return static_cast<int>(labels.size()); }
  int length() const { return static_cast<int>(graphs.size()); }
};

/// Static/spatial bits for the ordered pair (a, b) of one frame:
///   touching  — surface gap <= contact_tolerance (symmetric; nested boxes
///               count as touching);
///   above     — horizontal projections overlap and a's bottom sits within
///               [-contact_tolerance, vertical_gap_max] of b's top;
///   below     — above(b, a);
///   inside    — vol(a∩b)/vol(a) >= containment_ratio and vol(a) < vol(b);
///   surround  — inside(b, a);
///   around    — interiors overlap without either containment direction;
///   left_of   — y/z projections overlap, a lies strictly left with an x gap
///               <= lateral_gap_max; right_of mirrored.
RelationVector compute_static_relations(const ObjectTrack& a, const ObjectTrack& b,
                                        const RelationThresholds& cfg = {});

/// Dynamic/temporal bits for the pair (a, b) across consecutive frames,
/// from center displacements (symmetric between the two edge directions):
///   getting_close / moving_apart — center distance changed by >= motion_epsilon;
///   stable           — distance unchanged and not touching;
///   moving_together  — both displaced >= motion_epsilon, distance unchanged,
///                      touching now;
///   halting_together — both displaced < motion_epsilon while touching;
///   fixed_moving_together — moving_together with a rigid relative offset and
///                      contact already present in the previous frame.
RelationVector compute_dynamic_relations(const ObjectTrack& a_prev, const ObjectTrack& a_cur,
                                         const ObjectTrack& b_prev, const ObjectTrack& b_cur,
                                         const RelationThresholds& cfg = {});

/// Builds one frame's graph. Pairs whose center distance exceeds
/// max_edge_distance contribute no edge; qualifying pairs contribute both
/// directed edges. Dynamic bits need the previous frame; without it (or
/// when an object is new) only static bits are produced. Edges with no set
/// bit are still emitted so the model sees the "no relation" vector.
/// Throws std::invalid_argument on an empty frame, duplicate object ids, or
/// non-positive box extents.
SceneGraph build_scene_graph(std::span<const ObjectTrack> frame,
                             std::span<const ObjectTrack> prev_frame,
                             const RelationThresholds& cfg = {}, int time_index = 0);

/// Invariant check used by ingestion and tests; throws on violation.
void validate_scene_graph(const SceneGraph& g, int n_categories);

}  // namespace fgse
