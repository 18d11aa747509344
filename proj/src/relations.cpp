#include "fgse/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace fgse {

const std::array<const char*, kRelationCount> kRelationNames = {
    "touching",        "above",          "below",           "inside",
    "surround",        "around",         "left-of",         "right-of",
    "getting-close",   "moving-apart",   "moving-together", "halting-together",
    "fixed-moving-together", "stable",
};

int relation_index(const std::string& name) {
  for (int i = 0; i < kRelationCount; ++i) {
    if (name == kRelationNames[i]) return i;
  }
  return -1;
}

bool RelationVector::groups_exclusive() const {
  const int vertical = test(Relation::above) + test(Relation::below);
  const int contain = test(Relation::inside) + test(Relation::surround);
  const int distance =
      test(Relation::getting_close) + test(Relation::moving_apart) + test(Relation::stable);
  return vertical <= 1 && contain <= 1 && distance <= 1;
}

const char* hand_role_name(HandRole role) {
  switch (role) {
    case HandRole::left: return "left";
    case HandRole::right: return "right";
    default: return "none";
  }
}

std::optional<HandRole> hand_role_from_name(const std::string& name) {
  if (name == "none") return HandRole::none;
  if (name == "left") return HandRole::left;
  if (name == "right") return HandRole::right;
  return std::nullopt;
}

float center_distance(const Box3& a, const Box3& b) {
  float acc = 0.0f;
  for (int i = 0; i < 3; ++i) {
    const float d = a.center[i] - b.center[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

float box_gap(const Box3& a, const Box3& b) {
  float acc = 0.0f;
  for (int i = 0; i < 3; ++i) {
    const float d = std::max({a.lo(i) - b.hi(i), b.lo(i) - a.hi(i), 0.0f});
    acc += d * d;
  }
  return std::sqrt(acc);
}

float intersection_volume(const Box3& a, const Box3& b) {
  float vol = 1.0f;
  for (int i = 0; i < 3; ++i) {
    const float lo = std::max(a.lo(i), b.lo(i));
    const float hi = std::min(a.hi(i), b.hi(i));
    if (hi <= lo) return 0.0f;
    vol *= hi - lo;
  }
  return vol;
}

namespace {

bool axis_overlap(const Box3& a, const Box3& b, int axis) {
  return a.lo(axis) <= b.hi(axis) && b.lo(axis) <= a.hi(axis);
}

// a's bottom within [-contact_tolerance, vertical_gap_max] of b's top, with
// horizontal overlap. Evaluated for both orderings so above(a,b) and
// below(b,a) use the exact same comparisons.
bool above_pred(const Box3& a, const Box3& b, const RelationThresholds& cfg) {
  if (!axis_overlap(a, b, 0) || !axis_overlap(a, b, 1)) return false;
  const float gap = a.lo(2) - b.hi(2);
  return gap >= -cfg.contact_tolerance && gap <= cfg.vertical_gap_max;
}

bool inside_pred(const Box3& a, const Box3& b, const RelationThresholds& cfg) {
  const float va = a.volume();
  const float vb = b.volume();
  if (va >= vb) return false;
  return intersection_volume(a, b) / va >= cfg.containment_ratio;
}

// a strictly left of b along x with depth/height overlap and a bounded gap.
bool left_of_pred(const Box3& a, const Box3& b, const RelationThresholds& cfg) {
  if (!axis_overlap(a, b, 1) || !axis_overlap(a, b, 2)) return false;
  const float gap = b.lo(0) - a.hi(0);
  return gap >= -cfg.contact_tolerance && gap <= cfg.lateral_gap_max;
}

void check_extents(const ObjectTrack& t) {
  for (int i = 0; i < 3; ++i) {
    if (!(t.box.extent[i] > 0.0f)) {
      throw std::invalid_argument("ObjectTrack " + std::to_string(t.object_id) +
                                  ": box extents must be strictly positive");
    }
  }
}

}  // namespace

RelationVector compute_static_relations(const ObjectTrack& a, const ObjectTrack& b,
                                        const RelationThresholds& cfg) {
  check_extents(a);
  check_extents(b);
  RelationVector rel;
  const bool touching = box_gap(a.box, b.box) <= cfg.contact_tolerance;
  rel.set(Relation::touching, touching);

  const bool a_inside = inside_pred(a.box, b.box, cfg);
  const bool b_inside = inside_pred(b.box, a.box, cfg);
  rel.set(Relation::inside, a_inside);
  rel.set(Relation::surround, b_inside);

  if (!a_inside && !b_inside) {
    // Joint decisions keep above(a,b) <=> below(b,a) exact even for thin
    // boxes that satisfy both orderings within the contact tolerance.
    bool a_above = above_pred(a.box, b.box, cfg);
    bool b_above = above_pred(b.box, a.box, cfg);
    if (a_above && b_above) {
      const bool keep_a = a.box.center[2] > b.box.center[2] ||
                          (a.box.center[2] == b.box.center[2] && a.object_id < b.object_id);
      (keep_a ? b_above : a_above) = false;
    }
    rel.set(Relation::above, a_above);
    rel.set(Relation::below, b_above);
    rel.set(Relation::around,
            intersection_volume(a.box, b.box) > 0.0f && !a_above && !b_above);

    bool a_left = left_of_pred(a.box, b.box, cfg);
    bool b_left = left_of_pred(b.box, a.box, cfg);
    if (a_left && b_left) {
      const bool keep_a = a.box.center[0] < b.box.center[0] ||
                          (a.box.center[0] == b.box.center[0] && a.object_id < b.object_id);
      (keep_a ? b_left : a_left) = false;
    }
    rel.set(Relation::left_of, a_left);
    rel.set(Relation::right_of, b_left);
  }
  return rel;
}

RelationVector compute_dynamic_relations(const ObjectTrack& a_prev, const ObjectTrack& a_cur,
                                         const ObjectTrack& b_prev, const ObjectTrack& b_cur,
                                         const RelationThresholds& cfg) {
  RelationVector rel;
  const float d_prev = center_distance(a_prev.box, b_prev.box);
  const float d_cur = center_distance(a_cur.box, b_cur.box);
  const float da = center_distance(a_prev.box, a_cur.box);
  const float db = center_distance(b_prev.box, b_cur.box);
  const bool a_moving = da >= cfg.motion_epsilon;
  const bool b_moving = db >= cfg.motion_epsilon;
  const bool distance_stable = std::fabs(d_cur - d_prev) < cfg.motion_epsilon;
  const bool touching_cur = box_gap(a_cur.box, b_cur.box) <= cfg.contact_tolerance;
  const bool touching_prev = box_gap(a_prev.box, b_prev.box) <= cfg.contact_tolerance;

  if (d_prev - d_cur >= cfg.motion_epsilon) {
    rel.set(Relation::getting_close);
  } else if (d_cur - d_prev >= cfg.motion_epsilon) {
    rel.set(Relation::moving_apart);
  } else if (!touching_cur) {
    rel.set(Relation::stable);
  }

  if (touching_cur) {
    if (a_moving && b_moving && distance_stable) {
      rel.set(Relation::moving_together);
      // Rigid attachment: the relative offset vector barely changed and the
      // contact already existed.
      float off_delta = 0.0f;
      for (int i = 0; i < 3; ++i) {
        const float prev_off = a_prev.box.center[i] - b_prev.box.center[i];
        const float cur_off = a_cur.box.center[i] - b_cur.box.center[i];
        off_delta += (cur_off - prev_off) * (cur_off - prev_off);
      }
      if (touching_prev && std::sqrt(off_delta) < cfg.motion_epsilon) {
        rel.set(Relation::fixed_moving_together);
      }
    } else if (!a_moving && !b_moving) {
      rel.set(Relation::halting_together);
    }
  }
  return rel;
}

SceneGraph build_scene_graph(std::span<const ObjectTrack> frame,
                             std::span<const ObjectTrack> prev_frame,
                             const RelationThresholds& cfg, int time_index) {
  if (frame.empty()) throw std::invalid_argument("build_scene_graph: empty frame");
  SceneGraph g;
  g.time_index = time_index;
  std::unordered_map<int, const ObjectTrack*> prev_by_id;
  for (const ObjectTrack& t : prev_frame) prev_by_id[t.object_id] = &t;

  for (const ObjectTrack& t : frame) {
    check_extents(t);
    if (g.node_row(t.object_id) >= 0) {
      throw std::invalid_argument("build_scene_graph: duplicate object_id " +
                                  std::to_string(t.object_id));
    }
    g.nodes.push_back({t.object_id, t.category, t.hand});
  }

  const int n = static_cast<int>(frame.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const ObjectTrack& a = frame[i];
      const ObjectTrack& b = frame[j];
      if (center_distance(a.box, b.box) > cfg.max_edge_distance) continue;

      RelationVector ab = compute_static_relations(a, b, cfg);
      RelationVector ba = compute_static_relations(b, a, cfg);
      auto ap = prev_by_id.find(a.object_id);
      auto bp = prev_by_id.find(b.object_id);
      if (ap != prev_by_id.end() && bp != prev_by_id.end()) {
        const RelationVector dyn = compute_dynamic_relations(*ap->second, a, *bp->second, b, cfg);
        ab.bits |= dyn.bits;
        ba.bits |= dyn.bits;
      }
      g.edges.push_back({a.object_id, b.object_id, ab});
      g.edges.push_back({b.object_id, a.object_id, ba});
    }
  }
  return g;
}

int SceneGraph::node_row(int object_id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].object_id == object_id) return static_cast<int>(i);
  }
  return -1;
}

void validate_scene_graph(const SceneGraph& g, int n_categories) {
  int left = 0, right = 0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const SceneGraphNode& n = g.nodes[i];
    for (std::size_t j = i + 1; j < g.nodes.size(); ++j) {
      if (g.nodes[j].object_id == n.object_id) {
        throw std::invalid_argument("scene graph: duplicate object_id " +
                                    std::to_string(n.object_id));
      }
    }
    if (n.category < 0 || n.category >= n_categories) {
      throw std::out_of_range("scene graph: category " + std::to_string(n.category) +
                              " outside vocabulary of size " + std::to_string(n_categories));
    }
    left += n.hand == HandRole::left;
    right += n.hand == HandRole::right;
  }
  if (left > 1 || right > 1) {
    throw std::invalid_argument("scene graph: more than one node per hand role");
  }
  for (const SceneGraphEdge& e : g.edges) {
    if (g.node_row(e.src_id) < 0 || g.node_row(e.dst_id) < 0) {
      throw std::invalid_argument("scene graph: edge endpoint not among nodes");
    }
    if (!e.rel.groups_exclusive()) {
      throw std::invalid_argument("scene graph: relation exclusivity violated on an edge");
    }
  }
}

}  // namespace fgse
