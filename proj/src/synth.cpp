#include "fgse/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fgse {

namespace {

constexpr float kHoverGap = 0.03f;     // approach stops short of contact
constexpr float kReleasePop = 0.05f;   // retreat's first-frame separation
constexpr float kPourGap = 0.06f;      // held object hovers this far above the destination
constexpr float kWiggle = 0.02f;       // pour oscillation amplitude

using Vec3 = std::array<float, 3>;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 lerp(const Vec3& a, const Vec3& b, float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

float uniform01(std::mt19937& rng) { return static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f); }

float gauss(std::mt19937& rng) {
  // Box-Muller; both draws taken so consumption stays fixed per call.
  float u1 = uniform01(rng);
  const float u2 = uniform01(rng);
  if (u1 < 1e-12f) u1 = 1e-12f;
  return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.2831853f * u2);
}

struct HandState {
  int node = -1;      // object index of the hand itself
  int grasped = -1;   // object index currently attached, or -1
  Vec3 rest{};        // home position
  Vec3 seg_start{};   // hand center at segment entry
  Vec3 goal{};        // segment motion target
  int seg_index = -1;
};

// Hand center that rests the hand's box on top of the target's box.
Vec3 grasp_point(const Vec3& target_center, float target_ez, float hand_ez, float gap) {
  return target_center + Vec3{0.0f, 0.0f, 0.5f * (target_ez + hand_ez) + gap};
}

}  // namespace

const char* action_name(ActionType a) {
  switch (a) {
    case ActionType::idle: return "idle";
    case ActionType::approach: return "approach";
    case ActionType::lift: return "lift";
    case ActionType::hold: return "hold";
    case ActionType::pour: return "pour";
    case ActionType::place: return "place";
    case ActionType::retreat: return "retreat";
    case ActionType::drink: return "drink";
  }
  return "?";
}

void ScenarioScript::validate() const {
  if (objects.empty()) throw std::invalid_argument("script: no objects");
  int left_total = 0, right_total = 0;
  for (const Segment& s : left) left_total += s.duration;
  for (const Segment& s : right) right_total += s.duration;
  if (left_total != right_total) {
    throw std::invalid_argument("script: hand segment lists tile different lengths");
  }
  if (left_total <= 0) throw std::invalid_argument("script: empty episode");
  auto check_segments = [&](const std::vector<Segment>& segs) {
    for (const Segment& s : segs) {
      if (s.duration < 3) throw std::invalid_argument("script: segment durations must be >= 3");
      const bool needs_target = s.action != ActionType::idle && s.action != ActionType::retreat;
      if (needs_target && (s.target < 0 || s.target >= static_cast<int>(objects.size()))) {
        throw std::invalid_argument("script: segment target outside object list");
      }
      if (s.action == ActionType::pour &&
          (s.aux_target < 0 || s.aux_target >= static_cast<int>(objects.size()))) {
        throw std::invalid_argument("script: pour needs an aux_target");
      }
    }
  };
  check_segments(left);
  check_segments(right);
  int hands = 0;
  for (const ScriptObject& o : objects) hands += o.hand != HandRole::none;
  if (hands != 2) throw std::invalid_argument("script: expected exactly two hand objects");
}

GraphSequence generate_episode(const ScenarioScript& script, const RelationThresholds& cfg) {
  script.validate();
  std::mt19937 rng(script.seed);

  const int n_obj = static_cast<int>(script.objects.size());
  std::vector<Vec3> pos(n_obj);
  for (int i = 0; i < n_obj; ++i) pos[i] = script.objects[i].box.center;

  HandState hands[2];  // [0] left, [1] right
  int face_index = -1;
  for (int i = 0; i < n_obj; ++i) {
    if (script.objects[i].hand == HandRole::left) hands[0].node = i;
    if (script.objects[i].hand == HandRole::right) hands[1].node = i;
    if (script.objects[i].name == "face") face_index = i;
  }
  hands[0].rest = pos[hands[0].node];
  hands[1].rest = pos[hands[1].node];

  const std::vector<Segment>* segs[2] = {&script.left, &script.right};
  int total = 0;
  for (const Segment& s : script.left) total += s.duration;

  GraphSequence seq;
  seq.subject = script.subject;
  seq.fps = script.fps;
  seq.labels.assign(2, {});

  auto ez = [&](int i) { return script.objects[i].box.extent[2]; };

  std::vector<ObjectTrack> prev_frame;
  int cursor[2] = {0, 0};
  int seg_frame[2] = {0, 0};

  for (int t = 0; t < total; ++t) {
    for (int h = 0; h < 2; ++h) {
      HandState& hs = hands[h];
      const std::vector<Segment>& list = *segs[h];
      if (hs.seg_index < 0 || seg_frame[h] >= list[cursor[h]].duration) {
        if (hs.seg_index >= 0) {
          ++cursor[h];
          seg_frame[h] = 0;
        }
        const Segment& s = list[cursor[h]];
        hs.seg_index = cursor[h];
        hs.seg_start = pos[hs.node];
        switch (s.action) {
          case ActionType::approach: {
            // Radial standoff: the hand heads straight at the target and
            // stops short of contact, so the center distance shrinks by a
            // full step every frame. The sqrt(3) factor keeps the box gap
            // above the contact tolerance even along diagonal rays.
            const Vec3 to_hand = pos[hs.node] - pos[s.target];
            const float dist = std::sqrt(to_hand[0] * to_hand[0] + to_hand[1] * to_hand[1] +
                                         to_hand[2] * to_hand[2]);
            float half_sum = 0.0f;
            for (int ax = 0; ax < 3; ++ax) {
              half_sum = std::max(half_sum, 0.5f * (script.objects[s.target].box.extent[ax] +
                                                    script.objects[hs.node].box.extent[ax]));
            }
            const float standoff = 1.7320508f * half_sum + kHoverGap;
            const float f = dist > 1e-6f ? standoff / dist : 1.0f;
            hs.goal = pos[s.target] + Vec3{to_hand[0] * f, to_hand[1] * f, to_hand[2] * f};
            break;
          }
          case ActionType::place: {
            // Set the carried object down a little to the side of where it is.
            const Vec3 obj = pos[s.target];
            hs.goal = Vec3{obj[0] + 0.10f, obj[1] + 0.05f,
                           0.5f * ez(s.target)};  // goal is the object's landing center
            break;
          }
          case ActionType::pour: {
            const Vec3 dest = pos[s.aux_target];
            hs.goal = dest + Vec3{0.0f, 0.0f,
                                  0.5f * (ez(s.aux_target) + ez(s.target)) + kPourGap};
            break;
          }
          case ActionType::drink:
            if (face_index < 0) throw std::invalid_argument("script: drink needs a face object");
            hs.goal = pos[face_index] -
                      Vec3{0.0f, 0.0f, 0.5f * (ez(face_index) + ez(s.target))};
            break;
          case ActionType::retreat:
            hs.goal = hs.rest;
            break;
          default:
            hs.goal = pos[hs.node];
        }
      }
      const Segment& s = list[cursor[h]];
      const int k = seg_frame[h] + 1;  // 1-based frame within the segment
      const int D = s.duration;
      Vec3 hand = pos[hs.node];
      int grasp_after = hs.grasped;

      switch (s.action) {
        case ActionType::idle:
        case ActionType::hold:
          break;
        case ActionType::approach:
          hand = lerp(hs.seg_start, hs.goal, static_cast<float>(k) / D);
          break;
        case ActionType::lift: {
          if (k == 1) {
            // Snap to contact; touching toggles exactly here. The grasp
            // binds after this frame so the object does not jump with the
            // snap.
            if (s.target == hands[1 - h].grasped) {
              throw std::invalid_argument("script: overlapping exclusive segments (both hands grasp object " +
                                          std::to_string(s.target) + ")");
            }
            hand = grasp_point(pos[s.target], ez(s.target), ez(hs.node), 0.0f);
            grasp_after = s.target;
            hs.seg_start = hand;
          } else {
            const float dz = std::max(0.012f, 0.12f / (D - 1));
            hand = pos[hs.node] + Vec3{0.0f, 0.0f, dz};
          }
          break;
        }
        case ActionType::pour: {
          const int travel = std::max(2, (2 * D) / 5);
          // Goal is where the held object should hover; carry the hand there.
          const Vec3 hand_goal =
              hs.goal + (pos[hs.node] - pos[s.target]);
          if (k <= travel) {
            hand = lerp(hs.seg_start, hand_goal, static_cast<float>(k) / travel);
          } else {
            hand = hand_goal + Vec3{(k % 2 == 0 ? kWiggle : -kWiggle), 0.0f, 0.0f};
          }
          break;
        }
        case ActionType::drink: {
          const int travel = std::max(2, (3 * D) / 5);
          const Vec3 hand_goal = hs.goal + (pos[hs.node] - pos[s.target]);
          if (k <= travel) hand = lerp(hs.seg_start, hand_goal, static_cast<float>(k) / travel);
          break;
        }
        case ActionType::place: {
          const Vec3 hand_goal = hs.goal + (pos[hs.node] - pos[s.target]);
          hand = lerp(hs.seg_start, hand_goal, static_cast<float>(k) / D);
          break;
        }
        case ActionType::retreat: {
          if (k == 1) {
            grasp_after = -1;  // release; pop clear of the contact tolerance
            hs.grasped = -1;
            hand = pos[hs.node] + Vec3{0.0f, 0.0f, kReleasePop};
            hs.seg_start = hand;
          } else {
            hand = lerp(hs.seg_start, hs.goal, static_cast<float>(k - 1) / (D - 1));
          }
          break;
        }
      }

      const Vec3 delta = hand - pos[hs.node];
      pos[hs.node] = hand;
      if (hs.grasped >= 0) pos[hs.grasped] = pos[hs.grasped] + delta;
      hs.grasped = grasp_after;

      seq.labels[h].push_back(static_cast<int>(s.action));
      ++seg_frame[h];
    }

    std::vector<ObjectTrack> frame(n_obj);
    for (int i = 0; i < n_obj; ++i) {
      frame[i].object_id = i;
      frame[i].category = i;  // suite vocabulary is one category per object
      frame[i].hand = script.objects[i].hand;
      frame[i].box.extent = script.objects[i].box.extent;
      frame[i].box.center = pos[i] + Vec3{script.noise_sigma * gauss(rng),
                                          script.noise_sigma * gauss(rng),
                                          script.noise_sigma * gauss(rng)};
    }
    seq.graphs.push_back(build_scene_graph(frame, prev_frame, cfg, t));
    prev_frame = std::move(frame);
  }
  return seq;
}

SuiteProfile suite_profile(const std::string& name) {
  if (name == "default") return {};
  if (name == "long") return {.base_duration = 36};
  if (name == "hard") return {.noise_sigma = 0.02f};
  throw std::invalid_argument("unknown suite profile '" + name +
                              "' (expected default, long or hard)");
}

EpisodeDataset generate_benchmark_suite(int n_subjects, int episodes_per_subject, unsigned seed,
                                        const SuiteProfile& profile,
                                        const RelationThresholds& cfg) {
  if (n_subjects < 2) throw std::invalid_argument("benchmark suite needs >= 2 subjects");
  if (episodes_per_subject < 1) throw std::invalid_argument("benchmark suite needs episodes");

  EpisodeDataset ds;
  ds.vocab.heads = 2;
  ds.vocab.objects = {"left_hand", "right_hand", "table", "face", "cup", "bottle", "bowl"};
  for (int a = 0; a < kActionCount; ++a) {
    ds.vocab.labels.push_back(action_name(static_cast<ActionType>(a)));
  }
  enum { kLeftHand = 0, kRightHand, kTable, kFace, kCup, kBottle, kBowl };

  for (int s = 0; s < n_subjects; ++s) {
    const float speed = 0.8f + 0.4f * static_cast<float>(s) / (n_subjects - 1);
    const float dx = (s - 0.5f * (n_subjects - 1)) * 0.04f;
    const float dy = (s - 0.5f * (n_subjects - 1)) * 0.02f;

    for (int e = 0; e < episodes_per_subject; ++e) {
      std::mt19937 rng(seed * 1000003u + static_cast<unsigned>(s) * 1009u +
                       static_cast<unsigned>(e));
      ScenarioScript script;
      script.seed = rng();
      script.noise_sigma = profile.noise_sigma;
      script.fps = profile.fps;
      script.subject = s;

      auto jitter = [&]() { return (uniform01(rng) - 0.5f) * 0.04f; };
      auto place_obj = [&](const char* name, Vec3 c, Vec3 ext, HandRole hand) {
        ScriptObject o;
        o.name = name;
        o.box.center = {c[0] + dx + jitter(), c[1] + dy + jitter(), c[2]};
        o.box.extent = ext;
        o.hand = hand;
        script.objects.push_back(o);
      };
      place_obj("left_hand", {-0.45f, 0.0f, 0.25f}, {0.09f, 0.09f, 0.09f}, HandRole::left);
      place_obj("right_hand", {0.45f, 0.0f, 0.25f}, {0.09f, 0.09f, 0.09f}, HandRole::right);
      place_obj("table", {0.0f, 0.35f, -0.05f}, {1.4f, 0.9f, 0.1f}, HandRole::none);
      place_obj("face", {0.0f, -0.05f, 0.45f}, {0.18f, 0.18f, 0.22f}, HandRole::none);
      place_obj("cup", {0.18f, 0.30f, 0.04f}, {0.08f, 0.08f, 0.08f}, HandRole::none);
      place_obj("bottle", {-0.18f, 0.32f, 0.07f}, {0.07f, 0.07f, 0.14f}, HandRole::none);
      place_obj("bowl", {0.0f, 0.45f, 0.035f}, {0.16f, 0.16f, 0.07f}, HandRole::none);

      auto duration = [&]() {
        const float scaled =
            profile.base_duration * speed * (0.85f + 0.3f * uniform01(rng));
        return std::max(5, static_cast<int>(std::lround(scaled)));
      };
      // Motion-bound segments keep their per-frame displacement above the
      // motion epsilon by capping the travel time; long profiles lengthen
      // the manipulation phases instead.
      auto travel_duration = [&](int cap) { return std::min(cap, duration()); };
      auto scaffold = [&](int held, int dest) {
        // hold always follows lift, at the carry apex; a hold parked over
        // the pour destination or at the face would be indistinguishable
        // from pouring or drinking. The pour/drink order still varies.
        const int variant = static_cast<int>(rng() % 2);
        std::vector<ActionType> mid;
        if (variant == 0) {
          mid = {ActionType::hold, ActionType::pour, ActionType::drink};
        } else {
          mid = {ActionType::hold, ActionType::drink, ActionType::pour};
        }
        std::vector<Segment> segs;
        segs.push_back({ActionType::idle, -1, -1, duration()});
        segs.push_back({ActionType::approach, held, -1, travel_duration(16)});
        segs.push_back({ActionType::lift, held, -1, duration()});
        for (ActionType a : mid) {
          segs.push_back({a, held, a == ActionType::pour ? dest : -1, duration()});
        }
        segs.push_back({ActionType::place, held, -1, travel_duration(16)});
        segs.push_back({ActionType::retreat, -1, -1, travel_duration(12)});
        return segs;
      };
      script.left = scaffold(kBottle, kBowl);
      script.right = scaffold(kCup, kBowl);

      // Trailing idle pads the shorter hand to the common episode length.
      int lt = 0, rt = 0;
      for (const Segment& x : script.left) lt += x.duration;
      for (const Segment& x : script.right) rt += x.duration;
      if (lt < rt) script.left.push_back({ActionType::idle, -1, -1, rt - lt + 5});
      if (rt < lt) script.right.push_back({ActionType::idle, -1, -1, lt - rt + 5});
      if (lt < rt) script.right.push_back({ActionType::idle, -1, -1, 5});
      if (rt < lt) script.left.push_back({ActionType::idle, -1, -1, 5});
      if (lt == rt) {
        script.left.push_back({ActionType::idle, -1, -1, 5});
        script.right.push_back({ActionType::idle, -1, -1, 5});
      }

      ds.sequences.push_back(generate_episode(script, cfg));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace fgse
