#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <utility>
#include <vector>

#include "fgse/model.hpp"

namespace fgse {

/// argmax_c of the vote count, over the up-to-W argmax predictions a frame
/// received. Ties break toward the larger summed softmax mass among the
/// tied classes, then toward the class of the most recent vote.
/// softmax_rows may be empty when no mass information exists; otherwise it
/// is parallel to votes. Returns (class, winning vote count); throws
/// std::invalid_argument on an empty vote list.
std::pair<int, int> majority_vote(const std::vector<int>& votes,
                                  const std::vector<std::vector<float>>& softmax_rows);

/// The surface the streaming engine needs from a trained model. FgseModel
/// adapts below; tests substitute oracles.
class WindowModel {
 public:
  virtual ~WindowModel() = default;
  virtual int window() const = 0;
  virtual int n_heads_out() const = 0;
  virtual int n_classes() const = 0;
  virtual OutputMode output_mode() const = 0;
  /// Pooled embedding for one frame, 1 x p.
  virtual Tensor encode_frame(const SceneGraph& g) const = 0;
  /// Per-head logits for a W x p pooled window (W x C rows, or 1 x C under
  /// OutputMode::single).
  virtual std::vector<Tensor> window_logits(const Tensor& pooled) const = 0;
};

class FgseWindowModel : public WindowModel {
 public:
  explicit FgseWindowModel(FgseModel model) : model_(std::move(model)) {}
  const FgseModel& model() const { return model_; }
  int window() const override { return model_.config().window; }
  int n_heads_out() const override { return model_.config().n_heads_out; }
  int n_classes() const override { return model_.config().n_classes; }
  OutputMode output_mode() const override { return model_.config().output; }
  Tensor encode_frame(const SceneGraph& g) const override { return model_.encode_frame(g); }
  std::vector<Tensor> window_logits(const Tensor& pooled) const override {
    return model_.window_logits_from_pooled(pooled);
  }

 private:
  FgseModel model_;
};

struct FinalPrediction {
  int time_index = 0;
  std::vector<int> labels;       // one per head
  std::vector<int> vote_counts;  // deposited votes agreeing with the label
  int latency_frames = 0;        // frames between arrival and emission
};

/// One vote: the argmax class, the window position w that produced it, and
/// the softmax row behind it.
struct Vote {
  int label = 0;
  int w = 0;
  std::vector<float> probs;
};

/// Per-frame accumulator of pending votes. Bounded: frames are emitted as
/// soon as no future window can vote for them, so at most W frames (each
/// holding up to W votes) are pending per head.
struct VoteBuffer {
  struct Slot {
    int time_index = 0;
    long position = 0;  // 0-based arrival index within the stream
    std::vector<std::vector<Vote>> votes;  // [head][vote]
  };
  std::deque<Slot> slots;
  int window = 0;
  float fps = 0.0f;
};

/// Sliding-window streaming inference with per-frame vote aggregation.
///
/// push_frame appends the frame; once W frames have arrived, every stride-th
/// push runs the sequence encoder over the latest W pooled embeddings and
/// deposits votes. A frame is emitted, in time order, as soon as the last
/// window that can contain it has run (steady state: exactly one emission
/// per push, W votes each; the first and last W-1 frames carry fewer).
/// Graph encoding happens once per frame ahead of the window, which leaves
/// emission order and values identical to re-encoding per window.
///
/// Under OutputMode::center the emitted label is the vote whose window
/// position is closest to W/2 (exact at steady state); under single, each
/// window votes once for its last frame and leading frames inherit the
/// first window's prediction at flush.
///
/// flush() emits everything pending and resets the stream. Streams shorter
/// than W are evaluated with one window left-padded by repeating the first
/// frame; padding votes are discarded. flush on an empty or already-flushed
/// engine returns nothing.
class StreamEngine {
 public:
  explicit StreamEngine(std::shared_ptr<const WindowModel> model, int stride = 1);

  std::vector<FinalPrediction> push_frame(const SceneGraph& g);
  std::vector<FinalPrediction> flush();
  void reset();

  void set_fps(float fps) { buffer_.fps = fps; }
  long frames_seen() const { return frames_seen_; }
  const VoteBuffer& vote_buffer() const { return buffer_; }

  /// Current leaders for frames still awaiting votes, oldest first.
  std::vector<FinalPrediction> provisional() const;

  struct LatencyReport {
    double structural_delay_s = 0.0;  // W / fps
    double mean_push_s = 0.0;
    double max_push_s = 0.0;
    int sampled_pushes = 0;
  };
  /// Structural delay plus measured compute time over the last 100 pushes.
  /// Throws std::logic_error when fps was never provided.
  LatencyReport latency_report() const;

 private:
  void run_window(long end_pos);
  FinalPrediction finalize(const VoteBuffer::Slot& slot, long emit_pos) const;
  std::vector<FinalPrediction> emit_ready(long next_window_end);

  std::shared_ptr<const WindowModel> model_;
  int stride_;
  VoteBuffer buffer_;
  std::deque<Tensor> pooled_;  // last W frame embeddings
  long frames_seen_ = 0;
  long last_window_end_ = -1;
  std::deque<double> push_times_;
};

}  // namespace fgse
