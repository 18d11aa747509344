#include "fgse/stream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fgse {

namespace {

std::vector<float> softmax_row(std::span<const float> logits) {
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v - mx));
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<float>(std::exp(static_cast<double>(logits[i] - mx)) / sum);
  }
  return out;
}

int argmax(std::span<const float> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::pair<int, int> majority_vote(const std::vector<int>& votes,
                                  const std::vector<std::vector<float>>& softmax_rows) {
  if (votes.empty()) throw std::invalid_argument("majority_vote: empty vote list");
  if (!softmax_rows.empty() && softmax_rows.size() != votes.size()) {
    throw std::invalid_argument("majority_vote: softmax rows do not match votes");
  }
  int n_classes = 0;
  for (int v : votes) n_classes = std::max(n_classes, v + 1);
  for (const auto& row : softmax_rows) n_classes = std::max(n_classes, static_cast<int>(row.size()));

  std::vector<int> counts(n_classes, 0);
  std::vector<double> mass(n_classes, 0.0);
  std::vector<int> last_seen(n_classes, -1);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    counts[votes[i]] += 1;
    last_seen[votes[i]] = static_cast<int>(i);
    if (!softmax_rows.empty()) {
      for (std::size_t c = 0; c < softmax_rows[i].size(); ++c) mass[c] += softmax_rows[i][c];
    }
  }
  int best = votes[0];
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) continue;
    if (counts[c] > counts[best]) {
      best = c;
    } else if (counts[c] == counts[best] && c != best) {
      if (mass[c] > mass[best] || (mass[c] == mass[best] && last_seen[c] > last_seen[best])) {
        best = c;
      }
    }
  }
  return {best, counts[best]};
}

StreamEngine::StreamEngine(std::shared_ptr<const WindowModel> model, int stride)
    : model_(std::move(model)), stride_(stride) {
  if (!model_) throw std::invalid_argument("StreamEngine: null model");
  if (stride_ < 1) throw std::invalid_argument("StreamEngine: stride must be >= 1");
  buffer_.window = model_->window();
}

void StreamEngine::reset() {
  buffer_.slots.clear();
  pooled_.clear();
  frames_seen_ = 0;
  last_window_end_ = -1;
}

void StreamEngine::run_window(long end_pos) {
  const int w = model_->window();
  std::vector<Tensor> rows(pooled_.begin(), pooled_.end());
  std::vector<Tensor> logits = model_->window_logits(concat_rows(rows));

  auto slot_at = [&](long pos) -> VoteBuffer::Slot* {
    if (buffer_.slots.empty()) return nullptr;
    const long idx = pos - buffer_.slots.front().position;
    if (idx < 0 || idx >= static_cast<long>(buffer_.slots.size())) return nullptr;
    return &buffer_.slots[static_cast<std::size_t>(idx)];
  };

  for (int h = 0; h < model_->n_heads_out(); ++h) {
    const Tensor& l = logits[h];
    if (model_->output_mode() == OutputMode::single) {
      const auto row = l.values();
      std::vector<float> probs = softmax_row(row);
      const int label = argmax(probs);
      // The first window also covers the warm-up frames, which otherwise
      // would never get a single-mode vote.
      const long first = last_window_end_ < 0 ? end_pos - w + 1 : end_pos;
      for (long pos = first; pos <= end_pos; ++pos) {
        if (VoteBuffer::Slot* slot = slot_at(pos)) {
          slot->votes[h].push_back({label, w - 1, probs});
        }
      }
    } else {
      for (int r = 0; r < w; ++r) {
        const long pos = end_pos - w + 1 + r;
        VoteBuffer::Slot* slot = slot_at(pos);
        if (!slot) continue;
        std::vector<float> probs =
            softmax_row(l.values().subspan(static_cast<std::size_t>(r) * l.cols(), l.cols()));
        const int label = argmax(probs);
        slot->votes[h].push_back({label, r, probs});
      }
    }
  }
  last_window_end_ = end_pos;
}

FinalPrediction StreamEngine::finalize(const VoteBuffer::Slot& slot, long emit_pos) const {
  FinalPrediction out;
  out.time_index = slot.time_index;
  out.latency_frames = static_cast<int>(emit_pos - slot.position);
  const int w = model_->window();
  for (const auto& votes : slot.votes) {
    if (votes.empty()) {
      throw std::logic_error("StreamEngine: frame emitted without votes");
    }
    int label = 0;
    int count = 0;
    switch (model_->output_mode()) {
      case OutputMode::per_frame: {
        std::vector<int> labels;
        std::vector<std::vector<float>> rows;
        labels.reserve(votes.size());
        rows.reserve(votes.size());
        for (const Vote& v : votes) {
          labels.push_back(v.label);
          rows.push_back(v.probs);
        }
        std::tie(label, count) = majority_vote(labels, rows);
        break;
      }
      case OutputMode::center: {
        const int target = w / 2;
        const Vote* best = &votes.front();
        for (const Vote& v : votes) {
          const int dv = std::abs(v.w - target);
          const int db = std::abs(best->w - target);
          if (dv < db || (dv == db && v.w > best->w)) best = &v;
        }
        label = best->label;
        for (const Vote& v : votes) count += v.label == label;
        break;
      }
      case OutputMode::single: {
        const Vote* best = &votes.front();
        for (const Vote& v : votes) {
          if (v.w >= best->w) best = &v;
        }
        label = best->label;
        for (const Vote& v : votes) count += v.label == label;
        break;
      }
    }
    out.labels.push_back(label);
    out.vote_counts.push_back(count);
  }
  return out;
}

std::vector<FinalPrediction> StreamEngine::emit_ready(long next_window_end) {
  std::vector<FinalPrediction> out;
  const int w = model_->window();
  while (!buffer_.slots.empty() &&
         buffer_.slots.front().position + w - 1 < next_window_end) {
    out.push_back(finalize(buffer_.slots.front(), frames_seen_ - 1));
    buffer_.slots.pop_front();
  }
  return out;
}

std::vector<FinalPrediction> StreamEngine::push_frame(const SceneGraph& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const int w = model_->window();

  pooled_.push_back(model_->encode_frame(g));
  if (static_cast<int>(pooled_.size()) > w) pooled_.pop_front();

  VoteBuffer::Slot slot;
  slot.time_index = g.time_index;
  slot.position = frames_seen_;
  slot.votes.assign(model_->n_heads_out(), {});
  buffer_.slots.push_back(std::move(slot));
  ++frames_seen_;

  if (frames_seen_ >= w && (frames_seen_ - w) % stride_ == 0) {
    run_window(frames_seen_ - 1);
  }
  std::vector<FinalPrediction> out;
  if (last_window_end_ >= 0) out = emit_ready(last_window_end_ + stride_);

  const auto t1 = std::chrono::steady_clock::now();
  push_times_.push_back(std::chrono::duration<double>(t1 - t0).count());
  if (push_times_.size() > 100) push_times_.pop_front();
  return out;
}

std::vector<FinalPrediction> StreamEngine::flush() {
  std::vector<FinalPrediction> out;
  if (frames_seen_ == 0) return out;
  const int w = model_->window();

  if (frames_seen_ < w) {
    // Short stream: one window left-padded by repeating the first frame;
    // padding rows vote for no real frame.
    const int pad = w - static_cast<int>(frames_seen_);
    std::vector<Tensor> rows;
    rows.reserve(w);
    for (int i = 0; i < pad; ++i) rows.push_back(pooled_.front());
    rows.insert(rows.end(), pooled_.begin(), pooled_.end());
    std::vector<Tensor> logits = model_->window_logits(concat_rows(rows));
    for (int h = 0; h < model_->n_heads_out(); ++h) {
      const Tensor& l = logits[h];
      if (model_->output_mode() == OutputMode::single) {
        std::vector<float> probs = softmax_row(l.values());
        const int label = argmax(probs);
        for (auto& slot : buffer_.slots) slot.votes[h].push_back({label, w - 1, probs});
      } else {
        for (int r = pad; r < w; ++r) {
          std::vector<float> probs =
              softmax_row(l.values().subspan(static_cast<std::size_t>(r) * l.cols(), l.cols()));
          buffer_.slots[static_cast<std::size_t>(r - pad)].votes[h].push_back(
              {argmax(probs), r, probs});
        }
      }
    }
  } else if (last_window_end_ != frames_seen_ - 1) {
    // Stride > 1 can leave a tail of frames the last computed window missed.
    run_window(frames_seen_ - 1);
  }

  for (const auto& slot : buffer_.slots) out.push_back(finalize(slot, frames_seen_ - 1));
  const float fps = buffer_.fps;
  reset();
  buffer_.fps = fps;
  return out;
}

std::vector<FinalPrediction> StreamEngine::provisional() const {
  std::vector<FinalPrediction> out;
  for (const auto& slot : buffer_.slots) {
    bool has_votes = true;
    for (const auto& votes : slot.votes) has_votes = has_votes && !votes.empty();
    if (has_votes) out.push_back(finalize(slot, frames_seen_ - 1));
  }
  return out;
}

StreamEngine::LatencyReport StreamEngine::latency_report() const {
  if (buffer_.fps <= 0.0f) {
    throw std::logic_error("latency_report: fps unset; call set_fps first");
  }
  LatencyReport rep;
  rep.structural_delay_s = static_cast<double>(model_->window()) / buffer_.fps;
  rep.sampled_pushes = static_cast<int>(push_times_.size());
  for (double t : push_times_) {
    rep.mean_push_s += t;
    rep.max_push_s = std::max(rep.max_push_s, t);
  }
  if (rep.sampled_pushes > 0) rep.mean_push_s /= rep.sampled_pushes;
  return rep;
}

}  // namespace fgse
