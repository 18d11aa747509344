#include <doctest.h>

#include <map>
#include <memory>
#include <random>
#include <stdexcept>

#include "fgse/stream.hpp"

using namespace fgse;

namespace {

/// Deterministic stand-in model: the pooled embedding carries the frame's
/// time index, and window logits look the index up in a scripted label
/// table. Lets every schedule be computed by hand.
class ScriptedModel : public WindowModel {
 public:
  ScriptedModel(int window, int n_classes, std::map<int, int> labels,
                OutputMode mode = OutputMode::per_frame)
      : window_(window), n_classes_(n_classes), labels_(std::move(labels)), mode_(mode) {}

  int window() const override { return window_; }
  int n_heads_out() const override { return 1; }
  int n_classes() const override { return n_classes_; }
  OutputMode output_mode() const override { return mode_; }

  Tensor encode_frame(const SceneGraph& g) const override {
    return Tensor::scalar(static_cast<float>(g.time_index));
  }

  std::vector<Tensor> window_logits(const Tensor& pooled) const override {
    const int rows = mode_ == OutputMode::single ? 1 : window_;
    Tensor logits = Tensor::full(rows, n_classes_, -10.0f);
    for (int r = 0; r < rows; ++r) {
      const int t = static_cast<int>(pooled.at(mode_ == OutputMode::single ? window_ - 1 : r, 0));
      const auto it = labels_.find(t);
      const int cls = it == labels_.end() ? 0 : it->second;
      logits.mut(r, cls) = 10.0f;
    }
    return {logits};
  }

 private:
  int window_;
  int n_classes_;
  std::map<int, int> labels_;
  OutputMode mode_;
};

SceneGraph frame_at(int t) {
  SceneGraph g;
  g.time_index = t;
  g.nodes = {{0, 0, HandRole::right}};
  return g;
}

/// Batch reference: enumerate every full window, deposit argmax votes per
/// frame, apply majority_vote.
std::vector<int> batch_votes(const ScriptedModel& m, int stream_len) {
  const int w = m.window();
  std::vector<std::vector<int>> votes(stream_len);
  std::vector<std::vector<std::vector<float>>> rows(stream_len);
  auto deposit = [&](const Tensor& logits, int start) {
    for (int r = 0; r < w; ++r) {
      const int pos = start + r;
      if (pos < 0 || pos >= stream_len) continue;
      int best = 0;
      for (int c = 1; c < logits.cols(); ++c) {
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      }
      votes[pos].push_back(best);
      std::vector<float> row(logits.cols());
      for (int c = 0; c < logits.cols(); ++c) row[c] = logits.at(r, c);
      rows[pos].push_back(row);
    }
  };
  if (stream_len >= w) {
    for (int start = 0; start + w <= stream_len; ++start) {
      std::vector<Tensor> pooled;
      for (int r = 0; r < w; ++r) pooled.push_back(Tensor::scalar(static_cast<float>(start + r)));
      deposit(m.window_logits(concat_rows(pooled))[0], start);
    }
  } else {
    std::vector<Tensor> pooled;
    for (int i = 0; i < w - stream_len; ++i) pooled.push_back(Tensor::scalar(0.0f));
    for (int i = 0; i < stream_len; ++i) pooled.push_back(Tensor::scalar(static_cast<float>(i)));
    deposit(m.window_logits(concat_rows(pooled))[0], stream_len - w);
  }
  std::vector<int> out(stream_len);
  for (int i = 0; i < stream_len; ++i) out[i] = majority_vote(votes[i], {}).first;
  return out;
}

}  // namespace

TEST_SUITE("stream") {

TEST_CASE("majority_vote counts argmaxes") {
  const auto [label, count] = majority_vote({0, 0, 1, 0, 0}, {});
  CHECK(label == 0);
  CHECK(count == 4);
  const auto [single, one] = majority_vote({3}, {});
  CHECK(single == 3);
  CHECK(one == 1);
  CHECK_THROWS_AS(majority_vote({}, {}), std::invalid_argument);
}

TEST_CASE("majority_vote ties break by softmax mass, then recency") {
  // 1 vs 1; class 1 holds more mass.
  const auto by_mass = majority_vote({0, 1}, {{0.6f, 0.4f}, {0.1f, 0.9f}});
  CHECK(by_mass.first == 1);
  // Equal mass: the later vote wins.
  const auto by_recency = majority_vote({0, 1}, {{0.5f, 0.5f}, {0.5f, 0.5f}});
  CHECK(by_recency.first == 1);
  const auto by_recency2 = majority_vote({1, 0}, {{0.5f, 0.5f}, {0.5f, 0.5f}});
  CHECK(by_recency2.first == 0);
}

TEST_CASE("majority_vote matches an exhaustive counting oracle on 1000 cases") {
  std::mt19937 rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 9);
    const int classes = 2 + static_cast<int>(rng() % 4);
    std::vector<int> votes(n);
    std::vector<std::vector<float>> rows(n);
    for (int i = 0; i < n; ++i) {
      votes[i] = static_cast<int>(rng() % classes);
      rows[i].assign(classes, 0.0f);
      // Mass concentrated on the vote, deterministic leftovers elsewhere.
      for (int c = 0; c < classes; ++c) rows[i][c] = 0.1f + 0.01f * ((i + c) % 5);
      rows[i][votes[i]] += 0.5f;
    }
    // Oracle: count every class, then apply the documented tie rule.
    std::vector<int> counts(classes, 0);
    std::vector<double> mass(classes, 0.0);
    std::vector<int> last(classes, -1);
    for (int i = 0; i < n; ++i) {
      counts[votes[i]]++;
      last[votes[i]] = i;
      for (int c = 0; c < classes; ++c) mass[c] += rows[i][c];
    }
    int expect = -1;
    for (int c = 0; c < classes; ++c) {
      if (counts[c] == 0) continue;
      if (expect < 0 || counts[c] > counts[expect] ||
          (counts[c] == counts[expect] &&
           (mass[c] > mass[expect] || (mass[c] == mass[expect] && last[c] > last[expect])))) {
        expect = c;
      }
    }
    const auto [got, got_count] = majority_vote(votes, rows);
    CHECK(got == expect);
    CHECK(got_count == counts[expect]);
  }
}

TEST_CASE("warm-up: first W-1 pushes emit nothing, push W emits frame 0 with one vote") {
  const int W = 5;
  std::map<int, int> labels;
  for (int t = 0; t < 20; ++t) labels[t] = t % 3;
  auto model = std::make_shared<ScriptedModel>(W, 3, labels);
  StreamEngine engine(model);
  for (int t = 0; t < W - 1; ++t) {
    CHECK(engine.push_frame(frame_at(t)).empty());
  }
  const auto out = engine.push_frame(frame_at(W - 1));
  REQUIRE(out.size() == 1);
  CHECK(out[0].time_index == 0);
  CHECK(out[0].vote_counts[0] == 1);
  CHECK(out[0].labels[0] == labels[0]);
  CHECK(out[0].latency_frames == W - 1);
}

TEST_CASE("steady state: exactly one prediction per push, W votes each") {
  const int W = 4;
  std::map<int, int> labels;
  for (int t = 0; t < 40; ++t) labels[t] = (t / 7) % 3;
  auto model = std::make_shared<ScriptedModel>(W, 3, labels);
  StreamEngine engine(model);
  int emitted = 0;
  for (int t = 0; t < 40; ++t) {
    const auto out = engine.push_frame(frame_at(t));
    if (t < W - 1) {
      CHECK(out.empty());
    } else {
      REQUIRE(out.size() == 1);
      CHECK(out[0].time_index == t - W + 1);
      // Frames past the warm-up triangle carry a full vote set.
      if (out[0].time_index >= W - 1) CHECK(out[0].vote_counts[0] == W);
      ++emitted;
    }
  }
  CHECK(emitted == 40 - (W - 1));
}

TEST_CASE("vote counts follow the triangular schedule") {
  const int W = 5;
  std::map<int, int> labels;
  for (int t = 0; t < 30; ++t) labels[t] = 1;  // constant stream: count == votes received
  auto model = std::make_shared<ScriptedModel>(W, 2, labels);
  StreamEngine engine(model);
  std::vector<FinalPrediction> all;
  for (int t = 0; t < 30; ++t) {
    for (auto& p : engine.push_frame(frame_at(t))) all.push_back(p);
  }
  for (auto& p : engine.flush()) all.push_back(p);
  REQUIRE(all.size() == 30);
  for (int i = 0; i < 30; ++i) {
    CHECK(all[i].time_index == i);
    const int windows_containing =
        std::min({W, i + 1, 30 - i});  // triangular at both stream ends
    CHECK(all[i].vote_counts[0] == windows_containing);
    CHECK(all[i].vote_counts[0] <= W);
  }
}

TEST_CASE("flush on a stream of exactly W frames emits everything once") {
  const int W = 6;
  std::map<int, int> labels;
  for (int t = 0; t < W; ++t) labels[t] = t % 2;
  auto model = std::make_shared<ScriptedModel>(W, 2, labels);
  StreamEngine engine(model);
  std::vector<FinalPrediction> all;
  for (int t = 0; t < W; ++t) {
    for (auto& p : engine.push_frame(frame_at(t))) all.push_back(p);
  }
  for (auto& p : engine.flush()) all.push_back(p);
  REQUIRE(all.size() == W);
  for (int i = 0; i < W; ++i) {
    CHECK(all[i].time_index == i);
    CHECK(all[i].vote_counts[0] >= 1);
    CHECK(all[i].vote_counts[0] <= W);
    CHECK(all[i].labels[0] == labels[i]);
  }
}

TEST_CASE("flush: empty stream yields nothing and flushing twice is idempotent") {
  auto model = std::make_shared<ScriptedModel>(3, 2, std::map<int, int>{});
  StreamEngine engine(model);
  CHECK(engine.flush().empty());
  engine.push_frame(frame_at(0));
  engine.push_frame(frame_at(1));
  const auto first = engine.flush();
  CHECK(first.size() == 2);
  CHECK(engine.flush().empty());
}

TEST_CASE("short streams evaluate one left-padded window, padding votes discarded") {
  const int W = 5;
  std::map<int, int> labels{{0, 1}, {1, 0}, {2, 1}};
  auto model = std::make_shared<ScriptedModel>(W, 2, labels);
  StreamEngine engine(model);
  for (int t = 0; t < 3; ++t) CHECK(engine.push_frame(frame_at(t)).empty());
  const auto out = engine.flush();
  REQUIRE(out.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[i].time_index == i);
    CHECK(out[i].vote_counts[0] == 1);
    CHECK(out[i].labels[0] == labels[i]);
  }
}

TEST_CASE("offline/online equivalence on 50 random episodes") {
  std::mt19937 rng(777);
  for (int episode = 0; episode < 50; ++episode) {
    const int W = 2 + static_cast<int>(rng() % 6);
    const int len = 1 + static_cast<int>(rng() % 40);
    const int classes = 2 + static_cast<int>(rng() % 3);
    std::map<int, int> labels;
    for (int t = 0; t < len; ++t) labels[t] = static_cast<int>(rng() % classes);
    auto model = std::make_shared<ScriptedModel>(W, classes, labels);

    StreamEngine engine(model);
    std::vector<int> streamed;
    for (int t = 0; t < len; ++t) {
      for (auto& p : engine.push_frame(frame_at(t))) streamed.push_back(p.labels[0]);
    }
    for (auto& p : engine.flush()) streamed.push_back(p.labels[0]);

    const std::vector<int> batch = batch_votes(*model, len);
    REQUIRE(streamed.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(streamed[i] == batch[i]);
  }
}

TEST_CASE("emission order equals time order and memory stays bounded") {
  const int W = 7;
  std::map<int, int> labels;
  for (int t = 0; t < 100; ++t) labels[t] = t % 5;
  auto model = std::make_shared<ScriptedModel>(W, 5, labels);
  StreamEngine engine(model);
  int last_emitted = -1;
  for (int t = 0; t < 100; ++t) {
    for (auto& p : engine.push_frame(frame_at(t))) {
      CHECK(p.time_index == last_emitted + 1);
      last_emitted = p.time_index;
    }
    CHECK(engine.vote_buffer().slots.size() <= static_cast<std::size_t>(W));
    for (const auto& slot : engine.vote_buffer().slots) {
      for (const auto& votes : slot.votes) CHECK(votes.size() <= static_cast<std::size_t>(W));
    }
  }
}

TEST_CASE("latency report: structural delay is W/fps") {
  std::map<int, int> labels{{0, 0}};
  {
    auto model = std::make_shared<ScriptedModel>(30, 2, labels);
    StreamEngine engine(model);
    engine.set_fps(30.0f);
    const auto rep = engine.latency_report();
    CHECK(rep.structural_delay_s == doctest::Approx(1.0));
  }
  {
    auto model = std::make_shared<ScriptedModel>(75, 2, labels);
    StreamEngine engine(model);
    engine.set_fps(15.0f);
    CHECK(engine.latency_report().structural_delay_s == doctest::Approx(5.0));
  }
  {
    auto model = std::make_shared<ScriptedModel>(5, 2, labels);
    StreamEngine engine(model);
    CHECK_THROWS_AS(engine.latency_report(), std::logic_error);
    engine.set_fps(10.0f);
    for (int t = 0; t < 8; ++t) engine.push_frame(frame_at(t));
    const auto rep = engine.latency_report();
    CHECK(rep.sampled_pushes == 8);
    CHECK(rep.mean_push_s >= 0.0);
    CHECK(rep.max_push_s >= rep.mean_push_s);
  }
}

TEST_CASE("provisional view exposes current leaders without emitting") {
  const int W = 4;
  std::map<int, int> labels;
  for (int t = 0; t < 10; ++t) labels[t] = 1;
  auto model = std::make_shared<ScriptedModel>(W, 2, labels);
  StreamEngine engine(model);
  for (int t = 0; t < W; ++t) engine.push_frame(frame_at(t));
  const auto prov = engine.provisional();
  CHECK(!prov.empty());
  for (const auto& p : prov) {
    CHECK(p.labels[0] == 1);
    CHECK(p.vote_counts[0] >= 1);
  }
  // Still emitted later, exactly once.
  int emitted = static_cast<int>(engine.flush().size());
  CHECK(emitted == W - 1);  // frame 0 was already emitted at push W-1
}

TEST_CASE("center mode picks the window-center vote") {
  const int W = 5;
  std::map<int, int> labels;
  for (int t = 0; t < 20; ++t) labels[t] = t % 4;
  auto model = std::make_shared<ScriptedModel>(W, 4, labels, OutputMode::center);
  StreamEngine engine(model);
  std::vector<FinalPrediction> all;
  for (int t = 0; t < 20; ++t) {
    for (auto& p : engine.push_frame(frame_at(t))) all.push_back(p);
  }
  for (auto& p : engine.flush()) all.push_back(p);
  REQUIRE(all.size() == 20);
  // The scripted model is exact per frame, so center selection is too.
  for (int i = 0; i < 20; ++i) CHECK(all[i].labels[0] == labels[i]);
}

TEST_CASE("single mode assigns each window's one prediction to its last frame") {
  const int W = 4;
  std::map<int, int> labels;
  for (int t = 0; t < 12; ++t) labels[t] = t % 2;
  auto model = std::make_shared<ScriptedModel>(W, 2, labels, OutputMode::single);
  StreamEngine engine(model);
  std::vector<FinalPrediction> all;
  for (int t = 0; t < 12; ++t) {
    for (auto& p : engine.push_frame(frame_at(t))) all.push_back(p);
  }
  for (auto& p : engine.flush()) all.push_back(p);
  REQUIRE(all.size() == 12);
  // In steady state frame t's label comes from the window ending at t, which
  // the scripted model reads off the last row: exact per frame.
  for (int i = W - 1; i < 12; ++i) CHECK(all[i].labels[0] == labels[i]);
  // Warm-up frames inherit the first window's prediction.
  for (int i = 0; i < W - 1; ++i) CHECK(all[i].labels[0] == labels[W - 1]);
}

}  // TEST_SUITE
