// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Returns the number of failed
// non-optional criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "fgse/checkpoint.hpp"
#include "fgse/dataset.hpp"
#include "fgse/model.hpp"
#include "fgse/stream.hpp"
#include "fgse/synth.hpp"
#include "fgse/train.hpp"

using namespace fgse;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& detail) {
  std::printf("[SKIP] criterion %d: %s\n", criterion, detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(int r, int c, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  return Tensor::uniform(r, c, lo, hi, rng);
}

SceneGraph random_graph(int n_nodes, int n_categories, std::mt19937& rng, int t = 0) {
  SceneGraph g;
  g.time_index = t;
  for (int i = 0; i < n_nodes; ++i) {
    g.nodes.push_back({i, static_cast<int>(rng() % n_categories),
                       i == 0 ? HandRole::left : (i == 1 ? HandRole::right : HandRole::none)});
  }
  for (int a = 0; a < n_nodes; ++a) {
    for (int b = 0; b < n_nodes; ++b) {
      if (a == b || (rng() % 3) == 0) continue;
      SceneGraphEdge e;
      e.src_id = a;
      e.dst_id = b;
      for (int bit : {0, 1, 8, 10}) e.rel.bits.set(bit, (rng() & 1) != 0);
      if (e.rel.test(Relation::above)) e.rel.set(Relation::below, false);
      g.edges.push_back(e);
    }
  }
  return g;
}

Vocabulary tiny_vocab(int objects, int labels) {
  Vocabulary v;
  for (int i = 0; i < objects; ++i) v.add_object("obj" + std::to_string(i));
  for (int i = 0; i < labels; ++i) v.add_label("act" + std::to_string(i));
  v.heads = 2;
  return v;
}

// --- criterion 1 ------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  float worst = 0.0f;
  auto scalarize = [](const Tensor& t) { return mean_rows(transpose(mean_rows(t))); };

  for (unsigned seed = 1; seed <= 5; ++seed) {
    std::mt19937 rng(seed);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 3, rng);
    Tensor c = random_tensor(3, 4, rng);
    Tensor bias = random_tensor(1, 4, rng);
    Tensor gain = random_tensor(1, 4, rng, 0.5f, 1.5f);
    Tensor scores = random_tensor(6, 1, rng);
    Tensor rows = random_tensor(6, 3, rng);
    const std::vector<int> seg{0, 1, 0, 2, 1, 0};

    worst = std::max(worst, grad_check([&] { return scalarize(matmul(a, b)); }, {a, b}));
    worst = std::max(worst, grad_check([&] { return scalarize(transpose(a)); }, {a}));
    worst = std::max(worst, grad_check([&] { return scalarize(add(a, c)); }, {a, c}));
    worst = std::max(worst, grad_check([&] { return scalarize(add_rowwise(a, bias)); }, {a, bias}));
    worst = std::max(worst, grad_check([&] { return scalarize(scale(a, 1.3f)); }, {a}));
    worst = std::max(worst, grad_check([&] {
                       const Tensor xs[] = {a, c};
                       return scalarize(add_n(xs));
                     },
                     {a, c}));
    worst = std::max(worst, grad_check([&] { return scalarize(selu(a)); }, {a}));
    worst = std::max(worst,
                     grad_check([&] { return scalarize(layer_norm(a, gain, bias)); }, {a, gain, bias}));
    worst = std::max(worst, grad_check([&] { return scalarize(softmax_rows(a)); }, {a}));
    worst = std::max(worst, grad_check([&] { return cross_entropy(mean_rows(a), 1); }, {a}));
    worst = std::max(worst, grad_check([&] { return scalarize(mean_rows(a)); }, {a}));
    worst = std::max(worst, grad_check([&] { return scalarize(slice_cols(a, 1, 2)); }, {a}));
    worst = std::max(worst, grad_check([&] { return scalarize(gather_rows(a, {2, 0, 2})); }, {a}));
    worst = std::max(worst, grad_check([&] { return scalarize(row_dot(a, c)); }, {a, c}));
    worst = std::max(worst,
                     grad_check([&] { return scalarize(segment_softmax(scores, seg, 3)); }, {scores}));
    worst = std::max(worst, grad_check(
                                [&] {
                                  const Tensor w = segment_softmax(scores, seg, 3);
                                  return scalarize(segment_sum_weighted(rows, w, seg, 3));
                                },
                                {scores, rows}));

    // Full FGSE forward at tiny dimensions: d=8, W=3, 4 nodes.
    FgseConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_graph_layers = 2;
    cfg.n_seq_layers = 2;
    cfg.window = 3;
    cfg.n_classes = 3;
    cfg.n_heads_out = 2;
    cfg.n_categories = 4;
    const FgseModel model(cfg, tiny_vocab(4, 3), seed * 101);
    std::vector<SceneGraph> window;
    for (int t = 0; t < cfg.window; ++t) window.push_back(random_graph(4, 4, rng, t));
    std::vector<std::vector<int>> labels(2, std::vector<int>(cfg.window));
    for (auto& stream : labels) {
      for (int& l : stream) l = static_cast<int>(rng() % cfg.n_classes);
    }
    worst = std::max(worst, grad_check([&] { return window_loss(model, window, labels); },
                                       model.parameters()));
  }
  const double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gradient integrity: max rel err %.2e (< 1e-3), 5 seeds, %.1fs (< 30s)", worst,
                elapsed);
  report(1, worst < 1e-3f && elapsed < 30.0, buf);
}

// --- criterion 2 ------------------------------------------------------------

void criterion_permutation() {
  FgseConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_graph_layers = 2;
  cfg.n_seq_layers = 2;
  cfg.window = 3;
  cfg.n_classes = 5;
  cfg.n_heads_out = 2;
  cfg.n_categories = 6;
  const FgseModel model(cfg, tiny_vocab(6, 5), 2024);
  std::mt19937 rng(99);
  float worst = 0.0f;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 5);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);

    std::vector<SceneGraph> win, pwin;
    for (int t = 0; t < cfg.window; ++t) {
      win.push_back(random_graph(n, 6, rng, t));
      SceneGraph pg = win.back();
      for (int i = 0; i < n; ++i) pg.nodes[i] = win.back().nodes[perm[i]];
      // Shuffling the edge list as well changes the accumulation order, so
      // the comparison genuinely exercises the float-associativity bound.
      for (std::size_t i = pg.edges.size(); i > 1; --i) {
        std::swap(pg.edges[i - 1], pg.edges[rng() % i]);
      }
      pwin.push_back(pg);
    }
    const auto a = model.forward(win);
    const auto b = model.forward(pwin);
    for (int h = 0; h < cfg.n_heads_out; ++h) {
      for (std::size_t i = 0; i < a[h].size(); ++i) {
        worst = std::max(worst, std::abs(a[h].values()[i] - b[h].values()[i]));
      }
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "permutation invariance: max deviation %.2e (< 1e-5)", worst);
  report(2, worst < 1e-5f, buf);
}

// --- criterion 3 ------------------------------------------------------------

/// Scripted stand-in model (frame index -> class) so streaming output can be
/// compared against a direct batch evaluation of the voting formula.
class ScriptedModel : public WindowModel {
 public:
  ScriptedModel(int window, int n_classes, std::map<int, int> labels)
      : window_(window), n_classes_(n_classes), labels_(std::move(labels)) {}
  int window() const override { return window_; }
  int n_heads_out() const override { return 1; }
  int n_classes() const override { return n_classes_; }
  OutputMode output_mode() const override { return OutputMode::per_frame; }
  Tensor encode_frame(const SceneGraph& g) const override {
    return Tensor::scalar(static_cast<float>(g.time_index));
  }
  std::vector<Tensor> window_logits(const Tensor& pooled) const override {
    Tensor logits = Tensor::full(window_, n_classes_, -8.0f);
    for (int r = 0; r < window_; ++r) {
      const auto it = labels_.find(static_cast<int>(pooled.at(r, 0)));
      logits.mut(r, it == labels_.end() ? 0 : it->second) = 8.0f;
    }
    return {logits};
  }

 private:
  int window_;
  int n_classes_;
  std::map<int, int> labels_;
};

void criterion_voting() {
  std::mt19937 rng(31337);
  bool vote_ok = true;

  for (int trial = 0; trial < 1000 && vote_ok; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 9);
    const int classes = 2 + static_cast<int>(rng() % 4);
    std::vector<int> votes(n);
    std::vector<std::vector<float>> rows(n);
    for (int i = 0; i < n; ++i) {
      votes[i] = static_cast<int>(rng() % classes);
      rows[i].assign(classes, 0.0f);
      for (int c = 0; c < classes; ++c) rows[i][c] = 0.05f + 0.01f * ((i * 3 + c) % 7);
      // Forced exact ties every third trial exercise the documented rule.
      if (trial % 3 != 0) rows[i][votes[i]] += 0.4f;
    }
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
    vote_ok = vote_ok && got == expect && got_count == counts[expect];
  }

  bool stream_ok = true;
  for (int episode = 0; episode < 50 && stream_ok; ++episode) {
    const int w = 2 + static_cast<int>(rng() % 6);
    const int len = 1 + static_cast<int>(rng() % 40);
    const int classes = 2 + static_cast<int>(rng() % 3);
    std::map<int, int> labels;
    for (int t = 0; t < len; ++t) labels[t] = static_cast<int>(rng() % classes);
    auto model = std::make_shared<ScriptedModel>(w, classes, labels);

    StreamEngine engine(model);
    std::vector<int> streamed;
    SceneGraph g;
    g.nodes = {{0, 0, HandRole::right}};
    for (int t = 0; t < len; ++t) {
      g.time_index = t;
      for (auto& p : engine.push_frame(g)) streamed.push_back(p.labels[0]);
    }
    for (auto& p : engine.flush()) streamed.push_back(p.labels[0]);

    // Batch: enumerate windows, deposit votes per frame, apply the formula.
    std::vector<std::vector<int>> votes(len);
    std::vector<std::vector<std::vector<float>>> rows(len);
    auto deposit = [&](const Tensor& logits, int start) {
      for (int r = 0; r < w; ++r) {
        const int pos = start + r;
        if (pos < 0 || pos >= len) continue;
        int best = 0;
        std::vector<float> row(logits.cols());
        double sum = 0.0;
        for (int c = 0; c < logits.cols(); ++c) sum += std::exp((double)logits.at(r, c));
        for (int c = 0; c < logits.cols(); ++c) {
          row[c] = static_cast<float>(std::exp((double)logits.at(r, c)) / sum);
          if (row[c] > row[best]) best = c;
        }
        votes[pos].push_back(best);
        rows[pos].push_back(row);
      }
    };
    if (len >= w) {
      for (int start = 0; start + w <= len; ++start) {
        std::vector<Tensor> pooled;
        for (int r = 0; r < w; ++r) pooled.push_back(Tensor::scalar(static_cast<float>(start + r)));
        deposit(model->window_logits(concat_rows(pooled))[0], start);
      }
    } else {
      std::vector<Tensor> pooled;
      for (int i = 0; i < w - len; ++i) pooled.push_back(Tensor::scalar(0.0f));
      for (int i = 0; i < len; ++i) pooled.push_back(Tensor::scalar(static_cast<float>(i)));
      deposit(model->window_logits(concat_rows(pooled))[0], len - w);
    }
    if (static_cast<int>(streamed.size()) != len) {
      stream_ok = false;
      break;
    }
    for (int t = 0; t < len; ++t) {
      stream_ok = stream_ok && streamed[t] == majority_vote(votes[t], rows[t]).first;
    }
  }
  report(3, vote_ok && stream_ok,
         std::string("voting: exhaustive oracle on 1000 multisets ") +
             (vote_ok ? "ok" : "MISMATCH") + "; streaming equals batch voting on 50 episodes " +
             (stream_ok ? "exactly" : "MISMATCH"));
}

// --- criterion 4 ------------------------------------------------------------

void criterion_mirroring() {
  std::mt19937 rng(1234);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    GraphSequence s;
    s.subject = 0;
    s.fps = 15.0f;
    s.labels.assign(2, {});
    const int frames = 3 + static_cast<int>(rng() % 6);
    for (int t = 0; t < frames; ++t) {
      SceneGraph g = random_graph(4, 4, rng, t);
      for (SceneGraphEdge& e : g.edges) {
        e.rel.bits.set(static_cast<int>(Relation::left_of), (rng() & 1) != 0);
        if (!e.rel.test(Relation::left_of)) {
          e.rel.bits.set(static_cast<int>(Relation::right_of), (rng() & 1) != 0);
        }
      }
      s.graphs.push_back(g);
      s.labels[0].push_back(static_cast<int>(rng() % 5));
      s.labels[1].push_back(static_cast<int>(rng() % 5));
    }
    const GraphSequence m = mirror_graph_sequence(s);
    ok = ok && m.labels[0] == s.labels[1] && m.labels[1] == s.labels[0];
    for (int t = 0; t < frames && ok; ++t) {
      for (std::size_t e = 0; e < s.graphs[t].edges.size(); ++e) {
        ok = ok && m.graphs[t].edges[e].rel.test(Relation::left_of) ==
                       s.graphs[t].edges[e].rel.test(Relation::right_of);
      }
      for (std::size_t n = 0; n < s.graphs[t].nodes.size(); ++n) {
        const HandRole a = s.graphs[t].nodes[n].hand;
        const HandRole b = m.graphs[t].nodes[n].hand;
        ok = ok && ((a == HandRole::none && b == HandRole::none) ||
                    (a == HandRole::left && b == HandRole::right) ||
                    (a == HandRole::right && b == HandRole::left));
      }
    }
    const GraphSequence mm = mirror_graph_sequence(m);
    ok = ok && mm.labels == s.labels;
    for (int t = 0; t < frames && ok; ++t) {
      ok = ok && mm.graphs[t].nodes.size() == s.graphs[t].nodes.size() &&
           mm.graphs[t].edges.size() == s.graphs[t].edges.size();
      for (std::size_t e = 0; e < s.graphs[t].edges.size(); ++e) {
        ok = ok && mm.graphs[t].edges[e].rel == s.graphs[t].edges[e].rel;
      }
      for (std::size_t n = 0; n < s.graphs[t].nodes.size(); ++n) {
        ok = ok && mm.graphs[t].nodes[n].hand == s.graphs[t].nodes[n].hand;
      }
    }
  }
  report(4, ok, ok ? "mirroring: involution and label swap exact on 100 fixtures"
                   : "mirroring: violation found");
}

// --- criterion 5 ------------------------------------------------------------

void criterion_relations() {
  std::mt19937 rng(555);
  auto uf = [&](float lo, float hi) {
    return lo + (hi - lo) * (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f));
  };
  bool props_ok = true;
  RelationThresholds cfg;
  for (int trial = 0; trial < 1000 && props_ok; ++trial) {
    ObjectTrack a, b;
    a.object_id = 0;
    b.object_id = 1;
    a.box.center = {uf(-1, 1), uf(-1, 1), uf(-0.2f, 1)};
    a.box.extent = {uf(0.05f, 0.6f), uf(0.05f, 0.6f), uf(0.05f, 0.6f)};
    b.box.center = {uf(-1, 1), uf(-1, 1), uf(-0.2f, 1)};
    b.box.extent = {uf(0.05f, 0.6f), uf(0.05f, 0.6f), uf(0.05f, 0.6f)};
    const RelationVector ab = compute_static_relations(a, b, cfg);
    const RelationVector ba = compute_static_relations(b, a, cfg);
    props_ok = props_ok && ab.test(Relation::touching) == ba.test(Relation::touching) &&
               ab.test(Relation::above) == ba.test(Relation::below) &&
               ab.test(Relation::below) == ba.test(Relation::above) &&
               ab.test(Relation::inside) == ba.test(Relation::surround) &&
               ab.test(Relation::surround) == ba.test(Relation::inside) &&
               ab.groups_exclusive() && ba.groups_exclusive();

    const ObjectTrack pair[2] = {a, b};
    const SceneGraph g = build_scene_graph(pair, {}, cfg, 0);
    const bool expect_edges = center_distance(a.box, b.box) <= cfg.max_edge_distance;
    props_ok = props_ok && (g.edges.size() == (expect_edges ? 2u : 0u));
  }

  auto vec = [](std::initializer_list<Relation> bits) {
    RelationVector v;
    for (Relation r : bits) v.set(r);
    return v;
  };
  ObjectTrack top, bottom, small, big, far_a, far_b;
  top.object_id = 0;
  top.box = {{0, 0, 1}, {1, 1, 1}};
  bottom.object_id = 1;
  bottom.box = {{0, 0, 0}, {1, 1, 1}};
  small.object_id = 2;
  small.box = {{0, 0, 0}, {0.2f, 0.2f, 0.2f}};
  big.object_id = 3;
  big.box = {{0, 0, 0}, {1, 1, 1}};
  far_a.object_id = 4;
  far_a.box = {{0, 0, 0}, {1, 1, 1}};
  far_b.object_id = 5;
  far_b.box = {{5, 0, 0}, {1, 1, 1}};

  const bool fixtures_ok =
      compute_static_relations(top, bottom, cfg) == vec({Relation::touching, Relation::above}) &&
      compute_static_relations(bottom, top, cfg) == vec({Relation::touching, Relation::below}) &&
      compute_static_relations(small, big, cfg) == vec({Relation::touching, Relation::inside}) &&
      compute_static_relations(big, small, cfg) == vec({Relation::touching, Relation::surround}) &&
      !compute_static_relations(far_a, far_b, cfg).any();

  report(5, props_ok && fixtures_ok,
         std::string("relations: antisymmetry/symmetry/exclusivity/threshold on 1000 pairs ") +
             (props_ok ? "ok" : "MISMATCH") + "; stacked/nested/separated fixtures " +
             (fixtures_ok ? "exact" : "MISMATCH"));
}

// --- criterion 6 ------------------------------------------------------------

void criterion_loso() {
  const auto t0 = Clock::now();
  const EpisodeDataset ds = generate_benchmark_suite(5, 10, 7);
  FgseConfig mcfg;
  mcfg.window = 20;
  const TrainConfig tcfg;  // defaults: 30 epochs, batch 32, lr 1e-3, D3, mirror
  const InferConfig icfg;  // D3, stride 1
  const auto outcomes = run_loso(ds, mcfg, tcfg, icfg, env_thread_cap());
  double mean = 0.0;
  std::string folds;
  for (const auto& o : outcomes) {
    mean += o.eval.f1_macro / outcomes.size();
    char b[32];
    std::snprintf(b, sizeof(b), " %.3f", o.eval.f1_macro);
    folds += b;
  }
  const double elapsed = seconds_since(t0);
  char buf[220];
  std::snprintf(buf, sizeof(buf),
                "synthetic LOSO (5 subjects, W=20, defaults): mean F1-macro %.4f (>= 0.85), folds%s, %.0fs (< 600s)",
                mean, folds.c_str(), elapsed);
  report(6, mean >= 0.85 && elapsed < 600.0, buf);
}

// --- criteria 7 and 8 --------------------------------------------------------

FgseConfig reduced_cfg(int window) {
  FgseConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_graph_layers = 2;
  cfg.n_seq_layers = 2;
  cfg.window = window;
  return cfg;
}

TrainConfig reduced_train(unsigned seed) {
  TrainConfig t;
  t.epochs = 22;
  t.seed = seed;
  return t;
}

void criterion_window_scaling() {
  const auto t0 = Clock::now();
  // Long segment durations plus heavier jitter: the regime where per-frame
  // relation bits are unreliable and a larger window genuinely buys
  // accuracy. The stride is held fixed so both window lengths see the same
  // number of training windows.
  SuiteProfile prof = suite_profile("long");
  prof.noise_sigma = 0.015f;
  const EpisodeDataset ds = generate_benchmark_suite(3, 8, 7, prof);
  const std::vector<int> windows{10, 20};
  const std::vector<unsigned> seeds{1u, 2u, 3u};
  TrainConfig tcfg;
  tcfg.epochs = 24;
  tcfg.stride = 5;
  const auto rows = window_scaling_experiment(ds, windows, seeds, reduced_cfg(10), tcfg,
                                              InferConfig{}, 0, env_thread_cap());
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "temporal scaling on long actions: F1-macro W=20 %.4f >= W=10 %.4f (3-seed means), %.0fs",
                rows[1].mean_macro, rows[0].mean_macro, seconds_since(t0));
  report(7, rows[1].mean_macro >= rows[0].mean_macro, buf);
}

void criterion_ablations() {
  const auto t0 = Clock::now();
  const EpisodeDataset ds = generate_benchmark_suite(3, 8, 11);
  const auto folds = make_folds(ds);
  const Fold& fold = folds[0];
  const int n_classes = static_cast<int>(ds.vocab.labels.size());
  std::vector<GraphSequence> test;
  for (int i : fold.test_indices) test.push_back(ds.sequences[i]);

  double vote_mean = 0, center_mean = 0, single_mean = 0, mean_pool_mean = 0;
  for (unsigned seed : {1u, 2u, 3u}) {
    // One per-frame hand-pooling model serves voting and center evaluation.
    FgseConfig frame_cfg = reduced_cfg(20);
    const FgseModel frame_model = train(ds, fold, frame_cfg, reduced_train(seed));
    vote_mean +=
        evaluate(std::make_shared<FgseWindowModel>(frame_model), test, {}, n_classes).f1_macro / 3;

    FgseConfig center_cfg = frame_model.config();
    center_cfg.output = OutputMode::center;
    FgseModel center_model(center_cfg, frame_model.vocabulary(), 0);
    for (std::size_t i = 0; i < frame_model.named_parameters().size(); ++i) {
      const auto src = frame_model.named_parameters()[i].second.values();
      Tensor dst = center_model.named_parameters()[i].second;
      std::copy(src.begin(), src.end(), dst.values().begin());
    }
    center_mean +=
        evaluate(std::make_shared<FgseWindowModel>(center_model), test, {}, n_classes).f1_macro / 3;

    FgseConfig single_cfg = reduced_cfg(20);
    single_cfg.output = OutputMode::single;
    const FgseModel single_model = train(ds, fold, single_cfg, reduced_train(seed));
    single_mean +=
        evaluate(std::make_shared<FgseWindowModel>(single_model), test, {}, n_classes).f1_macro / 3;

    FgseConfig mean_cfg = reduced_cfg(20);
    mean_cfg.pooling = PoolingMode::global_mean;
    const FgseModel mean_model = train(ds, fold, mean_cfg, reduced_train(seed));
    mean_pool_mean +=
        evaluate(std::make_shared<FgseWindowModel>(mean_model), test, {}, n_classes).f1_macro / 3;
  }
  const bool order_ok = vote_mean >= center_mean && center_mean >= single_mean;
  const bool pool_ok = vote_mean >= mean_pool_mean;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "ablations: voting %.4f >= center %.4f >= single %.4f; hand %.4f >= mean pooling "
                "%.4f (3-seed means), %.0fs",
                vote_mean, center_mean, single_mean, vote_mean, mean_pool_mean,
                seconds_since(t0));
  report(8, order_ok && pool_ok, buf);
}

// --- criterion 9 ------------------------------------------------------------

void criterion_throughput() {
  const EpisodeDataset ds = generate_benchmark_suite(2, 3, 21, suite_profile("long"));
  FgseConfig cfg;  // desk defaults: d=64, heads 4, N=2, seq 2
  cfg.window = 30;
  cfg.n_classes = static_cast<int>(ds.vocab.labels.size());
  cfg.n_categories = static_cast<int>(ds.vocab.objects.size());
  cfg.n_heads_out = 2;
  const FgseModel model(cfg, ds.vocab, 3);
  StreamEngine engine(std::make_shared<FgseWindowModel>(model));

  long pushed = 0;
  float fps = 0.0f;
  const auto t0 = Clock::now();
  for (const GraphSequence& seq : ds.sequences) {
    const GraphSequence reduced = downsample(seq, 3);
    fps = reduced.fps;
    engine.set_fps(fps);
    for (const SceneGraph& g : reduced.graphs) {
      engine.push_frame(g);
      ++pushed;
    }
    engine.flush();
    engine.set_fps(fps);
  }
  const double seconds = seconds_since(t0);
  const double rate = pushed / seconds;
  const auto rep = engine.latency_report();
  const double expected_delay = static_cast<double>(cfg.window) / fps;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "throughput: %.0f graphs/s single-threaded (>= 30); structural delay %.3fs == "
                "W/fps %.3fs",
                rate, rep.structural_delay_s, expected_delay);
  report(9, rate >= 30.0 && rep.structural_delay_s == expected_delay, buf);
}

// --- criterion 10 (optional, dataset-gated) -----------------------------------

void criterion_bimacs() {
  const char* path = std::getenv("FGSE_BIMACS_PATH");
  if (!path) {
    report_skip(10, "external Bimacs reproduction (set FGSE_BIMACS_PATH to a bimacs-json file)");
    return;
  }
  const auto t0 = Clock::now();
  const EpisodeDataset ds = load_dataset(path, DatasetFormat::bimacs_json);
  FgseConfig mcfg;
  mcfg.window = 30;
  const auto outcomes = run_loso(ds, mcfg, TrainConfig{}, InferConfig{}, env_thread_cap());
  double mean = 0.0;
  for (const auto& o : outcomes) mean += o.eval.f1_macro / outcomes.size();
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "Bimacs W30-D3 LOSO: mean F1-macro %.1f (target 78.1 +- 5), %.0fs", mean * 100.0,
                seconds_since(t0));
  report(10, std::abs(mean * 100.0 - 78.1) <= 5.0, buf);
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_permutation();
  criterion_voting();
  criterion_mirroring();
  criterion_relations();
  criterion_loso();
  criterion_window_scaling();
  criterion_ablations();
  criterion_throughput();
  criterion_bimacs();
  std::printf("%d criterion failure(s)\n", g_failures);
  return g_failures;
}
