#include "fgse/train.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <thread>

namespace fgse {

namespace {

void fisher_yates(std::vector<std::pair<int, int>>& v, std::mt19937& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng() % i]);
  }
}

int argmax_row(std::span<const float> row) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

/// Runs jobs [0, n) on up to max_threads workers; job order within a worker
/// is arbitrary but each job writes only its own slot.
void parallel_jobs(int n, int max_threads, const std::function<void(int)>& job) {
  const int workers = std::max(1, std::min(max_threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

int env_thread_cap() {
  if (const char* env = std::getenv("FGSE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::vector<Fold> make_folds(const EpisodeDataset& ds) {
  const std::vector<int> subjects = ds.subjects();
  if (subjects.size() < 2) {
    throw std::invalid_argument("make_folds: need at least two subjects, got " +
                                std::to_string(subjects.size()));
  }
  std::vector<Fold> folds;
  for (int s : subjects) {
    Fold f;
    f.test_subject = s;
    for (int i = 0; i < static_cast<int>(ds.sequences.size()); ++i) {
      (ds.sequences[i].subject == s ? f.test_indices : f.train_indices).push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

Tensor window_loss(const FgseModel& model, std::span<const SceneGraph> window,
                   std::span<const std::vector<int>> window_labels) {
  const FgseConfig& cfg = model.config();
  if (static_cast<int>(window_labels.size()) != cfg.n_heads_out) {
    throw std::invalid_argument("window_loss: label streams do not match heads");
  }
  for (const auto& stream : window_labels) {
    if (stream.size() != window.size()) {
      throw std::invalid_argument("window_loss: labels not aligned to window frames");
    }
  }
  const std::vector<Tensor> logits = model.forward_logits(window);
  std::vector<Tensor> terms;
  for (int h = 0; h < cfg.n_heads_out; ++h) {
    if (cfg.output == OutputMode::single) {
      terms.push_back(cross_entropy(logits[h], window_labels[h].back()));
    } else {
      for (int w = 0; w < cfg.window; ++w) {
        terms.push_back(cross_entropy(gather_rows(logits[h], {w}), window_labels[h][w]));
      }
    }
  }
  return scale(add_n(terms), 1.0f / static_cast<float>(terms.size()));
}

FgseModel train(const EpisodeDataset& ds, const Fold& fold, FgseConfig mcfg, TrainConfig tcfg,
                TrainRun* run) {
  mcfg.n_classes = static_cast<int>(ds.vocab.labels.size());
  mcfg.n_categories = static_cast<int>(ds.vocab.objects.size());
  mcfg.n_heads_out = ds.vocab.heads;
  mcfg.validate();

  std::vector<GraphSequence> seqs;
  for (int idx : fold.train_indices) {
    const GraphSequence& s = ds.sequences[idx];
    if (s.subject == fold.test_subject) {
      throw std::logic_error("train: test-subject sequence reached the sampler");
    }
    seqs.push_back(downsample(s, tcfg.downsample));
  }
  if (tcfg.mirror && ds.vocab.heads == 2) {
    const std::size_t n = seqs.size();
    for (std::size_t i = 0; i < n; ++i) seqs.push_back(mirror_graph_sequence(seqs[i]));
  }

  const int w = mcfg.window;
  const int stride = tcfg.stride > 0 ? tcfg.stride : std::max(1, w / 2);
  std::vector<std::pair<int, int>> windows;  // (sequence, start)
  for (int si = 0; si < static_cast<int>(seqs.size()); ++si) {
    for (int start = 0; start + w <= seqs[si].length(); start += stride) {
      windows.emplace_back(si, start);
    }
  }
  if (windows.empty()) {
    throw std::invalid_argument(
        "train: no training sequence is at least one window long after downsampling (W=" +
        std::to_string(w) + ", D=" + std::to_string(tcfg.downsample) + ")");
  }

  FgseModel model(mcfg, ds.vocab, tcfg.seed);
  Adam adam(model.parameters(), tcfg.adam);
  std::mt19937 rng(tcfg.seed);

  if (run) {
    run->model_config = mcfg;
    run->train_config = tcfg;
    run->windows_per_epoch = static_cast<long>(windows.size());
    run->seed = tcfg.seed;
    run->dataset_hash = ds.content_hash();
    run->fold_test_subject = fold.test_subject;
    run->epoch_loss.clear();
    run->epoch_f1_macro.clear();
    run->epoch_f1_micro.clear();
  }

  std::vector<std::vector<int>> window_labels(mcfg.n_heads_out);
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    fisher_yates(windows, rng);
    double loss_sum = 0.0;
    std::vector<int> ep_preds, ep_truth;

    for (std::size_t pos = 0; pos < windows.size();) {
      const std::size_t batch_end = std::min(windows.size(), pos + tcfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(batch_end - pos);
      adam.zero_grad();
      for (; pos < batch_end; ++pos) {
        const auto [si, start] = windows[pos];
        const GraphSequence& seq = seqs[si];
        const std::span<const SceneGraph> win(seq.graphs.data() + start, w);
        for (int h = 0; h < mcfg.n_heads_out; ++h) {
          window_labels[h].assign(seq.labels[h].begin() + start,
                                  seq.labels[h].begin() + start + w);
        }
        Tape tape;
        {
          Tape::Scope scope(tape);
          const std::vector<Tensor> logits = model.forward_logits(win);
          std::vector<Tensor> terms;
          for (int h = 0; h < mcfg.n_heads_out; ++h) {
            if (mcfg.output == OutputMode::single) {
              terms.push_back(cross_entropy(logits[h], window_labels[h].back()));
              ep_preds.push_back(argmax_row(logits[h].values()));
              ep_truth.push_back(window_labels[h].back());
            } else {
              for (int wi = 0; wi < w; ++wi) {
                terms.push_back(cross_entropy(gather_rows(logits[h], {wi}), window_labels[h][wi]));
                ep_preds.push_back(argmax_row(
                    logits[h].values().subspan(static_cast<std::size_t>(wi) * mcfg.n_classes,
                                               mcfg.n_classes)));
                ep_truth.push_back(window_labels[h][wi]);
              }
            }
          }
          const Tensor loss = scale(add_n(terms), 1.0f / static_cast<float>(terms.size()));
          loss_sum += loss.item();
          tape.backward(scale(loss, inv_batch));
        }
      }
      adam.step();
    }

    if (run) {
      run->epoch_loss.push_back(loss_sum / static_cast<double>(windows.size()));
      const F1Result f1 = f1_scores(ep_preds, ep_truth, mcfg.n_classes);
      run->epoch_f1_macro.push_back(f1.macro);
      run->epoch_f1_micro.push_back(f1.micro);
    }
  }
  return model;
}

F1Result f1_scores(std::span<const int> preds, std::span<const int> truth, int n_classes) {
  if (preds.size() != truth.size()) {
    throw std::invalid_argument("f1_scores: prediction/truth length mismatch");
  }
  std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int t = truth[i];
    if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
      throw std::out_of_range("f1_scores: class index outside [0, n_classes)");
    }
    if (p == t) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  long tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  int macro_classes = 0;
  for (int c = 0; c < n_classes; ++c) {
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
    if (tp[c] + fp[c] + fn[c] == 0) continue;  // absent from truth and predictions
    macro_sum += 2.0 * tp[c] / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    ++macro_classes;
  }
  F1Result out;
  out.micro = preds.empty() ? 0.0 : 2.0 * tp_all / static_cast<double>(2 * tp_all + fp_all + fn_all);
  out.macro = macro_classes ? macro_sum / macro_classes : 0.0;
  return out;
}

EvalResult evaluate(std::shared_ptr<const WindowModel> model,
                    std::span<const GraphSequence> episodes, const InferConfig& icfg,
                    int n_classes) {
  std::vector<int> pooled_preds, pooled_truth;
  StreamEngine engine(model, icfg.stride);
  for (const GraphSequence& episode : episodes) {
    const GraphSequence reduced = downsample(episode, icfg.downsample);
    engine.set_fps(reduced.fps);
    std::vector<std::vector<int>> preds(model->n_heads_out());
    auto absorb = [&](const std::vector<FinalPrediction>& finals) {
      for (const FinalPrediction& f : finals) {
        for (int h = 0; h < model->n_heads_out(); ++h) preds[h].push_back(f.labels[h]);
      }
    };
    for (const SceneGraph& g : reduced.graphs) absorb(engine.push_frame(g));
    absorb(engine.flush());

    for (int h = 0; h < model->n_heads_out(); ++h) {
      const std::vector<int> full =
          upsample_predictions(preds[h], icfg.downsample, episode.length());
      pooled_preds.insert(pooled_preds.end(), full.begin(), full.end());
      pooled_truth.insert(pooled_truth.end(), episode.labels[h].begin(), episode.labels[h].end());
    }
  }
  const F1Result f1 = f1_scores(pooled_preds, pooled_truth, n_classes);
  return {f1.macro, f1.micro, static_cast<long>(pooled_preds.size())};
}

std::vector<FoldOutcome> run_loso(const EpisodeDataset& ds, const FgseConfig& mcfg,
                                  const TrainConfig& tcfg, const InferConfig& icfg,
                                  int max_threads) {
  const std::vector<Fold> folds = make_folds(ds);
  std::vector<FoldOutcome> out(folds.size());
  parallel_jobs(static_cast<int>(folds.size()), max_threads, [&](int fi) {
    const Fold& fold = folds[fi];
    TrainConfig cfg = tcfg;
    cfg.seed = tcfg.seed + static_cast<unsigned>(fi);
    FoldOutcome& res = out[fi];
    res.test_subject = fold.test_subject;
    auto model = std::make_shared<const FgseModel>(train(ds, fold, mcfg, cfg, &res.run));
    std::vector<GraphSequence> test;
    for (int idx : fold.test_indices) test.push_back(ds.sequences[idx]);
    res.eval = evaluate(std::make_shared<FgseWindowModel>(*model), test, icfg,
                        static_cast<int>(ds.vocab.labels.size()));
    res.model = std::move(model);
  });
  return out;
}

std::vector<ScalingRow> window_scaling_experiment(const EpisodeDataset& ds,
                                                  std::span<const int> windows,
                                                  std::span<const unsigned> seeds,
                                                  FgseConfig base_cfg, TrainConfig tcfg,
                                                  InferConfig icfg, int fold_index,
                                                  int max_threads) {
  const std::vector<Fold> folds = make_folds(ds);
  if (fold_index < 0 || fold_index >= static_cast<int>(folds.size())) {
    throw std::out_of_range("window_scaling_experiment: fold index outside fold list");
  }
  const Fold& fold = folds[fold_index];

  struct Job {
    int wi;
    int si;
  };
  std::vector<Job> jobs;
  for (int wi = 0; wi < static_cast<int>(windows.size()); ++wi) {
    for (int si = 0; si < static_cast<int>(seeds.size()); ++si) jobs.push_back({wi, si});
  }
  std::vector<ScalingRow> rows(windows.size());
  for (int wi = 0; wi < static_cast<int>(windows.size()); ++wi) {
    rows[wi].window = windows[wi];
    rows[wi].per_seed_macro.assign(seeds.size(), 0.0);
  }
  parallel_jobs(static_cast<int>(jobs.size()), max_threads, [&](int ji) {
    const Job job = jobs[ji];
    FgseConfig mcfg = base_cfg;
    mcfg.window = windows[job.wi];
    TrainConfig cfg = tcfg;
    cfg.seed = seeds[job.si];
    const FgseModel model = train(ds, fold, mcfg, cfg, nullptr);
    std::vector<GraphSequence> test;
    for (int idx : fold.test_indices) test.push_back(ds.sequences[idx]);
    const EvalResult ev = evaluate(std::make_shared<FgseWindowModel>(model), test, icfg,
                                   static_cast<int>(ds.vocab.labels.size()));
    rows[job.wi].per_seed_macro[job.si] = ev.f1_macro;
  });
  for (ScalingRow& r : rows) {
    for (double v : r.per_seed_macro) r.mean_macro += v;
    r.mean_macro /= static_cast<double>(r.per_seed_macro.size());
  }
  return rows;
}

}  // namespace fgse
