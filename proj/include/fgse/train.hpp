#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fgse/dataset.hpp"
#include "fgse/model.hpp"
#include "fgse/stream.hpp"

namespace fgse {

/// One leave-one-subject-out split.
struct Fold {
  int test_subject = -1;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

/// One fold per distinct subject; the test sets partition the dataset.
/// Throws std::invalid_argument with fewer than two subjects.
std::vector<Fold> make_folds(const EpisodeDataset& ds);

/// Cross-entropy averaged over the window's frames and heads. Labels are
/// window-aligned per head. Under OutputMode::single the loss reduces to
/// the cross-entropy of the one pooled prediction against the last frame's
/// label. Majority voting plays no part here.
Tensor window_loss(const FgseModel& model, std::span<const SceneGraph> window,
                   std::span<const std::vector<int>> window_labels);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  AdamConfig adam{};
  int stride = 0;      // window sampling stride; 0 means window/2
  bool mirror = true;  // doubles bimanual data via mirroring
  int downsample = 3;  // temporal factor applied before windowing
  unsigned seed = 0;
};

struct TrainRun {
  FgseConfig model_config;  // as resolved against the dataset vocabulary
  TrainConfig train_config;
  int fold_test_subject = -1;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_f1_macro;  // training-split, from window argmaxes
  std::vector<double> epoch_f1_micro;
  long windows_per_epoch = 0;
  unsigned seed = 0;
  std::uint64_t dataset_hash = 0;
  std::string checkpoint_path;  // filled by whoever saves the model
};

/// Window-sampled Adam training on the fold's training subjects.
/// mcfg's class/category/head counts are taken from the dataset vocabulary.
/// Deterministic for a fixed seed. Throws std::invalid_argument when no
/// training sequence is at least one window long after downsampling, and
/// std::logic_error if a test-subject sequence ever reaches the sampler.
FgseModel train(const EpisodeDataset& ds, const Fold& fold, FgseConfig mcfg, TrainConfig tcfg,
                TrainRun* run = nullptr);

struct F1Result {
  double macro = 0.0;
  double micro = 0.0;
};

/// Frame-level F1. micro pools true/false positives over everything; macro
/// averages per-class F1 over the classes that occur in truth or
/// predictions (classes absent from both are excluded, avoiding 0/0).
F1Result f1_scores(std::span<const int> preds, std::span<const int> truth, int n_classes);

struct InferConfig {
  int downsample = 3;
  int stride = 1;
};

struct EvalResult {
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  long frames = 0;  // scored frames, all heads pooled
};

/// Streams every episode through a StreamEngine at the reduced rate,
/// upsamples the emitted labels back to the original rate and scores them
/// against the full-rate ground truth, both hands pooled.
EvalResult evaluate(std::shared_ptr<const WindowModel> model,
                    std::span<const GraphSequence> episodes, const InferConfig& icfg,
                    int n_classes);

struct FoldOutcome {
  int test_subject = -1;
  EvalResult eval;
  TrainRun run;
  std::shared_ptr<const FgseModel> model;
};

/// Trains and evaluates every fold (fold f uses seed tcfg.seed + f), up to
/// max_threads folds in parallel. Results are ordered by fold and
/// independent of the thread schedule.
std::vector<FoldOutcome> run_loso(const EpisodeDataset& ds, const FgseConfig& mcfg,
                                  const TrainConfig& tcfg, const InferConfig& icfg,
                                  int max_threads = 1);

struct ScalingRow {
  int window = 0;
  std::vector<double> per_seed_macro;
  double mean_macro = 0.0;
};

/// Table-style window sweep: one train/evaluate run per (window, seed) on a
/// single fold, reporting F1-macro.
std::vector<ScalingRow> window_scaling_experiment(const EpisodeDataset& ds,
                                                  std::span<const int> windows,
                                                  std::span<const unsigned> seeds,
                                                  FgseConfig base_cfg, TrainConfig tcfg,
                                                  InferConfig icfg, int fold_index = 0,
                                                  int max_threads = 1);

/// Worker cap from the FGSE_THREADS environment variable, falling back to
/// the hardware concurrency.
int env_thread_cap();

}  // namespace fgse
