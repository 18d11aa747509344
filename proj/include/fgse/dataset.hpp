#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgse/scene_graph.hpp"

namespace fgse {

/// Parse failure with 1-based line context where applicable (0 = unknown).
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_number(line) {}
  std::size_t line_number;
};

struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Object and label tables shared by a dataset, a model, and its
/// checkpoints. The relation bit order is fixed by kRelationNames and is
/// written into every sidecar so files stay self-describing.
struct Vocabulary {
  std::vector<std::string> objects;
  std::vector<std::string> labels;
  int heads = 2;

  int object_index(const std::string& name) const;  // -1 when absent
  int label_index(const std::string& name) const;
  int add_object(const std::string& name);
  int add_label(const std::string& name);
  bool operator==(const Vocabulary&) const = default;
};

/// Labeled graph sequences grouped by subject for leave-one-subject-out
/// folds.
struct EpisodeDataset {
  std::vector<GraphSequence> sequences;
  Vocabulary vocab;

  std::vector<int> subjects() const;  // distinct, ascending
  /// Throws when any sequence breaks a SceneGraph/label invariant.
  void validate() const;
  /// FNV-1a over the canonical native serialization; stable across runs.
  std::uint64_t content_hash() const;
};

enum class DatasetFormat { fgse_jsonl, bimacs_json, coax_boxes };
DatasetFormat dataset_format_from_name(const std::string& name);  // throws on unknown
const char* dataset_format_name(DatasetFormat fmt);

/// Reads a dataset. fgse-jsonl is the native frame-per-line format with a
/// "<stem>.vocab.json" sidecar; bimacs-json carries pre-extracted graphs
/// whose relation names are mapped onto the fixed bit order; coax-boxes
/// carries raw 3D boxes (relations are computed here with cfg) and
/// action-object label pairs, which are merged into single classes over the
/// pairs actually present.
EpisodeDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                            const RelationThresholds& cfg = {});

/// Writes the native fgse-jsonl stream plus the vocabulary sidecar.
void save_dataset(const EpisodeDataset& ds, const std::filesystem::path& path);

/// One frame as a native JSON line (used by the streaming CLI as well).
std::string scene_graph_to_jsonl(const SceneGraph& g, int subject, float fps,
                                 std::span<const int> labels);

/// Sidecar path for a native dataset file.
std::filesystem::path vocab_sidecar_path(const std::filesystem::path& dataset_path);

// --- transforms ---------------------------------------------------------------

/// Swaps left/right hand roles, the two per-hand label streams, and the
/// left-of/right-of relation bits. An involution. Throws on single-head
/// datasets.
GraphSequence mirror_graph_sequence(const GraphSequence& s);

/// Keeps every factor-th frame (those at positions 0, factor, 2*factor, ...),
/// subsamples labels identically and divides fps.
GraphSequence downsample(const GraphSequence& s, int factor);

/// Repeats each reduced-rate prediction over its factor-sized span,
/// truncated to original_len. Requires ceil(original_len/factor) == #preds.
std::vector<int> upsample_predictions(const std::vector<int>& preds, int factor, int original_len);

}  // namespace fgse
