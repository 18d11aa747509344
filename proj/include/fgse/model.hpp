#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fgse/dataset.hpp"
#include "fgse/scene_graph.hpp"
#include "fgse/tensor.hpp"

namespace fgse {

enum class PoolingMode { hand, global_mean };
enum class OutputMode { per_frame, single, center };

PoolingMode pooling_mode_from_name(const std::string& name);  // "hand" | "mean"
OutputMode output_mode_from_name(const std::string& name);    // "frame" | "single" | "center"
const char* pooling_mode_name(PoolingMode m);
const char* output_mode_name(OutputMode m);

struct FgseConfig {
  int n_graph_layers = 2;  // graph encoder depth N
  int d_model = 64;
  int n_heads = 4;
  int n_seq_layers = 2;
  int window = 30;  // W
  int n_classes = 0;
  int n_heads_out = 2;  // per-hand label streams (1 or 2)
  int n_categories = 0;
  PoolingMode pooling = PoolingMode::hand;
  OutputMode output = OutputMode::per_frame;
  int ff_mult = 4;

  /// Width of the pooled per-frame token: n_heads_out * d_model under hand
  /// pooling (both hands concatenated), d_model under global mean pooling.
  int pooled_width() const;
  void validate() const;  // throws std::invalid_argument
};

/// Parameter-free readout selecting the hand rows of a graph embedding, in
/// fixed (left, right) order for two-stream configs. A missing hand
/// contributes a zero row.
Tensor hand_pool(const Tensor& node_embeds, const SceneGraph& g, int n_hands);
Tensor global_mean_pool(const Tensor& node_embeds);

/// The model: attention-based graph encoder over each frame, hand pooling,
/// encoder-only transformer across the window, per-head linear classifiers.
class FgseModel {
 public:
  FgseModel() = default;
  FgseModel(FgseConfig cfg, Vocabulary vocab, unsigned seed);

  const FgseConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Deterministically ordered; the order fixes checkpoint layout and
  /// initialization draws.
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  Tensor param(std::string_view name) const;  // throws std::out_of_range

  /// One attention message-passing layer over arbitrary node features:
  /// out_i = W_skip x_i + sum over in-edges j->i of
  ///         softmax_i((W_q x_i) . (W_k x_j + W_e e_ji) / sqrt(d/h)) *
  ///         (W_v x_j + W_e e_ji),
  /// multi-head with concatenation. A node without in-edges keeps only its
  /// skip term.
  Tensor graph_conv(const Tensor& x, const SceneGraph& g, int layer) const;

  /// One frame through the graph encoder: input projection of the one-hot
  /// categories, then N x (attention conv -> SELU -> LayerNorm).  n x d.
  Tensor graph_encode(const SceneGraph& g) const;
  /// graph_encode + configured pooling.  1 x p.
  Tensor encode_frame(const SceneGraph& g) const;
  /// Positional embeddings + n_seq_layers pre-norm transformer blocks
  /// (bidirectional attention) + final norm. Requires exactly W rows.
  Tensor sequence_encode(const Tensor& z) const;

  /// Per-head classifier logits from a W x p pooled window.
  /// per_frame/center: W x C rows; single: 1 x C from the mean output row.
  std::vector<Tensor> window_logits_from_pooled(const Tensor& z) const;
  std::vector<Tensor> forward_logits(std::span<const SceneGraph> window) const;
  /// Softmax outputs; per_frame: W x C, center: the W/2 row only, single:
  /// 1 x C.
  std::vector<Tensor> forward(std::span<const SceneGraph> window) const;

 private:
  FgseConfig cfg_;
  Vocabulary vocab_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

/// Exact learned-scalar count for a config. Closed form, per block:
///   graph encoder: n_categories*d + d input projection, then per layer
///     4*(d*d + d) query/key/value/skip + (14*d + d) edge + 2*d norm;
///   sequence encoder (p = pooled width): W*p positions, per layer
///     4*(p*p + p) attention + 4*p norms + p*f*p + f*p + f*p*p + p feed
///     forward (f = ff_mult), plus 2*p final norm;
///   heads: n_heads_out * (p*n_classes + n_classes).
long count_params(const FgseConfig& cfg);

}  // namespace fgse
