#include "fgse/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fgse {

namespace {

float init_bound(int fan_in) { return 1.0f / std::sqrt(static_cast<float>(fan_in)); }

}  // namespace

PoolingMode pooling_mode_from_name(const std::string& name) {
  if (name == "hand") return PoolingMode::hand;
  if (name == "mean") return PoolingMode::global_mean;
  throw std::invalid_argument("unknown pooling mode '" + name + "' (expected hand or mean)");
}

OutputMode output_mode_from_name(const std::string& name) {
  if (name == "frame") return OutputMode::per_frame;
  if (name == "single") return OutputMode::single;
  if (name == "center") return OutputMode::center;
  throw std::invalid_argument("unknown output mode '" + name +
                              "' (expected frame, single or center)");
}

const char* pooling_mode_name(PoolingMode m) {
  return m == PoolingMode::hand ? "hand" : "mean";
}

const char* output_mode_name(OutputMode m) {
  switch (m) {
    case OutputMode::per_frame: return "frame";
    case OutputMode::single: return "single";
    case OutputMode::center: return "center";
  }
  return "?";
}

int FgseConfig::pooled_width() const {
  return pooling == PoolingMode::hand ? n_heads_out * d_model : d_model;
}

void FgseConfig::validate() const {
  if (n_graph_layers < 1) throw std::invalid_argument("config: n_graph_layers must be >= 1");
  if (n_seq_layers < 1) throw std::invalid_argument("config: n_seq_layers must be >= 1");
  if (window < 1) throw std::invalid_argument("config: window must be >= 1");
  if (d_model < 1) throw std::invalid_argument("config: d_model must be >= 1");
  if (n_heads < 1) throw std::invalid_argument("config: n_heads must be >= 1");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("config: d_model must be divisible by n_heads");
  }
  if (pooled_width() % n_heads != 0) {
    throw std::invalid_argument("config: pooled width must be divisible by n_heads");
  }
  if (n_heads_out != 1 && n_heads_out != 2) {
    throw std::invalid_argument("config: n_heads_out must be 1 or 2");
  }
  if (n_classes < 1) throw std::invalid_argument("config: n_classes must be >= 1");
  if (n_categories < 1) throw std::invalid_argument("config: n_categories must be >= 1");
  if (ff_mult < 1) throw std::invalid_argument("config: ff_mult must be >= 1");
}

Tensor hand_pool(const Tensor& node_embeds, const SceneGraph& g, int n_hands) {
  const int d = node_embeds.cols();
  auto row_for = [&](HandRole role) -> Tensor {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (g.nodes[i].hand == role) {
        return gather_rows(node_embeds, {static_cast<int>(i)});
      }
    }
    return Tensor::zeros(1, d);
  };
  if (n_hands == 2) {
    const Tensor parts[2] = {row_for(HandRole::left), row_for(HandRole::right)};
    return concat_cols(parts);
  }
  // Single-stream configs pool whichever hand the frame designates.
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].hand != HandRole::none) {
      return gather_rows(node_embeds, {static_cast<int>(i)});
    }
  }
  return Tensor::zeros(1, d);
}

Tensor global_mean_pool(const Tensor& node_embeds) {
  if (node_embeds.rows() < 1) throw std::invalid_argument("global_mean_pool: empty graph");
  return mean_rows(node_embeds);
}

FgseModel::FgseModel(FgseConfig cfg, Vocabulary vocab, unsigned seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.validate();
  if (static_cast<int>(vocab_.objects.size()) != cfg_.n_categories) {
    throw std::invalid_argument("model: vocabulary object count differs from config");
  }
  if (static_cast<int>(vocab_.labels.size()) != cfg_.n_classes) {
    throw std::invalid_argument("model: vocabulary label count differs from config");
  }
  std::mt19937 rng(seed);
  const int d = cfg_.d_model;
  const int p = cfg_.pooled_width();
  const int f = cfg_.ff_mult * p;

  auto linear = [&](const std::string& name, int in, int out) {
    const float b = init_bound(in);
    params_.emplace_back(name + ".w", Tensor::uniform(in, out, -b, b, rng, true));
    params_.emplace_back(name + ".b", Tensor::uniform(1, out, -b, b, rng, true));
  };
  auto norm = [&](const std::string& name, int width) {
    params_.emplace_back(name + ".g", Tensor::full(1, width, 1.0f, true));
    params_.emplace_back(name + ".b", Tensor::zeros(1, width, true));
  };

  linear("ge.input", cfg_.n_categories, d);
  for (int l = 0; l < cfg_.n_graph_layers; ++l) {
    const std::string base = "ge.layer" + std::to_string(l);
    linear(base + ".q", d, d);
    linear(base + ".k", d, d);
    linear(base + ".v", d, d);
    linear(base + ".e", kRelationCount, d);
    linear(base + ".skip", d, d);
    norm(base + ".ln", d);
  }
  {
    const float b = init_bound(p);
    params_.emplace_back("se.pos", Tensor::uniform(cfg_.window, p, -b, b, rng, true));
  }
  for (int l = 0; l < cfg_.n_seq_layers; ++l) {
    const std::string base = "se.layer" + std::to_string(l);
    norm(base + ".ln1", p);
    linear(base + ".attn.q", p, p);
    linear(base + ".attn.k", p, p);
    linear(base + ".attn.v", p, p);
    linear(base + ".attn.o", p, p);
    norm(base + ".ln2", p);
    linear(base + ".ff.1", p, f);
    linear(base + ".ff.2", f, p);
  }
  norm("se.final_ln", p);
  for (int h = 0; h < cfg_.n_heads_out; ++h) {
    linear("head" + std::to_string(h), p, cfg_.n_classes);
  }
}

std::vector<Tensor> FgseModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

Tensor FgseModel::param(std::string_view name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

Tensor FgseModel::graph_conv(const Tensor& x, const SceneGraph& g, int layer) const {
  const std::string base = "ge.layer" + std::to_string(layer);
  const Tensor skip = add_rowwise(matmul(x, param(base + ".skip.w")), param(base + ".skip.b"));
  if (g.edges.empty()) return skip;

  const int n = x.rows();
  const int d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const int dh = d / heads;
  const int m = static_cast<int>(g.edges.size());

  std::vector<int> src_rows(m), dst_rows(m);
  std::vector<float> efeat(static_cast<std::size_t>(m) * kRelationCount, 0.0f);
  for (int e = 0; e < m; ++e) {
    const SceneGraphEdge& edge = g.edges[e];
    const int sr = g.node_row(edge.src_id);
    const int dr = g.node_row(edge.dst_id);
    if (sr < 0 || dr < 0) throw std::out_of_range("graph_conv: edge endpoint not among nodes");
    src_rows[e] = sr;
    dst_rows[e] = dr;
    for (int b = 0; b < kRelationCount; ++b) {
      efeat[static_cast<std::size_t>(e) * kRelationCount + b] = edge.rel.bits.test(b) ? 1.0f : 0.0f;
    }
  }

  const Tensor q = add_rowwise(matmul(x, param(base + ".q.w")), param(base + ".q.b"));
  const Tensor k = add_rowwise(matmul(x, param(base + ".k.w")), param(base + ".k.b"));
  const Tensor v = add_rowwise(matmul(x, param(base + ".v.w")), param(base + ".v.b"));
  const Tensor e_in = Tensor::from(m, kRelationCount, std::move(efeat));
  const Tensor e_proj = add_rowwise(matmul(e_in, param(base + ".e.w")), param(base + ".e.b"));

  // Keys and values live per edge: source node projection plus the shared
  // edge embedding.
  const Tensor k_msg = add(gather_rows(k, src_rows), e_proj);
  const Tensor v_msg = add(gather_rows(v, src_rows), e_proj);
  const Tensor q_dst = gather_rows(q, dst_rows);

  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q_dst, h * dh, dh);
    const Tensor kh = slice_cols(k_msg, h * dh, dh);
    const Tensor vh = slice_cols(v_msg, h * dh, dh);
    const Tensor scores = scale(row_dot(qh, kh), inv_sqrt);
    const Tensor alpha = segment_softmax(scores, dst_rows, n);
    head_out.push_back(segment_sum_weighted(vh, alpha, dst_rows, n));
  }
  return add(skip, concat_cols(head_out));
}

Tensor FgseModel::graph_encode(const SceneGraph& g) const {
  const int n = static_cast<int>(g.nodes.size());
  if (n < 1) throw std::invalid_argument("graph_encode: empty graph");
  std::vector<float> onehot(static_cast<std::size_t>(n) * cfg_.n_categories, 0.0f);
  for (int i = 0; i < n; ++i) {
    const int c = g.nodes[i].category;
    if (c < 0 || c >= cfg_.n_categories) {
      throw std::out_of_range("graph_encode: category " + std::to_string(c) +
                              " outside vocabulary of size " + std::to_string(cfg_.n_categories));
    }
    onehot[static_cast<std::size_t>(i) * cfg_.n_categories + c] = 1.0f;
  }
  Tensor x = add_rowwise(matmul(Tensor::from(n, cfg_.n_categories, std::move(onehot)),
                                param("ge.input.w")),
                         param("ge.input.b"));
  for (int l = 0; l < cfg_.n_graph_layers; ++l) {
    const std::string base = "ge.layer" + std::to_string(l);
    x = layer_norm(selu(graph_conv(x, g, l)), param(base + ".ln.g"), param(base + ".ln.b"));
  }
  return x;
}

Tensor FgseModel::encode_frame(const SceneGraph& g) const {
  const Tensor embeds = graph_encode(g);
  return cfg_.pooling == PoolingMode::hand ? hand_pool(embeds, g, cfg_.n_heads_out)
                                           : global_mean_pool(embeds);
}

Tensor FgseModel::sequence_encode(const Tensor& z) const {
  const int p = cfg_.pooled_width();
  if (z.rows() != cfg_.window || z.cols() != p) {
    throw std::invalid_argument("sequence_encode: expected " + std::to_string(cfg_.window) + "x" +
                                std::to_string(p) + " input");
  }
  const int heads = cfg_.n_heads;
  const int dh = p / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor x = add(z, param("se.pos"));
  for (int l = 0; l < cfg_.n_seq_layers; ++l) {
    const std::string base = "se.layer" + std::to_string(l);
    {
      const Tensor a = layer_norm(x, param(base + ".ln1.g"), param(base + ".ln1.b"));
      const Tensor q = add_rowwise(matmul(a, param(base + ".attn.q.w")), param(base + ".attn.q.b"));
      const Tensor k = add_rowwise(matmul(a, param(base + ".attn.k.w")), param(base + ".attn.k.b"));
      const Tensor v = add_rowwise(matmul(a, param(base + ".attn.v.w")), param(base + ".attn.v.b"));
      std::vector<Tensor> ctx;
      ctx.reserve(heads);
      for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        const Tensor attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        ctx.push_back(matmul(attn, vh));
      }
      const Tensor o =
          add_rowwise(matmul(concat_cols(ctx), param(base + ".attn.o.w")), param(base + ".attn.o.b"));
      x = add(x, o);
    }
    {
      const Tensor b = layer_norm(x, param(base + ".ln2.g"), param(base + ".ln2.b"));
      const Tensor h1 = selu(add_rowwise(matmul(b, param(base + ".ff.1.w")), param(base + ".ff.1.b")));
      const Tensor h2 = add_rowwise(matmul(h1, param(base + ".ff.2.w")), param(base + ".ff.2.b"));
      x = add(x, h2);
    }
  }
  return layer_norm(x, param("se.final_ln.g"), param("se.final_ln.b"));
}

std::vector<Tensor> FgseModel::window_logits_from_pooled(const Tensor& z) const {
  const Tensor encoded = sequence_encode(z);
  const Tensor basis = cfg_.output == OutputMode::single ? mean_rows(encoded) : encoded;
  std::vector<Tensor> logits;
  logits.reserve(cfg_.n_heads_out);
  for (int h = 0; h < cfg_.n_heads_out; ++h) {
    const std::string base = "head" + std::to_string(h);
    logits.push_back(add_rowwise(matmul(basis, param(base + ".w")), param(base + ".b")));
  }
  return logits;
}

std::vector<Tensor> FgseModel::forward_logits(std::span<const SceneGraph> window) const {
  if (static_cast<int>(window.size()) != cfg_.window) {
    throw std::invalid_argument("forward: expected a window of " + std::to_string(cfg_.window) +
                                " graphs, got " + std::to_string(window.size()));
  }
  std::vector<Tensor> pooled;
  pooled.reserve(window.size());
  for (const SceneGraph& g : window) pooled.push_back(encode_frame(g));
  return window_logits_from_pooled(concat_rows(pooled));
}

std::vector<Tensor> FgseModel::forward(std::span<const SceneGraph> window) const {
  std::vector<Tensor> logits = forward_logits(window);
  std::vector<Tensor> out;
  out.reserve(logits.size());
  for (Tensor& l : logits) {
    if (cfg_.output == OutputMode::center) {
      out.push_back(softmax_rows(gather_rows(l, {cfg_.window / 2})));
    } else {
      out.push_back(softmax_rows(l));
    }
  }
  return out;
}

long count_params(const FgseConfig& cfg) {
  cfg.validate();
  const long d = cfg.d_model;
  const long p = cfg.pooled_width();
  const long f = static_cast<long>(cfg.ff_mult) * p;
  long total = 0;
  total += static_cast<long>(cfg.n_categories) * d + d;
  total += cfg.n_graph_layers * (4 * (d * d + d) + (kRelationCount * d + d) + 2 * d);
  total += static_cast<long>(cfg.window) * p;
  total += cfg.n_seq_layers * (4 * (p * p + p) + 4 * p + (p * f + f) + (f * p + p));
  total += 2 * p;
  total += static_cast<long>(cfg.n_heads_out) * (p * cfg.n_classes + cfg.n_classes);
  return total;
}

}  // namespace fgse
