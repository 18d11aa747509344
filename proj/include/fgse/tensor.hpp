#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fgse {

/// Dense row-major float32 matrix participating in reverse-mode
/// differentiation. Scalars are 1x1, vectors 1xn; nothing in the engine
/// needs a higher rank. Copies share storage; the optimizer is the only
/// writer of trained parameters.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<float> data, bool requires_grad = false);
  static Tensor identity(int n);
  /// Uniform in [lo, hi). Derived from raw engine words so the stream is
  /// identical across standard libraries.
  static Tensor uniform(int rows, int cols, float lo, float hi, std::mt19937& rng,
                        bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  int rows() const;
  int cols() const;
  std::size_t size() const;
  std::vector<int> shape() const;

  std::span<float> values();
  std::span<const float> values() const;
  float at(int r, int c) const;
  float& mut(int r, int c);
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  /// Gradient buffer, same shape as values, allocated on first access.
  /// Reachable through const handles: copies share storage, and the
  /// gradient is accumulation scratch rather than part of the value.
  std::span<float> grad() const;
  bool has_grad() const;
  void zero_grad() const;

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    int rows = 0;
    int cols = 0;
    std::vector<float> values;
    std::vector<float> grad;  // empty until touched
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

/// Ordered record of executed differentiable operations. Ops append their
/// backward closures during the forward pass, so the record is already in
/// topological order; backward() replays it newest-first, accumulating into
/// Tensor::grad(). Single-threaded per training step; each thread sees its
/// own active tape.
class Tape {
 public:
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  void record(std::function<void()> backward);
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and replays the record in
  /// reverse. The tape keeps its nodes until clear().
  void backward(const Tensor& loss);
  void clear();

 private:
  std::vector<std::function<void()>> nodes_;
};

// --- differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
/// a[m x n] + bias[1 x n] broadcast over rows.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, float s);
/// Sum of same-shape tensors.
Tensor add_n(std::span<const Tensor> xs);

/// Self-normalizing ELU with the fixed lambda/alpha constants.
Tensor selu(const Tensor& x);
/// Row-wise normalization over the last axis followed by affine gain/bias.
/// eps must be > 0; it guards the zero-variance row.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
/// Row-wise softmax with max subtraction; rows sum to 1 within 1e-6 for any
/// finite input.
Tensor softmax_rows(const Tensor& x);
/// -log softmax(logits)[target] for a 1 x c logit row, computed via a stable
/// log-sum-exp. Throws std::out_of_range for a bad target.
Tensor cross_entropy(const Tensor& logits, int target);

Tensor mean_rows(const Tensor& x);                       // m x n -> 1 x n
Tensor concat_rows(std::span<const Tensor> xs);          // k tensors r_i x n -> (sum r_i) x n
Tensor concat_cols(std::span<const Tensor> xs);          // k tensors m x c_i -> m x (sum c_i)
Tensor slice_cols(const Tensor& x, int start, int count);
Tensor gather_rows(const Tensor& x, std::vector<int> idx);
/// Row-wise dot product of two m x d tensors -> m x 1.
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Softmax over score groups sharing a segment id (max-subtracted per
/// segment). scores is m x 1, seg holds one id in [0, n_segments) per row.
/// Empty segments are fine; they simply have no rows.
Tensor segment_softmax(const Tensor& scores, std::vector<int> seg, int n_segments);
/// out[s] = sum over rows r with seg[r]==s of w[r] * rows[r];  (n_segments x d).
Tensor segment_sum_weighted(const Tensor& rows, const Tensor& w, std::vector<int> seg,
                            int n_segments);

// --- optimizer -------------------------------------------------------------

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Bias-corrected Adam over a fixed parameter list. Moment buffers are
/// allocated per parameter at registration; steps are deterministic for
/// identical inputs.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  /// One update using each parameter's current grad. Throws on a
  /// grad/parameter shape mismatch.
  void step();
  void zero_grad();
  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamConfig cfg_;
  long t_ = 0;
};

// --- verification harness ---------------------------------------------------

/// Compares tape gradients of a scalar-valued forward function against
/// central differences (f(x+h) - f(x-h)) / 2h per coordinate of every input,
/// returning the maximum relative error. The error is normalized by
/// max(1, |analytic|, |numeric|): float32 forward noise makes a strict
/// relative measure meaningless for near-zero coordinates, so magnitudes
/// below 1 are measured absolutely. The difference quotient uses the
/// actually-representable step.
float grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, float h = 1e-3f);

}  // namespace fgse
