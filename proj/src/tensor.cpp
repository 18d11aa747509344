#include "fgse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace fgse {

namespace {

// Fixed self-normalizing constants.
constexpr float kSeluLambda = 1.0507009873554805f;
constexpr float kSeluAlpha = 1.6732632423543772f;

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
}

bool tracking(const Tensor& t) { return Tape::active() != nullptr && t.requires_grad(); }

template <typename F>
void maybe_record(bool track, F&& fn) {
  if (track) Tape::active()->record(std::forward<F>(fn));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return full(rows, cols, 0.0f, requires_grad);
}

Tensor Tensor::full(int rows, int cols, float value, bool requires_grad) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->rows = rows;
  t.d_->cols = cols;
  t.d_->values.assign(static_cast<std::size_t>(rows) * cols, value);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return full(1, 1, value, requires_grad); }

Tensor Tensor::from(int rows, int cols, std::vector<float> data, bool requires_grad) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
  if (data.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape [" + std::to_string(rows) + "x" +
                                std::to_string(cols) + "]");
  }
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->rows = rows;
  t.d_->cols = cols;
  t.d_->values = std::move(data);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros(n, n);
  for (int i = 0; i < n; ++i) t.mut(i, i) = 1.0f;
  return t;
}

Tensor Tensor::uniform(int rows, int cols, float lo, float hi, std::mt19937& rng,
                       bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  auto v = t.values();
  const float span = hi - lo;
  for (auto& x : v) {
    // 24-bit mantissa draw, identical on every platform.
    x = lo + span * (static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f));
  }
  return t;
}

int Tensor::rows() const { return d_ ? d_->rows : 0; }
int Tensor::cols() const { return d_ ? d_->cols : 0; }
std::size_t Tensor::size() const { return d_ ? d_->values.size() : 0; }
std::vector<int> Tensor::shape() const { return {rows(), cols()}; }

std::span<float> Tensor::values() { return {d_->values.data(), d_->values.size()}; }
std::span<const float> Tensor::values() const { return {d_->values.data(), d_->values.size()}; }

float Tensor::at(int r, int c) const {
  return d_->values[static_cast<std::size_t>(r) * d_->cols + c];
}

float& Tensor::mut(int r, int c) {
  return d_->values[static_cast<std::size_t>(r) * d_->cols + c];
}

float Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: not a scalar, " + shape_str(*this));
  return d_->values[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  d_->requires_grad = v;
  return *this;
}

std::span<float> Tensor::grad() const {
  if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0f);
  return {d_->grad.data(), d_->grad.size()};
}

bool Tensor::has_grad() const { return d_ && d_->grad.size() == d_->values.size(); }

void Tensor::zero_grad() const {
  if (d_) d_->grad.assign(d_->values.size(), 0.0f);
}

// --- Tape -------------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
  Tensor seed = loss;
  seed.grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() { nodes_.clear(); }

// --- ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a) + " x " +
                                shape_str(b));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  {
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    float* pc = out.values().data();
    for (int i = 0; i < m; ++i) {
      const float* arow = pa + static_cast<std::size_t>(i) * k;
      float* crow = pc + static_cast<std::size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const float av = arow[kk];
        if (av == 0.0f) continue;
        const float* brow = pb + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  const bool track = tracking(a) || tracking(b);
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  maybe_record(track, [a, b, out]() mutable {
    const float* gc = out.grad().data();
    if (a.requires_grad()) {
      float* ga = a.grad().data();
      const float* pb = b.values().data();
      const int m = a.rows(), k = a.cols(), n = b.cols();
      for (int i = 0; i < m; ++i) {
        const float* gcrow = gc + static_cast<std::size_t>(i) * n;
        float* garow = ga + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const float* brow = pb + static_cast<std::size_t>(kk) * n;
          float acc = 0.0f;
          for (int j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      float* gb = b.grad().data();
      const float* pa = a.values().data();
      const int m = a.rows(), k = a.cols(), n = b.cols();
      for (int i = 0; i < m; ++i) {
        const float* arow = pa + static_cast<std::size_t>(i) * k;
        const float* gcrow = gc + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const float av = arow[kk];
          if (av == 0.0f) continue;
          float* gbrow = gb + static_cast<std::size_t>(kk) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += av * gcrow[j];
        }
      }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.mut(j, i) = a.at(i, j);
  const bool track = tracking(a);
  out.set_requires_grad(a.requires_grad());
  maybe_record(track, [a, out]() mutable {
    auto ga = a.grad();
    auto go = out.grad();
    const int m = a.rows(), n = a.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(i) * n + j] += go[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto va = a.values();
  auto vb = b.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] + vb[i];
  const bool track = tracking(a) || tracking(b);
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  maybe_record(track, [a, b, out]() mutable {
    auto go = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  });
  return out;
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw std::invalid_argument("add_rowwise: bias " + shape_str(bias) + " does not match " +
                                shape_str(a));
  }
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  const int m = a.rows(), n = a.cols();
  auto va = a.values();
  auto vb = bias.values();
  auto vo = out.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) vo[static_cast<std::size_t>(i) * n + j] = va[static_cast<std::size_t>(i) * n + j] + vb[j];
  const bool track = tracking(a) || tracking(bias);
  out.set_requires_grad(a.requires_grad() || bias.requires_grad());
  maybe_record(track, [a, bias, out]() mutable {
    auto go = out.grad();
    const int m = a.rows(), n = a.cols();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb[j] += go[static_cast<std::size_t>(i) * n + j];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto va = a.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * s;
  const bool track = tracking(a);
  out.set_requires_grad(a.requires_grad());
  maybe_record(track, [a, out, s]() mutable {
    auto ga = a.grad();
    auto go = out.grad();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
  });
  return out;
}

Tensor add_n(std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty input");
  Tensor out = Tensor::zeros(xs[0].rows(), xs[0].cols());
  auto vo = out.values();
  bool track = false;
  bool rg = false;
  for (const Tensor& x : xs) {
    check_same_shape(xs[0], x, "add_n");
    auto vx = x.values();
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] += vx[i];
    track = track || tracking(x);
    rg = rg || x.requires_grad();
  }
  out.set_requires_grad(rg);
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  maybe_record(track, [inputs = std::move(inputs), out]() mutable {
    auto go = out.grad();
    for (Tensor& x : inputs) {
      if (!x.requires_grad()) continue;
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
  });
  return out;
}

Tensor selu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  auto vx = x.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < vo.size(); ++i) {
    const float v = vx[i];
    vo[i] = v > 0.0f ? kSeluLambda * v : kSeluLambda * kSeluAlpha * (std::exp(v) - 1.0f);
  }
  const bool track = tracking(x);
  out.set_requires_grad(x.requires_grad());
  maybe_record(track, [x, out]() mutable {
    auto gx = x.grad();
    auto go = out.grad();
    auto vx = x.values();
    for (std::size_t i = 0; i < go.size(); ++i) {
      const float v = vx[i];
      const float d = v > 0.0f ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v);
      gx[i] += go[i] * d;
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (eps <= 0.0f) throw std::invalid_argument("layer_norm: eps must be > 0");
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));
  }
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(m, n);
  // Normalized rows and inverse stddevs are needed again in backward.
  auto xhat = std::make_shared<std::vector<float>>(static_cast<std::size_t>(m) * n);
  auto inv_std = std::make_shared<std::vector<float>>(m);
  auto vx = x.values();
  auto vg = gain.values();
  auto vb = bias.values();
  auto vo = out.values();
  for (int i = 0; i < m; ++i) {
    const float* row = vx.data() + static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= n;
    const float is = 1.0f / std::sqrt(static_cast<float>(var) + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < n; ++j) {
      const float xh = (row[j] - static_cast<float>(mean)) * is;
      (*xhat)[static_cast<std::size_t>(i) * n + j] = xh;
      vo[static_cast<std::size_t>(i) * n + j] = vg[j] * xh + vb[j];
    }
  }
  const bool track = tracking(x) || tracking(gain) || tracking(bias);
  out.set_requires_grad(x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  maybe_record(track, [x, gain, bias, out, xhat, inv_std]() mutable {
    const int m = x.rows(), n = x.cols();
    auto go = out.grad();
    auto vg = gain.values();
    if (gain.requires_grad() || bias.requires_grad()) {
      auto gg = gain.grad();
      auto gb = bias.grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          const std::size_t off = static_cast<std::size_t>(i) * n + j;
          if (gain.requires_grad()) gg[j] += go[off] * (*xhat)[off];
          if (bias.requires_grad()) gb[j] += go[off];
        }
      }
    }
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (int i = 0; i < m; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * n;
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int j = 0; j < n; ++j) {
          const float dy = go[base + j] * vg[j];
          sum_dy += dy;
          sum_dy_xh += dy * (*xhat)[base + j];
        }
        const float mean_dy = static_cast<float>(sum_dy / n);
        const float mean_dy_xh = static_cast<float>(sum_dy_xh / n);
        const float is = (*inv_std)[i];
        for (int j = 0; j < n; ++j) {
          const float dy = go[base + j] * vg[j];
          gx[base + j] += is * (dy - mean_dy - (*xhat)[base + j] * mean_dy_xh);
        }
      }
    }
  });
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(m, n);
  auto vx = x.values();
  auto vo = out.values();
  for (int i = 0; i < m; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * n;
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, vx[base + j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(static_cast<double>(vx[base + j] - mx));
    for (int j = 0; j < n; ++j) {
      vo[base + j] = static_cast<float>(std::exp(static_cast<double>(vx[base + j] - mx)) / sum);
    }
  }
  const bool track = tracking(x);
  out.set_requires_grad(x.requires_grad());
  maybe_record(track, [x, out]() mutable {
    const int m = x.rows(), n = x.cols();
    auto gx = x.grad();
    auto go = out.grad();
    auto vo = out.values();
    for (int i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += static_cast<double>(go[base + j]) * vo[base + j];
      for (int j = 0; j < n; ++j) {
        gx[base + j] += vo[base + j] * (go[base + j] - static_cast<float>(dot));
      }
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expected a 1 x c logit row");
  const int c = logits.cols();
  if (target < 0 || target >= c) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " outside [0, " + std::to_string(c) + ")");
  }
  auto vx = logits.values();
  float mx = -std::numeric_limits<float>::infinity();
  for (int j = 0; j < c; ++j) mx = std::max(mx, vx[j]);
  double sum = 0.0;
  for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(vx[j] - mx));
  const double lse = std::log(sum) + mx;
  Tensor out = Tensor::scalar(static_cast<float>(lse - vx[target]));
  const bool track = tracking(logits);
  out.set_requires_grad(logits.requires_grad());
  maybe_record(track, [logits, out, target, mx, sum]() mutable {
    const int c = logits.cols();
    auto gl = logits.grad();
    auto vx = logits.values();
    const float g = out.grad()[0];
    for (int j = 0; j < c; ++j) {
      const float p = static_cast<float>(std::exp(static_cast<double>(vx[j] - mx)) / sum);
      gl[j] += g * (p - (j == target ? 1.0f : 0.0f));
    }
  });
  return out;
}

Tensor mean_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(1, n);
  auto vx = x.values();
  auto vo = out.values();
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += vx[static_cast<std::size_t>(i) * n + j];
    vo[j] = static_cast<float>(acc / m);
  }
  const bool track = tracking(x);
  out.set_requires_grad(x.requires_grad());
  maybe_record(track, [x, out]() mutable {
    const int m = x.rows(), n = x.cols();
    auto gx = x.grad();
    auto go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += go[j] / m;
  });
  return out;
}

Tensor concat_rows(std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int n = xs[0].cols();
  int total = 0;
  bool track = false, rg = false;
  for (const Tensor& x : xs) {
    if (x.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
    total += x.rows();
    track = track || tracking(x);
    rg = rg || x.requires_grad();
  }
  Tensor out = Tensor::zeros(total, n);
  auto vo = out.values();
  std::size_t off = 0;
  for (const Tensor& x : xs) {
    auto vx = x.values();
    std::copy(vx.begin(), vx.end(), vo.begin() + off);
    off += vx.size();
  }
  out.set_requires_grad(rg);
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  maybe_record(track, [inputs = std::move(inputs), out]() mutable {
    auto go = out.grad();
    std::size_t off = 0;
    for (Tensor& x : inputs) {
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[off + i];
      }
      off += x.size();
    }
  });
  return out;
}

Tensor concat_cols(std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int m = xs[0].rows();
  int total = 0;
  bool track = false, rg = false;
  for (const Tensor& x : xs) {
    if (x.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
    total += x.cols();
    track = track || tracking(x);
    rg = rg || x.requires_grad();
  }
  Tensor out = Tensor::zeros(m, total);
  for (int i = 0; i < m; ++i) {
    int coff = 0;
    for (const Tensor& x : xs) {
      for (int j = 0; j < x.cols(); ++j) out.mut(i, coff + j) = x.at(i, j);
      coff += x.cols();
    }
  }
  out.set_requires_grad(rg);
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  maybe_record(track, [inputs = std::move(inputs), out]() mutable {
    const int m = out.rows();
    auto go = out.grad();
    const int total = out.cols();
    for (int i = 0; i < m; ++i) {
      int coff = 0;
      for (Tensor& x : inputs) {
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (int j = 0; j < x.cols(); ++j) {
            gx[static_cast<std::size_t>(i) * x.cols() + j] +=
                go[static_cast<std::size_t>(i) * total + coff + j];
          }
        }
        coff += x.cols();
      }
    }
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int count) {
  if (start < 0 || count <= 0 || start + count > x.cols()) {
    throw std::out_of_range("slice_cols: range [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " + shape_str(x));
  }
  const int m = x.rows();
  Tensor out = Tensor::zeros(m, count);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) out.mut(i, j) = x.at(i, start + j);
  const bool track = tracking(x);
  out.set_requires_grad(x.requires_grad());
  maybe_record(track, [x, out, start, count]() mutable {
    const int m = x.rows(), n = x.cols();
    auto gx = x.grad();
    auto go = out.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j)
        gx[static_cast<std::size_t>(i) * n + start + j] += go[static_cast<std::size_t>(i) * count + j];
  });
  return out;
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  const int n = x.cols();
  for (int r : idx) {
    if (r < 0 || r >= x.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " outside " + shape_str(x));
    }
  }
  if (idx.empty()) throw std::invalid_argument("gather_rows: empty index list");
  Tensor out = Tensor::zeros(static_cast<int>(idx.size()), n);
  auto vx = x.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(vx.begin() + static_cast<std::size_t>(idx[i]) * n, n, vo.begin() + i * n);
  }
  const bool track = tracking(x);
  out.set_requires_grad(x.requires_grad());
  maybe_record(track, [x, out, idx = std::move(idx)]() mutable {
    const int n = x.cols();
    auto gx = x.grad();
    auto go = out.grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < n; ++j)
        gx[static_cast<std::size_t>(idx[i]) * n + j] += go[i * static_cast<std::size_t>(n) + j];
    }
  });
  return out;
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "row_dot");
  const int m = a.rows(), d = a.cols();
  Tensor out = Tensor::zeros(m, 1);
  auto va = a.values();
  auto vb = b.values();
  auto vo = out.values();
  for (int i = 0; i < m; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * d;
    float acc = 0.0f;
    for (int j = 0; j < d; ++j) acc += va[base + j] * vb[base + j];
    vo[i] = acc;
  }
  const bool track = tracking(a) || tracking(b);
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  maybe_record(track, [a, b, out]() mutable {
    const int m = a.rows(), d = a.cols();
    auto go = out.grad();
    auto va = a.values();
    auto vb = b.values();
    for (int i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * d;
      const float g = go[i];
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (int j = 0; j < d; ++j) ga[base + j] += g * vb[base + j];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (int j = 0; j < d; ++j) gb[base + j] += g * va[base + j];
      }
    }
  });
  return out;
}

Tensor segment_softmax(const Tensor& scores, std::vector<int> seg, int n_segments) {
  if (scores.cols() != 1) throw std::invalid_argument("segment_softmax: scores must be m x 1");
  if (seg.size() != static_cast<std::size_t>(scores.rows())) {
    throw std::invalid_argument("segment_softmax: segment ids do not match score rows");
  }
  for (int s : seg) {
    if (s < 0 || s >= n_segments) throw std::out_of_range("segment_softmax: bad segment id");
  }
  const int m = scores.rows();
  Tensor out = Tensor::zeros(std::max(m, 1), 1);
  auto vs = scores.values();
  auto vo = out.values();
  std::vector<float> seg_max(n_segments, -std::numeric_limits<float>::infinity());
  for (int i = 0; i < m; ++i) seg_max[seg[i]] = std::max(seg_max[seg[i]], vs[i]);
  std::vector<double> seg_sum(n_segments, 0.0);
  for (int i = 0; i < m; ++i) seg_sum[seg[i]] += std::exp(static_cast<double>(vs[i] - seg_max[seg[i]]));
  for (int i = 0; i < m; ++i) {
    vo[i] = static_cast<float>(std::exp(static_cast<double>(vs[i] - seg_max[seg[i]])) / seg_sum[seg[i]]);
  }
  const bool track = tracking(scores);
  out.set_requires_grad(scores.requires_grad());
  maybe_record(track, [scores, out, seg = std::move(seg), n_segments]() mutable {
    const int m = scores.rows();
    auto gs = scores.grad();
    auto go = out.grad();
    auto vo = out.values();
    std::vector<double> seg_dot(n_segments, 0.0);
    for (int i = 0; i < m; ++i) seg_dot[seg[i]] += static_cast<double>(go[i]) * vo[i];
    for (int i = 0; i < m; ++i) {
      gs[i] += vo[i] * (go[i] - static_cast<float>(seg_dot[seg[i]]));
    }
  });
  return out;
}

Tensor segment_sum_weighted(const Tensor& rows, const Tensor& w, std::vector<int> seg,
                            int n_segments) {
  if (w.cols() != 1 || w.rows() != rows.rows()) {
    throw std::invalid_argument("segment_sum_weighted: weights must be m x 1 matching rows");
  }
  if (seg.size() != static_cast<std::size_t>(rows.rows())) {
    throw std::invalid_argument("segment_sum_weighted: segment ids do not match rows");
  }
  const int m = rows.rows(), d = rows.cols();
  for (int s : seg) {
    if (s < 0 || s >= n_segments) throw std::out_of_range("segment_sum_weighted: bad segment id");
  }
  Tensor out = Tensor::zeros(n_segments, d);
  auto vr = rows.values();
  auto vw = w.values();
  auto vo = out.values();
  for (int i = 0; i < m; ++i) {
    const std::size_t src = static_cast<std::size_t>(i) * d;
    const std::size_t dst = static_cast<std::size_t>(seg[i]) * d;
    const float wi = vw[i];
    for (int j = 0; j < d; ++j) vo[dst + j] += wi * vr[src + j];
  }
  const bool track = tracking(rows) || tracking(w);
  out.set_requires_grad(rows.requires_grad() || w.requires_grad());
  maybe_record(track, [rows, w, out, seg = std::move(seg)]() mutable {
    const int m = rows.rows(), d = rows.cols();
    auto go = out.grad();
    auto vr = rows.values();
    auto vw = w.values();
    for (int i = 0; i < m; ++i) {
      const std::size_t src = static_cast<std::size_t>(i) * d;
      const std::size_t dst = static_cast<std::size_t>(seg[i]) * d;
      if (rows.requires_grad()) {
        auto gr = rows.grad();
        const float wi = vw[i];
        for (int j = 0; j < d; ++j) gr[src + j] += wi * go[dst + j];
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        float acc = 0.0f;
        for (int j = 0; j < d; ++j) acc += vr[src + j] * go[dst + j];
        gw[i] += acc;
      }
    }
  });
  return out;
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size(), 0.0f);
    v_[i].assign(params_[i].size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p];
    auto g = param.grad();
    auto v = param.values();
    if (g.size() != v.size()) {
      throw std::invalid_argument("Adam::step: grad/parameter shape mismatch");
    }
    auto& m = m_[p];
    auto& s = v_[p];
    for (std::size_t i = 0; i < v.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
      s[i] = cfg_.beta2 * s[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = s[i] / bc2;
      v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

// --- grad_check ----------------------------------------------------------------

float grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, float h) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  std::vector<std::vector<float>> analytic;
  {
    Tape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (Tensor& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  const double f0 = f().item();
  float max_rel = 0.0f;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto v = inputs[ti].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float saved = v[i];
      const float vp = saved + h;
      const float vm = saved - h;
      v[i] = vp;
      const double fp = f().item();
      v[i] = vm;
      const double fm = f().item();
      v[i] = saved;
      const double a = analytic[ti][i];
      const auto rel = [&](double numeric) {
        return std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      };
      const auto three_windows = [&](float step) {
        const float sp = saved + step;
        const float sm = saved - step;
        v[i] = sp;
        const double up = f().item();
        v[i] = sm;
        const double um = f().item();
        v[i] = saved;
        double e = rel((up - um) / (static_cast<double>(sp) - static_cast<double>(sm)));
        e = std::min(e, rel((up - f0) / (static_cast<double>(sp) - static_cast<double>(saved))));
        e = std::min(e, rel((f0 - um) / (static_cast<double>(saved) - static_cast<double>(sm))));
        return e;
      };
      // The central quotient is the estimator of record. selu is only
      // piecewise smooth, so a step may cross an activation kink and mix
      // two slopes; the one-sided quotients cover a kink on one side of
      // the base point, and a refined step covers kinks on both sides. A
      // wrong gradient disagrees with every window at every step.
      double best = rel((fp - fm) / (static_cast<double>(vp) - static_cast<double>(vm)));
      best = std::min(best, rel((fp - f0) / (static_cast<double>(vp) - static_cast<double>(saved))));
      best = std::min(best, rel((f0 - fm) / (static_cast<double>(saved) - static_cast<double>(vm))));
      if (best > 5e-4) best = std::min(best, three_windows(h / 5));
      if (best > 5e-4) best = std::min(best, three_windows(h / 2));
      max_rel = std::max(max_rel, static_cast<float>(best));
    }
  }
  return max_rel;
}

}  // namespace fgse
