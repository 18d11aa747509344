#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fgse/tensor.hpp"

using namespace fgse;

namespace {

Tensor random_tensor(int r, int c, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  return Tensor::uniform(r, c, lo, hi, rng);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and projector") {
  const Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
  const Tensor out = matmul(Tensor::identity(2), a);
  CHECK(out.at(0, 0) == doctest::Approx(1));
  CHECK(out.at(0, 1) == doctest::Approx(2));
  CHECK(out.at(1, 0) == doctest::Approx(3));
  CHECK(out.at(1, 1) == doctest::Approx(4));

  const Tensor proj = Tensor::from(2, 2, {1, 0, 0, 0});
  const Tensor v = Tensor::from(2, 1, {5, 7});
  const Tensor pv = matmul(proj, v);
  CHECK(pv.at(0, 0) == doctest::Approx(5));
  CHECK(pv.at(1, 0) == doctest::Approx(0));
}

TEST_CASE("matmul rejects disagreeing inner dimensions") {
  const Tensor a = Tensor::zeros(2, 3);
  const Tensor b = Tensor::zeros(2, 3);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("matmul backward matches finite differences") {
  std::mt19937 rng(7);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  const float err = grad_check([&]() { return mean_rows(transpose(mean_rows(matmul(a, b)))); },
                               {a, b});
  CHECK(err < 1e-3f);
}

TEST_CASE("selu fixed points and saturation") {
  const Tensor x = Tensor::from(1, 3, {0.0f, 1.0f, -20.0f});
  const Tensor y = selu(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.0));
  CHECK(y.at(0, 1) == doctest::Approx(1.0507).epsilon(1e-4));
  CHECK(y.at(0, 2) == doctest::Approx(-1.7581).epsilon(1e-3));
}

TEST_CASE("layer_norm constant row collapses to bias") {
  const Tensor x = Tensor::from(1, 4, {5, 5, 5, 5});
  const Tensor y = layer_norm(x, Tensor::full(1, 4, 1.0f), Tensor::zeros(1, 4));
  for (int j = 0; j < 4; ++j) CHECK(y.at(0, j) == doctest::Approx(0.0));
}

TEST_CASE("layer_norm symmetric row") {
  const Tensor x = Tensor::from(1, 2, {1, -1});
  const Tensor y = layer_norm(x, Tensor::full(1, 2, 1.0f), Tensor::zeros(1, 2));
  CHECK(y.at(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(y.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("layer_norm row statistics") {
  std::mt19937 rng(3);
  const Tensor x = random_tensor(4, 8, rng, -2.0f, 2.0f);
  const Tensor y = layer_norm(x, Tensor::full(1, 8, 1.0f), Tensor::zeros(1, 8));
  for (int i = 0; i < 4; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 8; ++j) mean += y.at(i, j);
    mean /= 8;
    for (int j = 0; j < 8; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("layer_norm requires positive eps") {
  const Tensor x = Tensor::from(1, 1, {2.0f});
  CHECK_THROWS_AS(layer_norm(x, Tensor::full(1, 1, 1.0f), Tensor::zeros(1, 1), 0.0f),
                  std::invalid_argument);
}

TEST_CASE("softmax uniform and stability") {
  const Tensor u = softmax_rows(Tensor::from(1, 3, {0, 0, 0}));
  for (int j = 0; j < 3; ++j) CHECK(u.at(0, j) == doctest::Approx(1.0 / 3));

  const Tensor s = softmax_rows(Tensor::from(1, 2, {1000.0f, 0.0f}));
  CHECK(s.at(0, 0) == doctest::Approx(1.0));
  CHECK(s.at(0, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(s.at(0, 0)));
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e4") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(3, 7, rng, -1e4f, 1e4f);
    const Tensor y = softmax_rows(x);
    for (int i = 0; i < 3; ++i) {
      double sum = 0;
      for (int j = 0; j < 7; ++j) {
        sum += y.at(i, j);
        CHECK(y.at(i, j) >= 0.0f);
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937 rng(5);
  for (unsigned seed = 0; seed < 5; ++seed) {
    Tensor x = random_tensor(2, 5, rng);
    const Tensor w = random_tensor(5, 1, rng);  // fixed mixing to get a scalar
    const float err = grad_check(
        [&]() { return mean_rows(transpose(mean_rows(matmul(softmax_rows(x), w)))); }, {x});
    CHECK(err < 1e-3f);
  }
}

TEST_CASE("cross_entropy values") {
  CHECK(cross_entropy(Tensor::from(1, 2, {0, 0}), 0).item() == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(Tensor::from(1, 2, {10, -10}), 0).item() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(cross_entropy(Tensor::from(1, 2, {10, -10}), 1).item() == doctest::Approx(20.0).epsilon(1e-4));
}

TEST_CASE("cross_entropy rejects out-of-range targets") {
  CHECK_THROWS_AS(cross_entropy(Tensor::from(1, 2, {0, 0}), 2), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy(Tensor::from(1, 2, {0, 0}), -1), std::out_of_range);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from(1, 3, {1, 2, 3}, true);
  Adam adam({p});
  p.zero_grad();
  adam.step();
  CHECK(p.at(0, 0) == 1.0f);
  CHECK(p.at(0, 1) == 2.0f);
  CHECK(p.at(0, 2) == 3.0f);
}

TEST_CASE("adam: first step moves a scalar by about lr") {
  Tensor p = Tensor::scalar(0.5f, true);
  AdamConfig cfg;
  Adam adam({p}, cfg);
  p.grad()[0] = 1.0f;
  adam.step();
  CHECK(p.item() == doctest::Approx(0.5f - cfg.lr).epsilon(1e-5));
}

TEST_CASE("adam: identical runs are bit-identical after 10 steps") {
  auto run = [&]() {
    std::mt19937 rng(42);
    Tensor p = random_tensor(4, 4, rng);
    p.set_requires_grad(true);
    Adam adam({p});
    for (int i = 0; i < 10; ++i) {
      p.zero_grad();
      Tape tape;
      {
        Tape::Scope scope(tape);
        const Tensor loss = mean_rows(transpose(mean_rows(matmul(p, transpose(p)))));
        tape.backward(loss);
      }
      adam.step();
    }
    return std::vector<float>(p.values().begin(), p.values().end());
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("grad_check on x^2 at x=3") {
  Tensor x = Tensor::scalar(3.0f);
  Tape tape;
  x.set_requires_grad(true);
  {
    Tape::Scope scope(tape);
    const Tensor loss = row_dot(x, x);
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-5));
  const float err = grad_check([&]() { return row_dot(x, x); }, {x});
  CHECK(err < 1e-3f);
}

TEST_CASE("every differentiable op passes grad_check over 5 seeds") {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    std::mt19937 rng(seed);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 3, rng);
    Tensor c = random_tensor(3, 4, rng);
    Tensor bias = random_tensor(1, 4, rng);
    Tensor gain = random_tensor(1, 4, rng, 0.5f, 1.5f);
    const Tensor mix = random_tensor(4, 1, rng);   // constant mixers
    const Tensor mix3 = random_tensor(3, 1, rng);

    auto scalarize = [&](const Tensor& t) {
      return mean_rows(transpose(mean_rows(t)));
    };

    CHECK(grad_check([&] { return scalarize(matmul(a, b)); }, {a, b}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(transpose(a)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(add(a, c)); }, {a, c}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(add_rowwise(a, bias)); }, {a, bias}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(scale(a, 1.7f)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { const Tensor xs[] = {a, c}; return scalarize(add_n(xs)); }, {a, c}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(selu(a)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(layer_norm(a, gain, bias)); }, {a, gain, bias}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(softmax_rows(a)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return cross_entropy(mean_rows(a), 2); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(mean_rows(a)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { const Tensor xs[] = {a, c}; return scalarize(concat_rows(xs)); }, {a, c}) < 1e-3f);
    CHECK(grad_check([&] { const Tensor xs[] = {a, c}; return scalarize(concat_cols(xs)); }, {a, c}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(slice_cols(a, 1, 2)); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(gather_rows(a, {2, 0, 2})); }, {a}) < 1e-3f);
    CHECK(grad_check([&] { return scalarize(row_dot(a, c)); }, {a, c}) < 1e-3f);

    Tensor scores = random_tensor(6, 1, rng);
    Tensor rows = random_tensor(6, 3, rng);
    const std::vector<int> seg{0, 1, 0, 2, 1, 0};
    CHECK(grad_check([&] { return scalarize(segment_softmax(scores, seg, 3)); }, {scores}) < 1e-3f);
    CHECK(grad_check(
              [&] {
                const Tensor w = segment_softmax(scores, seg, 3);
                return scalarize(segment_sum_weighted(rows, w, seg, 3));
              },
              {scores, rows}) < 1e-3f);
  }
}

TEST_CASE("grad_check rejects a deliberately wrong gradient") {
  Tensor x = Tensor::from(1, 3, {0.4f, -0.7f, 1.2f});
  // y = sum(x^2) computed by hand, with a backward that accumulates
  // 1.5x the true gradient.
  auto broken_square_sum = [&]() {
    float acc = 0.0f;
    for (float v : x.values()) acc += v * v;
    Tensor out = Tensor::scalar(acc);
    out.set_requires_grad(true);
    if (Tape* tape = Tape::active()) {
      tape->record([x, out]() {
        auto gx = x.grad();
        auto vx = x.values();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 1.5f * 2.0f * vx[i] * out.grad()[0];
      });
    }
    return out;
  };
  CHECK(grad_check(broken_square_sum, {x}) > 0.1f);
}

TEST_CASE("tape only records inside an active scope") {
  Tensor a = Tensor::from(1, 2, {1, 2}, true);
  Tape tape;
  const Tensor untracked = scale(a, 2.0f);
  CHECK(tape.node_count() == 0);
  {
    Tape::Scope scope(tape);
    const Tensor tracked = scale(a, 2.0f);
    CHECK(tape.node_count() == 1);
  }
  CHECK(untracked.at(0, 1) == 4.0f);
}

}  // TEST_SUITE
