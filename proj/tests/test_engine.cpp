#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "arithlab/nn/ops.hpp"
#include "arithlab/nn/optim.hpp"
#include "arithlab/nn/tensor.hpp"

using namespace arithlab;
using nn::Tensor;
using nn::TensorD;
using nn::TensorF;

namespace {

TensorD randn(nn::Shape shape, rng::Rng& r, bool rg = true) {
  return TensorD::randn(std::move(shape), r, 1.0, rg);
}

// Central finite differences against the tape, 64-bit, relative error < tol.
void grad_check(std::vector<TensorD> inputs, const std::function<TensorD()>& make_loss,
                double tol = 1e-4, double h = 1e-5) {
  TensorD loss = make_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    REQUIRE(!t.grad_vec().empty());
    analytic.push_back(t.grad_vec());
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = inputs[ti];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double lp = make_loss().item();
      t.data()[i] = orig - h;
      const double lm = make_loss().item();
      t.data()[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = analytic[ti][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      CHECK(std::abs(fd - an) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul shapes and identity") {
  rng::Rng r(1);
  auto a = randn({2, 3}, r, false);
  auto b = randn({3, 4}, r, false);
  auto c = nn::matmul(a, b);
  CHECK(c.shape() == nn::Shape{2, 4});

  auto eye = TensorD::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
  auto back = nn::matmul(nn::matmul(a, eye), eye);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(back.data()[i] == doctest::Approx(a.data()[i]));

  CHECK_THROWS(nn::matmul(a, a));  // inner dim mismatch
}

TEST_CASE("gradients: matmul, linear, transpose, sum, mul") {
  rng::Rng r(2);
  auto x = randn({4, 3}, r);
  auto w = randn({3, 5}, r);
  auto b = randn({5}, r);
  auto probe = randn({4, 5}, r, false);
  grad_check({x, w, b}, [&] { return nn::sum(nn::mul(nn::linear(x, w, b), probe)); });

  auto m = randn({3, 4}, r);
  grad_check({m}, [&] { return nn::sum(nn::transpose(m)); });

  auto u = randn({2, 6}, r);
  auto v = randn({2, 6}, r);
  grad_check({u, v}, [&] { return nn::sum(nn::mul(u, v)); });
}

TEST_CASE("gradients: softmax, layer_norm, gelu") {
  rng::Rng r(3);
  auto x = randn({3, 7}, r);
  auto probe = randn({3, 7}, r, false);
  grad_check({x}, [&] { return nn::sum(nn::mul(nn::softmax(x, 1), probe)); });
  grad_check({x}, [&] { return nn::sum(nn::mul(nn::softmax(x, 0), probe)); });

  auto g = randn({7}, r);
  auto bb = randn({7}, r);
  grad_check({x, g, bb},
             [&] { return nn::sum(nn::mul(nn::layer_norm(x, g, bb), probe)); });

  grad_check({x}, [&] { return nn::sum(nn::mul(nn::gelu(x), probe)); });
}

TEST_CASE("gradients: attention pipeline") {
  rng::Rng r(4);
  const std::size_t B = 2, S = 5, D = 6, H = 2;
  auto x = randn({B, S, D}, r);
  auto wq = randn({D, D}, r);
  auto wk = randn({D, D}, r);
  auto wv = randn({D, D}, r);
  auto probe = randn({B, S, D}, r, false);
  auto make_loss = [&] {
    auto q = nn::split_heads(nn::linear(x, wq, TensorD{}), H);
    auto k = nn::split_heads(nn::linear(x, wk, TensorD{}), H);
    auto v = nn::split_heads(nn::linear(x, wv, TensorD{}), H);
    auto scores = nn::attn_scores(q, k, 1.0 / std::sqrt(3.0));
    auto probs = nn::causal_softmax(scores);
    auto ctx = nn::merge_heads(nn::attn_mix(probs, v));
    return nn::sum(nn::mul(ctx, probe));
  };
  grad_check({x, wq, wk, wv}, make_loss);
}

TEST_CASE("gradients: embedding, positions, cross entropy") {
  rng::Rng r(5);
  auto table = randn({6, 4}, r);
  auto pos = randn({5, 4}, r);
  auto w = randn({4, 6}, r);
  const std::vector<std::int32_t> ids{0, 3, 5, 1, 2, 2};
  const std::vector<std::int32_t> targets{1, 2, 3, 0, 5, 4};
  const std::vector<std::uint8_t> mask{0, 1, 1, 0, 1, 1};
  auto make_loss = [&] {
    auto e = nn::embedding(table, std::span<const std::int32_t>(ids), 2, 3);
    auto h = nn::add_position(e, pos);
    auto logits = nn::linear(h, w, TensorD{});
    return nn::cross_entropy_nll(logits, std::span<const std::int32_t>(targets),
                                 std::span<const std::uint8_t>(mask));
  };
  grad_check({table, pos, w}, make_loss);
}

TEST_CASE("softmax normalization properties") {
  rng::Rng r(6);
  auto x = randn({8, 15}, r, false);
  auto p = nn::softmax(x, 1);
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 15; ++j) {
      const double v = p.data()[i * 15 + j];
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  auto flat = TensorD::full({2, 4}, 3.25);
  auto pf = nn::softmax(flat, 1);
  for (std::size_t i = 0; i < pf.size(); ++i) CHECK(pf.data()[i] == doctest::Approx(0.25));
}

TEST_CASE("layer_norm handles zero variance via the eps floor") {
  auto x = TensorD::full({2, 4}, 7.0);
  auto g = TensorD::full({4}, 1.0);
  auto b = TensorD::full({4}, 0.5);
  auto y = nn::layer_norm(x, g, b);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(std::isfinite(y.data()[i]));
    CHECK(y.data()[i] == doctest::Approx(0.5));
  }

  rng::Rng r(7);
  auto xr = randn({3, 16}, r, false);
  auto yr = nn::layer_norm(xr, g = TensorD::full({16}, 1.0), b = TensorD::zeros({16}));
  for (std::size_t row = 0; row < 3; ++row) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += yr.data()[row * 16 + j];
    mean /= 16;
    for (std::size_t j = 0; j < 16; ++j) {
      const double c = yr.data()[row * 16 + j] - mean;
      var += c * c;
    }
    var /= 16;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("cross entropy closed forms and masking") {
  // Uniform logits over 15 symbols -> ln 15 per position.
  auto logits = TensorD::zeros({4, 15}, true);
  const std::vector<std::int32_t> targets{3, 1, 4, 9};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  std::vector<double> per_row;
  auto loss = nn::cross_entropy_nll(logits, std::span<const std::int32_t>(targets),
                                    std::span<const std::uint8_t>(mask), &per_row);
  CHECK(loss.item() == doctest::Approx(std::log(15.0)));
  CHECK(per_row[2] == 0.0);  // masked question position contributes nothing
  loss.backward();
  for (std::size_t j = 0; j < 15; ++j) CHECK(logits.grad_vec()[2 * 15 + j] == 0.0);

  // Near-one-hot logits -> loss ~ 0.
  auto sharp = TensorD::zeros({2, 5});
  sharp.data()[0 * 5 + 2] = 50.0;
  sharp.data()[1 * 5 + 0] = 50.0;
  const std::vector<std::int32_t> t2{2, 0};
  const std::vector<std::uint8_t> m2{1, 1};
  CHECK(nn::cross_entropy_nll(sharp, std::span<const std::int32_t>(t2),
                              std::span<const std::uint8_t>(m2))
            .item() == doctest::Approx(0.0).epsilon(1e-9));

  const std::vector<std::int32_t> bad{99, 0};
  CHECK_THROWS(nn::cross_entropy_nll(sharp, std::span<const std::int32_t>(bad),
                                     std::span<const std::uint8_t>(m2)));
}

TEST_CASE("AdamW closed-form behaviors") {
  auto make_param = [](double v) {
    auto p = TensorD::full({4}, v, true);
    return p;
  };

  SUBCASE("zero gradient, zero decay leaves params unchanged") {
    auto p = make_param(1.5);
    p.grad();  // allocate zero grads
    nn::AdamWParams hp;
    hp.weight_decay = 0.0;
    nn::AdamW<double> opt({p}, hp);
    opt.step(1e-3);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.data()[i] == doctest::Approx(1.5));
  }

  SUBCASE("first step moves by about -lr * sign(grad)") {
    auto p = make_param(0.0);
    p.grad()[0] = 0.75;
    p.grad()[1] = -2.5;
    p.grad()[2] = 1e-3;
    p.grad()[3] = -1e-3;
    nn::AdamWParams hp;
    hp.weight_decay = 0.0;
    nn::AdamW<double> opt({p}, hp);
    const double lr = 1e-2;
    opt.step(lr);
    CHECK(p.data()[0] == doctest::Approx(-lr).epsilon(1e-4));
    CHECK(p.data()[1] == doctest::Approx(lr).epsilon(1e-4));
    CHECK(p.data()[2] == doctest::Approx(-lr).epsilon(1e-4));
    CHECK(p.data()[3] == doctest::Approx(lr).epsilon(1e-4));
  }

  SUBCASE("decay-only step shrinks weights by (1 - lr*wd)") {
    auto p = make_param(2.0);
    p.grad();
    nn::AdamWParams hp;
    hp.weight_decay = 0.1;
    nn::AdamW<double> opt({p}, hp);
    opt.step(1e-2);
    for (std::size_t i = 0; i < p.size(); ++i)
      CHECK(p.data()[i] == doctest::Approx(2.0 * (1.0 - 1e-2 * 0.1)));
  }

  SUBCASE("non-finite gradient raises") {
    auto p = make_param(0.0);
    p.grad()[0] = std::numeric_limits<double>::quiet_NaN();
    nn::AdamW<double> opt({p}, {});
    CHECK_THROWS(opt.step(1e-3));
  }
}

TEST_CASE("learning-rate schedule endpoints") {
  const auto s = nn::Schedule::standard(8e-5, 10000);
  CHECK(s.warmup_steps == 2000);
  CHECK(nn::lr_at(0, s) == doctest::Approx(8e-7));
  CHECK(nn::lr_at(2000, s) == doctest::Approx(8e-5));
  CHECK(nn::lr_at(10000, s) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nn::lr_at(6000, s) == doctest::Approx(8e-5 * 0.5));
  for (int step = 1; step <= 2000; step += 100)
    CHECK(nn::lr_at(step, s) > nn::lr_at(step - 1, s));
  CHECK_THROWS(nn::lr_at(10001, s));
}

TEST_CASE("loss decreases on a linearly separable toy task") {
  rng::Rng r(8);
  const std::size_t N = 64;
  auto x = TensorD::zeros({N, 2});
  std::vector<std::int32_t> labels(N);
  std::vector<std::uint8_t> mask(N, 1);
  for (std::size_t i = 0; i < N; ++i) {
    const bool hi = i % 2 == 0;
    labels[i] = hi ? 1 : 0;
    x.data()[i * 2 + 0] = r.normal() + (hi ? 2.0 : -2.0);
    x.data()[i * 2 + 1] = r.normal();
  }
  auto w = TensorD::randn({2, 2}, r, 0.1, true);
  auto b = TensorD::zeros({2}, true);
  nn::AdamWParams hp;
  hp.lr = 1e-2;
  hp.weight_decay = 0.0;
  nn::AdamW<double> opt({w, b}, hp);
  double first = 0, last = 0;
  for (int step = 0; step < 100; ++step) {
    auto loss = nn::cross_entropy_nll(nn::linear(x, w, b),
                                      std::span<const std::int32_t>(labels),
                                      std::span<const std::uint8_t>(mask));
    if (step == 0) first = loss.item();
    last = loss.item();
    loss.backward();
    opt.step(hp.lr);
  }
  CHECK(last < first * 0.5);
}

TEST_CASE("finite guards") {
  auto t = TensorF::full({3}, 1.0f);
  CHECK(nn::all_finite(t));
  t.data()[1] = std::numeric_limits<float>::infinity();
  CHECK(!nn::all_finite(t));
  CHECK_THROWS(nn::check_finite(t, "test tensor"));
}
