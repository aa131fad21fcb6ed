#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "comg/adam.hpp"
#include "comg/attention.hpp"
#include "comg/grad_check.hpp"
#include "comg/ops.hpp"

#include "gradcheck_suite.hpp"
#include "test_support.hpp"

using namespace comg;
using namespace comg::testing;

TEST_CASE("softmax rows are a distribution") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({rng.uniform_int(1, 8), rng.uniform_int(2, 8)}, rng, -5.0, 5.0, false);
    Tensor y = softmax(x, 1);
    for (int i = 0; i < y.dim(0); ++i) {
      double s = 0.0;
      for (int j = 0; j < y.dim(1); ++j) {
        const double v = y.data()[static_cast<size_t>(i) * y.dim(1) + j];
        CHECK(v > 0.0);
        CHECK(v < 1.0 + 1e-15);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("pointwise_mul zero mask annihilates") {
  Rng rng(2);
  Tensor x = random_tensor({3, 4, 5}, rng, -1, 1, false);
  Tensor m = Tensor::zeros({1, 4, 5});
  Tensor y = pointwise_mul(x, m);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("pointwise_mul distributes over disjoint masks") {
  Rng rng(3);
  Tensor x = random_tensor({2, 4, 4}, rng, -1, 1, false);
  std::vector<double> m1(16, 0.0), m2(16, 0.0);
  for (int i = 0; i < 16; ++i) (i % 2 == 0 ? m1 : m2)[static_cast<size_t>(i)] = 1.0;
  std::vector<double> m12(16);
  for (int i = 0; i < 16; ++i) m12[static_cast<size_t>(i)] = m1[static_cast<size_t>(i)] + m2[static_cast<size_t>(i)];
  Tensor a = pointwise_mul(x, Tensor::from({1, 4, 4}, m1));
  Tensor b = pointwise_mul(x, Tensor::from({1, 4, 4}, m2));
  Tensor both = pointwise_mul(x, Tensor::from({1, 4, 4}, m12));
  Tensor sum_ab = add(a, b);
  for (size_t i = 0; i < both.data().size(); ++i)
    CHECK(sum_ab.data()[i] == doctest::Approx(both.data()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d identity kernel preserves input") {
  Rng rng(4);
  Tensor x = random_tensor({1, 4, 4}, rng, 0, 1, false);
  Tensor k = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, k, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 4, 4});
  for (size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("layer_norm standardizes rows") {
  Rng rng(5);
  const int n = 6, d = 8;
  Tensor x = random_tensor({n, d}, rng, -3, 3, false);
  Tensor y = layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}));
  for (int i = 0; i < n; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < d; ++j) mean += y.data()[static_cast<size_t>(i) * d + j];
    mean /= d;
    for (int j = 0; j < d; ++j) {
      const double c = y.data()[static_cast<size_t>(i) * d + j] - mean;
      var += c * c;
    }
    var /= d;
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("shape mismatches raise descriptive errors") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4,5]"), std::invalid_argument);
  CHECK_THROWS_AS(linear(a, Tensor::zeros({7, 2}), Tensor::zeros({2})), std::invalid_argument);
}

TEST_CASE("attention with a single key returns the projected value row for every query") {
  Rng rng(6);
  ParamRegistry reg;
  Rng prng(7);
  const int dim = 8, heads = 2;
  const AttentionParams p = make_attention(reg, "attn", dim, heads, prng);
  Tensor q = random_tensor({5, dim}, rng, -1, 1, false);
  Tensor k = random_tensor({1, dim}, rng, -1, 1, false);
  Tensor v = random_tensor({1, dim}, rng, -1, 1, false);
  Tensor y = multi_head_attention(q, k, v, p);
  // weight on the single key is 1, so the output is W_o(W_v v + b_v) + b_o
  Tensor expected = linear(linear(v, p.wv, p.bv), p.wo, p.bo);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < dim; ++j)
      CHECK(y.data()[static_cast<size_t>(i) * dim + j] ==
            doctest::Approx(expected.data()[static_cast<size_t>(j)]).epsilon(1e-12));
}

TEST_CASE("attention weight rows sum to one") {
  Rng rng(8);
  ParamRegistry reg;
  Rng prng(9);
  const AttentionParams p = make_attention(reg, "attn", 8, 4, prng);
  Tensor q = random_tensor({4, 8}, rng, -1, 1, false);
  Tensor kv = random_tensor({6, 8}, rng, -1, 1, false);
  std::vector<Tensor> weights;
  multi_head_attention(q, kv, kv, p, false, &weights);
  REQUIRE(weights.size() == 4);
  for (const Tensor& w : weights)
    for (int i = 0; i < w.dim(0); ++i) {
      double s = 0;
      for (int j = 0; j < w.dim(1); ++j) s += w.data()[static_cast<size_t>(i) * w.dim(1) + j];
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("attention is equivariant to joint key/value permutation") {
  Rng rng(10);
  ParamRegistry reg;
  Rng prng(11);
  const AttentionParams p = make_attention(reg, "attn", 8, 2, prng);
  Tensor q = random_tensor({3, 8}, rng, -1, 1, false);
  Tensor k = random_tensor({5, 8}, rng, -1, 1, false);
  Tensor v = random_tensor({5, 8}, rng, -1, 1, false);
  Tensor base = multi_head_attention(q, k, v, p);

  std::vector<int> perm = {3, 0, 4, 1, 2};
  auto permute_rows = [&](const Tensor& t) {
    std::vector<double> out(t.data().size());
    for (size_t i = 0; i < perm.size(); ++i)
      for (int j = 0; j < t.dim(1); ++j)
        out[i * static_cast<size_t>(t.dim(1)) + static_cast<size_t>(j)] =
            t.data()[static_cast<size_t>(perm[i]) * t.dim(1) + static_cast<size_t>(j)];
    return Tensor::from(t.shape(), std::move(out));
  };
  Tensor permuted = multi_head_attention(q, permute_rows(k), permute_rows(v), p);
  for (size_t i = 0; i < base.data().size(); ++i)
    CHECK(permuted.data()[i] == doctest::Approx(base.data()[i]).epsilon(1e-9));
}

TEST_CASE("attention rejects dim not divisible by heads") {
  ParamRegistry reg;
  Rng prng(12);
  CHECK_THROWS_AS(make_attention(reg, "attn", 6, 4, prng), std::invalid_argument);
}

TEST_CASE("grad_check on sum of squares matches the analytic gradient") {
  Tensor x = Tensor::param({2}, {1.0, 2.0});
  auto f = [&] { return sum(mul(x, x)); };
  const GradCheckReport rep = grad_check(f, {{"x", x}});
  CHECK(rep.max_rel_err < 1e-8);
  // backward already ran inside grad_check
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("grad_check on cosine loss composed with linear") {
  Rng rng(13);
  Tensor x = random_tensor({1, 4}, rng);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor target = random_tensor_away_from_zero({4}, rng);
  target.set_requires_grad(false);
  auto f = [&] { return cosine_loss(reshape(linear(x, w, b), {4}), target); };
  CHECK(grad_check(f, {{"x", x}, {"w", w}, {"b", b}}).max_rel_err < 1e-4);
}

TEST_CASE("gradient of a constant function is exactly zero") {
  Tensor x = Tensor::param({3}, {1.0, -2.0, 0.5});
  auto f = [&] { return sum(mul(Tensor::zeros({3}), x)); };
  const GradCheckReport rep = grad_check(f, {{"x", x}});
  CHECK(rep.max_rel_err == 0.0);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("every layer passes randomized finite-difference checks") {
  for (const auto& c : layer_gradcheck_suite(20)) {
    INFO(c.name);
    CHECK(c.worst < 1e-4);
  }
}

TEST_CASE("adam leaves parameters unchanged on zero gradients") {
  Rng rng(14);
  ParamRegistry reg;
  Tensor w = reg.create("w", {3, 3}, Init::XavierUniform, rng);
  const std::vector<double> before = w.data();
  AdamOptimizer opt(reg.all(), 1e-3);
  opt.zero_grad();
  opt.step();
  CHECK(w.data() == before);
}

TEST_CASE("first adam step moves by about lr in the gradient sign direction") {
  Rng rng(15);
  ParamRegistry reg;
  Tensor w = reg.create("w", {4}, Init::XavierUniform, rng);
  const std::vector<double> before = w.data();
  AdamOptimizer opt(reg.all(), 1e-2);
  opt.zero_grad();
  Tensor grad_src = random_tensor_away_from_zero({4}, rng, 0.5);
  sum(mul(w, grad_src.clone_detached())).backward();
  opt.step();
  for (int i = 0; i < 4; ++i) {
    const double delta = w.data()[static_cast<size_t>(i)] - before[static_cast<size_t>(i)];
    const double g = grad_src.data()[static_cast<size_t>(i)];
    CHECK(std::fabs(delta + 1e-2 * (g > 0 ? 1.0 : -1.0)) < 1e-5);
  }
}

TEST_CASE("adam applies per-group learning rates by name prefix") {
  Rng rng(16);
  ParamRegistry reg;
  Tensor a = reg.create("backbone.w", {1}, Init::Zeros, rng);
  Tensor c = reg.create("decoder.w", {1}, Init::Zeros, rng);
  AdamOptimizer opt(reg.all(), 5e-4, {{"backbone.", 1e-4}});
  CHECK(opt.lr_for("backbone.w") == 1e-4);
  CHECK(opt.lr_for("decoder.w") == 5e-4);
  opt.zero_grad();
  add(scale(a, 1.0), scale(c, 1.0)).backward();
  opt.step();
  CHECK(std::fabs(a.data()[0] + 1e-4) < 1e-8);
  CHECK(std::fabs(c.data()[0] + 5e-4) < 1e-8);
}

TEST_CASE("backward accumulates through reshape and concat") {
  Rng rng(17);
  Tensor x = random_tensor({2, 3}, rng);
  auto f = [&] {
    Tensor doubled = concat_rows({x, x});
    return scalar_head(reshape(doubled, {3, 4}));
  };
  CHECK(grad_check(f, {{"x", x}}).max_rel_err < 1e-6);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(18);
  Tensor x = random_tensor({4, 4}, rng, -1, 1, false);
  Tensor w = random_tensor({4, 4}, rng, -1, 1, false);
  Tensor b = random_tensor({4}, rng, -1, 1, false);
  Tensor y1 = softmax(linear(x, w, b), 1);
  Tensor y2 = softmax(linear(x, w, b), 1);
  CHECK(y1.data() == y2.data());
}
