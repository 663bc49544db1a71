#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "iprompt/errors.hpp"
#include "iprompt/gradcheck.hpp"
#include "iprompt/ops.hpp"
#include "iprompt/optim.hpp"
#include "iprompt/rng.hpp"
#include "iprompt/tensor.hpp"

using namespace iprompt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = false) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Independent oracle: plain triple loop, no shared code with matmul().
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < k; ++l) c[i * n + j] += a[i * k + l] * b[l * n + j];
  return c;
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, a);
  CHECK(r.data() == a.data());

  Tensor row = Tensor::from_data({1, 2}, {1, 0});
  Tensor col = Tensor::from_data({2, 1}, {0, 5});
  CHECK(matmul(row, col).value() == 0.0);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("matmul against triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto expect = matmul_oracle(a.data(), b.data(), 3, 4, 2);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::abs(c.data()[i] - expect[i]) <= 1e-12);
  }
}

TEST_CASE("matmul gradients") {
  Rng rng(12);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, true);
  auto fa = [&](const Tensor& x) { return sum(mul(matmul(x, b), matmul(x, b))); };
  CHECK(grad_check(fa, a) < 1e-6);
  auto fb = [&](const Tensor& x) { return sum(mul(matmul(a, x), matmul(a, x))); };
  CHECK(grad_check(fb, b) < 1e-6);
}

TEST_CASE("layernorm") {
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});

  SUBCASE("constant row maps to zeros") {
    Tensor x = Tensor::full({1, 4}, 5.0);
    Tensor y = layernorm(x, gain, bias);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("two-point row normalizes to unit values") {
    Tensor g2 = Tensor::full({2}, 1.0);
    Tensor b2 = Tensor::zeros({2});
    Tensor x = Tensor::from_data({1, 2}, {1, -1});
    Tensor y = layernorm(x, g2, b2, 1e-12);
    CHECK(y.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(y.at({0, 1}) == doctest::Approx(-1.0).epsilon(1e-9));
  }
  SUBCASE("gradient vs finite differences") {
    Rng rng(13);
    Tensor x = random_tensor({3, 4}, rng, true);
    Tensor g = random_tensor({4}, rng, true);
    Tensor b = random_tensor({4}, rng, true);
    auto f = [&](const Tensor&) {
      Tensor y = layernorm(x, g, b);
      return sum(mul(y, y));
    };
    CHECK(grad_check(f, x) < 1e-6);
    CHECK(grad_check(f, g) < 1e-6);
    CHECK(grad_check(f, b) < 1e-6);
  }
  SUBCASE("zero-width axis rejected") {
    CHECK_THROWS_AS(layernorm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})),
                    DimensionError);
  }
}

TEST_CASE("softmax") {
  SUBCASE("symmetry") {
    Tensor y = softmax(Tensor::zeros({3}), 0);
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  SUBCASE("large inputs stay stable") {
    Tensor y = softmax(Tensor::full({2}, 1000.0), 0);
    CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(all_finite(y));
  }
  SUBCASE("against direct exp/sum oracle") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor y = softmax(x, 0);
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(y.data()[i] - std::exp(1.0 + i) / z) <= 1e-12);
    }
  }
  SUBCASE("sums to one and positive, both axes") {
    Rng rng(14);
    for (int axis = 0; axis < 2; ++axis) {
      Tensor x = random_tensor({4, 5}, rng);
      Tensor y = softmax(x, axis);
      int other = 1 - axis;
      for (int i = 0; i < x.dim(other); ++i) {
        double s = 0.0;
        for (int j = 0; j < x.dim(axis); ++j) {
          double v = axis == 0 ? y.at({j, i}) : y.at({i, j});
          CHECK(v > 0.0);
          s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
  SUBCASE("gradient") {
    Rng rng(15);
    Tensor x = random_tensor({2, 3}, rng, true);
    Tensor w = random_tensor({2, 3}, rng);
    auto f = [&](const Tensor&) { return sum(mul(softmax(x, 1), w)); };
    CHECK(grad_check(f, x) < 1e-6);
  }
}

TEST_CASE("cosine similarity") {
  SUBCASE("orthogonal") {
    CHECK(cosine_similarity(Tensor::from_data({2}, {1, 0}), Tensor::from_data({2}, {0, 1})).value() == 0.0);
  }
  SUBCASE("positive scaling invariance") {
    CHECK(cosine_similarity(Tensor::from_data({2}, {2, 0}), Tensor::from_data({2}, {1, 0})).value() ==
          doctest::Approx(1.0).epsilon(1e-14));
    Rng rng(16);
    Tensor a = random_tensor({5}, rng);
    Tensor b = random_tensor({5}, rng);
    double base = cosine_similarity(a, b).value();
    for (double alpha : {0.5, 2.0, 10.0}) {
      std::vector<double> scaled = a.data();
      for (auto& v : scaled) v *= alpha;
      double got = cosine_similarity(Tensor::from_data({5}, scaled), b).value();
      CHECK(std::abs(got - base) <= 1e-12);
    }
  }
  SUBCASE("formula value") {
    double v = cosine_similarity(Tensor::from_data({2}, {1, 1}), Tensor::from_data({2}, {1, 0})).value();
    CHECK(v == doctest::Approx(0.70710678).epsilon(1e-8));
  }
  SUBCASE("zero vector yields zero") {
    CHECK(cosine_similarity(Tensor::zeros({3}), Tensor::from_data({3}, {1, 2, 3})).value() == 0.0);
  }
  SUBCASE("bounded") {
    Rng rng(17);
    for (int i = 0; i < 50; ++i) {
      double v = cosine_similarity(random_tensor({4}, rng), random_tensor({4}, rng)).value();
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
  SUBCASE("gradient") {
    Rng rng(18);
    Tensor a = random_tensor({4}, rng, true);
    Tensor b = random_tensor({4}, rng, true);
    auto f = [&](const Tensor&) { return cosine_similarity(a, b); };
    CHECK(grad_check(f, a) < 1e-6);
    CHECK(grad_check(f, b) < 1e-6);
  }
}

TEST_CASE("cosine matrix matches scalar loop") {
  Rng rng(19);
  Tensor x = random_tensor({5, 6}, rng);
  Tensor k = random_tensor({4, 6}, rng);
  Tensor c = cosine_matrix(x, k);
  for (int i = 0; i < 5; ++i) {
    Tensor xi = slice_rows(x, i, i + 1);
    for (int j = 0; j < 4; ++j) {
      Tensor kj = slice_rows(k, j, j + 1);
      double expect = cosine_similarity(reshape(xi, {6}), reshape(kj, {6})).value();
      CHECK(std::abs(c.at({i, j}) - expect) <= 1e-12);
    }
  }

  Tensor xg = random_tensor({3, 4}, rng, true);
  Tensor kg = random_tensor({2, 4}, rng, true);
  Tensor w = random_tensor({3, 2}, rng);
  auto f = [&](const Tensor&) { return sum(mul(cosine_matrix(xg, kg), w)); };
  CHECK(grad_check(f, xg) < 1e-6);
  CHECK(grad_check(f, kg) < 1e-6);
}

TEST_CASE("cross entropy") {
  SUBCASE("two equal logits") {
    Tensor logits = Tensor::zeros({1, 2});
    CHECK(cross_entropy(logits, {0}).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("masked logit is ignored and gets zero gradient") {
    Tensor logits = Tensor::from_data({1, 2}, {10.0, -kInf}, true);
    Tensor loss = cross_entropy(logits, {0});
    CHECK(loss.value() == doctest::Approx(0.0).epsilon(1e-4));
    loss.backward();
    CHECK(logits.grad()[1] == 0.0);
  }
  SUBCASE("label on masked logit rejected") {
    Tensor logits = Tensor::from_data({1, 2}, {10.0, -kInf});
    CHECK_THROWS_AS(cross_entropy(logits, {1}), MaskError);
  }
  SUBCASE("random batch vs log-sum-exp oracle") {
    Rng rng(20);
    Tensor logits = random_tensor({4, 6}, rng);
    std::vector<int> labels = {2, 0, 5, 3};
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) {
      double mx = -kInf;
      for (int j = 0; j < 6; ++j) mx = std::max(mx, logits.at({i, j}));
      double se = 0.0;
      for (int j = 0; j < 6; ++j) se += std::exp(logits.at({i, j}) - mx);
      expect += mx + std::log(se) - logits.at({i, labels[i]});
    }
    expect /= 4.0;
    CHECK(std::abs(cross_entropy(logits, labels).value() - expect) <= 1e-10);
  }
  SUBCASE("gradient") {
    Rng rng(21);
    Tensor logits = random_tensor({3, 4}, rng, true);
    auto f = [&](const Tensor&) { return cross_entropy(logits, {1, 3, 0}); };
    CHECK(grad_check(f, logits) < 1e-6);
  }
}

TEST_CASE("mask_logits blocks values and gradients") {
  Tensor logits = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor masked = mask_logits(logits, {1, 0, 1});
  CHECK(masked.at({0, 1}) == -kInf);
  CHECK(masked.at({1, 0}) == 4.0);
  Tensor loss = cross_entropy(masked, {0, 2});
  loss.backward();
  CHECK(logits.grad()[1] == 0.0);
  CHECK(logits.grad()[4] == 0.0);
  CHECK(logits.grad()[0] != 0.0);
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr") {
    Tensor p = Tensor::scalar(0.0, true);
    p.grad()[0] = 1.0;
    AdamState st({p});
    adam_step(st, 0.001);
    CHECK(p.value() == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(st.step_count == 1);
    CHECK(p.grad()[0] == 0.0);
  }
  SUBCASE("zero grad leaves parameter unchanged") {
    Tensor p = Tensor::scalar(3.5, true);
    AdamState st({p});
    adam_step(st, 0.01);
    adam_step(st, 0.01);
    CHECK(p.value() == 3.5);
  }
  SUBCASE("identical params get identical updates") {
    Tensor a = Tensor::scalar(1.0, true);
    Tensor b = Tensor::scalar(1.0, true);
    a.grad()[0] = 0.37;
    b.grad()[0] = 0.37;
    AdamState st({a, b});
    adam_step(st, 0.005);
    CHECK(a.value() == b.value());
  }
  SUBCASE("missing grad is a usage error") {
    Tensor p = Tensor::scalar(0.0, false);
    CHECK_THROWS_AS(AdamState({p}), UsageError);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 0.001) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 0.001) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_lr(50, 100, 0.001) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(0, 0, 0.001), UsageError);
}

TEST_CASE("grad_check on closed forms") {
  SUBCASE("sum of squares") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    auto f = [](const Tensor& t) { return sum(mul(t, t)); };
    CHECK(grad_check(f, x) < 1e-8);
  }
  SUBCASE("constant function") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    auto f = [](const Tensor& t) { return scale(sum(mul(t, Tensor::zeros({3}))), 0.0); };
    CHECK(grad_check(f, x) == 0.0);
  }
}

TEST_CASE("elementary op gradients vs finite differences over seeds") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({3, 4}, rng, true);
    Tensor v = random_tensor({4}, rng, true);

    auto f_add = [&](const Tensor&) { return sum(mul(add(a, b), add(a, b))); };
    CHECK(grad_check(f_add, a) < 1e-6);
    auto f_sub = [&](const Tensor&) { return sum(mul(sub(a, b), sub(a, b))); };
    CHECK(grad_check(f_sub, b) < 1e-6);
    auto f_rowvec = [&](const Tensor&) { return sum(mul(add_rowvec(a, v), add_rowvec(a, v))); };
    CHECK(grad_check(f_rowvec, v) < 1e-6);
    auto f_gelu = [&](const Tensor&) { return sum(gelu(a)); };
    CHECK(grad_check(f_gelu, a) < 1e-6);
    auto f_t = [&](const Tensor&) { return sum(mul(transpose(a), transpose(a))); };
    CHECK(grad_check(f_t, a) < 1e-6);
    auto f_slice = [&](const Tensor&) {
      Tensor s = concat_rows({slice_rows(a, 1, 3), slice_rows(a, 0, 1)});
      Tensor c = concat_cols({slice_cols(s, 2, 4), slice_cols(s, 0, 2)});
      return sum(mul(c, c));
    };
    CHECK(grad_check(f_slice, a) < 1e-6);
    auto f_zero = [&](const Tensor&) { return sum(mul(zero_row(a, 1), zero_row(a, 1))); };
    CHECK(grad_check(f_zero, a) < 1e-6);
    auto f_mean = [&](const Tensor&) { return mean(mul(a, a)); };
    CHECK(grad_check(f_mean, a) < 1e-6);
  }
}

TEST_CASE("sum_rows_range reduces the middle axis") {
  Rng rng(22);
  Tensor x = random_tensor({2, 4, 3}, rng, true);
  Tensor front = sum_rows_range(x, 0, 2);
  Tensor back = sum_rows_range(x, 2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(front.at({i, j}) == doctest::Approx(x.at({i, 0, j}) + x.at({i, 1, j})).epsilon(1e-14));
      CHECK(back.at({i, j}) == doctest::Approx(x.at({i, 2, j}) + x.at({i, 3, j})).epsilon(1e-14));
    }
  auto f = [&](const Tensor&) {
    Tensor s = sum_rows_range(x, 1, 3);
    return sum(mul(s, s));
  };
  CHECK(grad_check(f, x) < 1e-6);
}

TEST_CASE("determinism of op pipelines") {
  auto run = [] {
    Rng rng(99);
    Tensor a = random_tensor({4, 4}, rng, true);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor y = sum(mul(softmax(matmul(gelu(a), b), 1), b));
    y.backward();
    auto out = a.grad();
    out.push_back(y.value());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("frozen leaves receive no gradient buffers") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  a.set_requires_grad(false);
  CHECK_THROWS_AS(a.grad(), UsageError);
  Tensor b = Tensor::from_data({2, 2}, {1, 1, 1, 1}, true);
  Tensor y = sum(mul(a, b));
  y.backward();
  CHECK(b.grad()[0] == 1.0);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  Tensor t = Tensor::zeros({2, 3}, true);
  CHECK(t.size() == 6);
  CHECK(t.grad().size() == 6);
  CHECK_THROWS_AS(Tensor::zeros({2}).backward(), UsageError);
}
