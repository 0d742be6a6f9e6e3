#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "tsforge/tensor.hpp"

using namespace tsforge;
using testsupport::check_gradients;

TEST_CASE("matmul identity and scalar cases") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  Tensor out = matmul(eye, m);
  CHECK(out.values()[0] == 5);
  CHECK(out.values()[1] == 6);
  CHECK(out.values()[2] == 7);
  CHECK(out.values()[3] == 8);

  Tensor a = Tensor::from_data({1, 1}, {2});
  Tensor b = Tensor::from_data({1, 1}, {3});
  CHECK(matmul(a, b).item() == 6);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(11);
  Tensor a = Tensor::randn({3, 4}, 1.0, rng);
  Tensor b = Tensor::randn({4, 2}, 1.0, rng);
  Tensor out = matmul(a, b);
  auto oracle = testsupport::matmul_loops(a.values(), b.values(), 3, 4, 2);
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul batched variants match per-batch loops") {
  Rng rng(12);
  Tensor a = Tensor::randn({2, 3, 3, 4}, 1.0, rng);
  Tensor b4 = Tensor::randn({2, 3, 4, 2}, 1.0, rng);
  Tensor b2 = Tensor::randn({4, 2}, 1.0, rng);

  Tensor out4 = matmul(a, b4);
  Tensor out2 = matmul(a, b2);
  CHECK(out4.shape() == Shape{2, 3, 3, 2});
  CHECK(out2.shape() == Shape{2, 3, 3, 2});
  for (std::size_t batch = 0; batch < 6; ++batch) {
    auto sa = a.values().subspan(batch * 12, 12);
    auto o4 = testsupport::matmul_loops(sa, b4.values().subspan(batch * 8, 8), 3, 4, 2);
    auto o2 = testsupport::matmul_loops(sa, b2.values(), 3, 4, 2);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(out4.values()[batch * 6 + i] == doctest::Approx(o4[i]).epsilon(1e-12));
      CHECK(out2.values()[batch * 6 + i] == doctest::Approx(o2[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("(2, 3)"), DimensionError);
}

TEST_CASE("elementwise examples") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor zero = Tensor::from_data({2}, {0, 0});
  Tensor sum = add(a, zero);
  CHECK(sum.values()[0] == 1);
  CHECK(sum.values()[1] == 2);

  CHECK(mean(Tensor::from_data({3}, {2, 4, 6})).item() == 4);

  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("gradient of mean(square(x)) is 2x/n") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tape tape;
  Tensor loss = mean(square(x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("suffix broadcast add accumulates bias gradient over rows") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor bias = Tensor::from_data({3}, {0.5, -0.5, 1.0}, true);
  auto loss_fn = [&] { return mean(square(add(x, bias))); };
  auto res = check_gradients(loss_fn, {x, bias});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax basics") {
  Tensor x = Tensor::from_data({2}, {0, 0});
  Tensor y = softmax(x, 0);
  CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  // shift invariance
  Rng rng(3);
  Tensor a = Tensor::randn({5}, 2.0, rng);
  Tensor shifted = add(a, Tensor::scalar(17.5));
  Tensor ya = softmax(a, 0);
  Tensor yb = softmax(shifted, 0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(ya.values()[i] == doctest::Approx(yb.values()[i]).epsilon(1e-12));
  }

  // rows sum to one, entries in (0, 1]
  Tensor wide = Tensor::randn({4, 6}, 3.0, rng);
  Tensor probs = softmax(wide, -1);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      double v = probs.values()[r * 6 + c];
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax along a middle axis") {
  Rng rng(4);
  Tensor x = Tensor::randn({2, 3, 2}, 1.0, rng);
  Tensor y = softmax(x, 1);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t in = 0; in < 2; ++in) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) sum += y.values()[b * 6 + i * 2 + in];
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(5);
  Tensor x = Tensor::randn({4}, 1.0, rng, true);
  Tensor weights = Tensor::randn({4}, 1.0, rng);
  auto loss_fn = [&] { return mean(mul(softmax(x, 0), weights)); };
  auto res = check_gradients(loss_fn, {x});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("layer_norm analytic cases") {
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  Tensor constant = Tensor::from_data({1, 3}, {4, 4, 4});
  Tensor y = layer_norm(constant, gamma, beta);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  Tensor two = Tensor::from_data({1, 2}, {1, 3});
  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor z = layer_norm(two, g2, b2, 0.0);
  CHECK(z.values()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(z.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm output is standardized per row") {
  Rng rng(6);
  Tensor x = Tensor::randn({5, 8}, 3.0, rng);
  Tensor y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.values()[r * 8 + c];
    mean /= 8;
    for (std::size_t c = 0; c < 8; ++c) {
      double d = y.values()[r * 8 + c] - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(7);
  Tensor x = Tensor::randn({3, 4}, 1.0, rng, true);
  Tensor gamma = Tensor::randn({4}, 0.5, rng, true);
  Tensor beta = Tensor::randn({4}, 0.5, rng, true);
  Tensor weights = Tensor::randn({3, 4}, 1.0, rng);
  auto loss_fn = [&] { return mean(mul(layer_norm(x, gamma, beta), weights)); };
  auto res = check_gradients(loss_fn, {x, gamma, beta});
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gelu values against the erf series oracle") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor::scalar(10.0)).item() == doctest::Approx(10.0).epsilon(1e-9));

  double expected = static_cast<double>(1.0L * testsupport::gauss_cdf_series(1.0L));
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(expected).epsilon(1e-14));

  Rng rng(8);
  Tensor x = Tensor::randn({6}, 1.5, rng, true);
  for (std::size_t i = 0; i < 6; ++i) {
    long double xi = x.values()[i];
    long double want = xi * testsupport::gauss_cdf_series(xi);
    CHECK(gelu(x).values()[i] == doctest::Approx(static_cast<double>(want)).epsilon(1e-13));
  }
  auto loss_fn = [&] { return mean(square(gelu(x))); };
  CHECK(check_gradients(loss_fn, {x}).max_rel_err < 1e-6);
}

TEST_CASE("dropout identity paths") {
  Rng rng(9);
  Tensor x = Tensor::randn({10}, 1.0, rng);
  Tensor train_p0 = dropout(x, 0.0, true, &rng);
  Tensor eval = dropout(x, 0.7, false, nullptr);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(train_p0.values()[i] == x.values()[i]);
    CHECK(eval.values()[i] == x.values()[i]);
  }
  CHECK_THROWS_AS(dropout(x, 1.0, true, &rng), ParameterError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, &rng), ParameterError);
}

TEST_CASE("dropout Monte-Carlo mean preserves the input") {
  Rng rng(10);
  Tensor x = Tensor::from_data({4}, {1.0, -2.0, 0.5, 3.0});
  std::vector<double> acc(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    Tensor y = dropout(x, 0.3, true, &rng);
    for (std::size_t j = 0; j < 4; ++j) acc[j] += y.values()[j];
  }
  for (std::size_t j = 0; j < 4; ++j) {
    double mc = acc[j] / draws;
    CHECK(std::abs(mc - x.values()[j]) < 0.02 * std::abs(x.values()[j]) + 1e-3);
  }
}

TEST_CASE("dropout gradient equals its mask") {
  Tensor x = Tensor::from_data({8}, {1, 1, 1, 1, 1, 1, 1, 1}, true);
  auto loss_fn = [&] {
    Rng rng(77);  // fixed mask on every call, so the function is deterministic
    return mean(dropout(x, 0.5, true, &rng));
  };
  CHECK(check_gradients(loss_fn, {x}).max_rel_err < 1e-6);
}

TEST_CASE("pointwise_channel_projection analytic cases") {
  // identity weights, zero bias, C == H
  Tensor x = Tensor::from_data({1, 2, 1, 3}, {1, 2, 3, 4, 5, 6});
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor zero_bias = Tensor::zeros({2});
  Tensor same = pointwise_channel_projection(x, eye, zero_bias);
  for (std::size_t i = 0; i < 6; ++i) CHECK(same.values()[i] == x.values()[i]);

  // H=2 -> C=1 with weights [1, 1] sums the channels per timestep
  Tensor sum_w = Tensor::from_data({1, 2}, {1, 1});
  Tensor out = pointwise_channel_projection(x, sum_w, Tensor::zeros({1}));
  CHECK(out.shape() == Shape{1, 1, 1, 3});
  CHECK(out.values()[0] == 5);
  CHECK(out.values()[1] == 7);
  CHECK(out.values()[2] == 9);
}

TEST_CASE("pointwise_channel_projection equals the reshape-matmul route") {
  Rng rng(13);
  std::size_t b = 2, h = 3, w = 5, c = 4;
  Tensor x = Tensor::randn({b, h, 1, w}, 1.0, rng);
  Tensor weight = Tensor::randn({c, h}, 1.0, rng);
  Tensor bias = Tensor::randn({c}, 1.0, rng);
  Tensor out = pointwise_channel_projection(x, weight, bias);

  // oracle: (B*W, H) x (H, C) then scatter back
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < w; ++t) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = bias.values()[ci];
        for (std::size_t hi = 0; hi < h; ++hi) {
          acc += weight.values()[ci * h + hi] * x.values()[(bi * h + hi) * w + t];
        }
        CHECK(out.values()[(bi * c + ci) * w + t] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }

  Tensor xg = Tensor::randn({b, h, 1, w}, 1.0, rng, true);
  Tensor wg = Tensor::randn({c, h}, 1.0, rng, true);
  Tensor bg = Tensor::randn({c}, 1.0, rng, true);
  Tensor target = Tensor::randn({b, c, 1, w}, 1.0, rng);
  auto loss_fn = [&] {
    return mean(square(sub(pointwise_channel_projection(xg, wg, bg), target)));
  };
  CHECK(check_gradients(loss_fn, {xg, wg, bg}).max_rel_err < 1e-5);
}

TEST_CASE("pointwise_channel_projection rejects bad shapes") {
  Tensor x = Tensor::zeros({1, 2, 1, 3});
  CHECK_THROWS_AS(pointwise_channel_projection(x, Tensor::zeros({2, 3}), Tensor::zeros({2})),
                  DimensionError);
  CHECK_THROWS_AS(pointwise_channel_projection(Tensor::zeros({2, 2, 2, 3}),
                                               Tensor::zeros({2, 2}), Tensor::zeros({2})),
                  DimensionError);
}

TEST_CASE("backward on x squared") {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = square(x);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss and an active tape") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  {
    Tape tape;
    Tensor y = square(x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  CHECK_THROWS_AS(backward(square(x)), ContractError);
}

TEST_CASE("mse gradients match finite differences") {
  Rng rng(14);
  Tensor x = Tensor::randn({2, 3}, 1.0, rng, true);
  Tensor w = Tensor::randn({3, 2}, 1.0, rng, true);
  Tensor y = Tensor::randn({2, 2}, 1.0, rng);
  auto loss_fn = [&] { return mean(square(sub(matmul(x, w), y))); };
  CHECK(check_gradients(loss_fn, {x, w}).max_rel_err < 1e-5);
}

TEST_CASE("two consumers accumulate additively") {
  Tensor x = Tensor::from_data({2}, {1.5, -0.5}, true);
  {
    Tape tape;
    Tensor path_a = mean(square(x));
    Tensor path_b = mean(mul(x, Tensor::scalar(3.0)));
    Tensor loss = add(path_a, path_b);
    tape.backward(loss);
  }
  // d/dx_i of (mean x^2 + mean 3x) = x_i + 1.5
  CHECK(x.grad()[0] == doctest::Approx(1.5 + 1.5).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-0.5 + 1.5).epsilon(1e-12));

  auto loss_fn = [&] {
    return add(mean(square(x)), mean(mul(x, Tensor::scalar(3.0))));
  };
  CHECK(check_gradients(loss_fn, {x}).max_rel_err < 1e-6);
}

TEST_CASE("unreachable parameters keep an absent gradient") {
  Tensor used = Tensor::scalar(2.0);
  used.set_requires_grad(true);
  Tensor unused = Tensor::scalar(5.0);
  unused.set_requires_grad(true);
  Tape tape;
  Tensor loss = square(used);
  tape.backward(loss);
  CHECK(used.has_grad());
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("reshape, permute and token ops are exact data movements") {
  Rng rng(15);
  Tensor x = Tensor::randn({2, 3, 4}, 1.0, rng);
  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(p.values()[k * 6 + i * 3 + j] == x.values()[i * 12 + j * 4 + k]);
      }
    }
  }
  // permute then inverse-permute is the identity
  Tensor back = permute(p, {1, 2, 0});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.values()[i] == x.values()[i]);

  Tensor token = Tensor::from_data({1, 3}, {9, 8, 7});
  Tensor tokens = Tensor::randn({2, 2, 3}, 1.0, rng);
  Tensor with = concat_token(token, tokens);
  CHECK(with.shape() == Shape{2, 3, 3});
  CHECK(with.values()[0] == 9);
  CHECK(with.values()[9] == 9);
  Tensor first = select_token(with, 0);
  CHECK(first.values()[0] == 9);
  CHECK(first.values()[3] == 9);

  CHECK_THROWS_AS(select_token(with, 3), ParameterError);
  CHECK_THROWS_AS(reshape(x, {5, 5}), DimensionError);
}

TEST_CASE("data movement gradients match finite differences") {
  Rng rng(16);
  Tensor x = Tensor::randn({2, 3, 4}, 1.0, rng, true);
  Tensor token = Tensor::randn({1, 4}, 1.0, rng, true);
  Tensor weights = Tensor::randn({2, 4, 4}, 1.0, rng);
  auto loss_fn = [&] {
    Tensor moved = permute(reshape(x, {2, 4, 3}), {0, 2, 1});  // (2, 3, 4) again
    Tensor with = concat_token(token, moved);                  // (2, 4, 4)
    return mean(mul(with, weights));
  };
  CHECK(check_gradients(loss_fn, {x, token}).max_rel_err < 1e-6);
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad(true);
  Tape tape;
  Tensor cut = detach(square(x));
  CHECK_FALSE(cut.requires_grad());
  Tensor loss = mean(square(cut));
  tape.backward(loss);
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("tape replay is bitwise deterministic") {
  auto run = [] {
    Rng rng(123);
    Tensor x = Tensor::randn({4, 4}, 1.0, rng, true);
    Tensor w = Tensor::randn({4, 4}, 1.0, rng, true);
    Tape tape;
    Tensor loss = mean(square(gelu(matmul(dropout(x, 0.25, true, &rng), w))));
    tape.backward(loss);
    std::vector<double> out(loss.values().begin(), loss.values().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("gradient property sweep across primitives") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = Tensor::randn({3, 5}, 1.0, rng, true);
    Tensor w = Tensor::randn({5, 3}, 1.0, rng, true);
    Tensor gamma = Tensor::randn({5}, 0.3, rng, true);
    Tensor beta = Tensor::randn({5}, 0.3, rng, true);
    auto loss_fn = [&] {
      Tensor normed = layer_norm(x, gamma, beta);
      Tensor h = gelu(matmul(softmax(normed, -1), w));
      return mean(square(h));
    };
    auto res = check_gradients(loss_fn, {x, w, gamma, beta});
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
  }
}
