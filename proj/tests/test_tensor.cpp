#include <doctest.h>

#include <cmath>

#include "gaid/ops.hpp"
#include "gaid/rng.hpp"
#include "gaid/tensor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gaid;

TEST_CASE("matmul identity and small products") {
  const TensorD eye({2, 2}, {1, 0, 0, 1});
  const TensorD col({2, 1}, {3, 4});
  const TensorD r = matmul(eye, col);
  CHECK(r.at2(0, 0) == 3.0);
  CHECK(r.at2(1, 0) == 4.0);

  const TensorD a({1, 2}, {1, 2});
  CHECK(matmul(a, col).at2(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle exactly on random shapes") {
  Rng rng(7);
  const TensorD a = testutil::random_tensor({5, 7}, rng);
  const TensorD b = testutil::random_tensor({7, 3}, rng);
  const TensorD got = matmul(a, b);
  const TensorD want = oracle::matmul(a, b);
  // identical summation order in both routes: exact equality
  CHECK(got == want);

  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
    const TensorD x = testutil::random_tensor({m, k}, rng);
    const TensorD y = testutil::random_tensor({k, n}, rng);
    CHECK(testutil::max_abs_diff(matmul(x, y), oracle::matmul(x, y)) <= 1e-12);
  }
}

TEST_CASE("matmul transposed variants agree with explicit transpose") {
  Rng rng(11);
  const TensorD a = testutil::random_tensor({4, 6}, rng);
  const TensorD b = testutil::random_tensor({4, 5}, rng);
  CHECK(testutil::max_abs_diff(matmul_at_b(a, b), oracle::matmul(transpose(a), b)) <= 1e-12);
  const TensorD c = testutil::random_tensor({3, 6}, rng);
  CHECK(testutil::max_abs_diff(matmul_a_bt(a, c), oracle::matmul(a, transpose(c))) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  const TensorD a({2, 3});
  const TensorD b({4, 2});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("sigmoid values and saturation") {
  const TensorD x({3}, {0.0, 1000.0, 1.0});
  const TensorD y = sigmoid(x);
  CHECK(y[0] == 0.5);
  CHECK(y[1] == 1.0);  // saturates without overflow
  CHECK(y[2] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  const TensorD neg({1}, {-1000.0});
  CHECK(sigmoid(neg)[0] == 0.0);
  CHECK(std::isfinite(sigmoid(neg)[0]));
}

TEST_CASE("softmax uniform, frozen values, and shift invariance") {
  const TensorD zeros({3});
  const TensorD u = softmax(zeros, 0);
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const TensorD x({3}, {1.0, 2.0, 3.0});
  const TensorD s = softmax(x, 0);
  CHECK(s[0] == doctest::Approx(0.09003057317038046).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.24472847105479767).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(0.66524095577482186).epsilon(1e-12));

  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const std::int64_t n = 2 + rng.below(7);
    TensorD v = testutil::random_tensor({n}, rng, 3.0);
    const double c = rng.normal() * 10.0;
    TensorD shifted(v.shape());
    for (std::int64_t i = 0; i < n; ++i) shifted[i] = v[i] + c;
    const TensorD sv = softmax(v, 0);
    const TensorD ss = softmax(shifted, 0);
    CHECK(testutil::max_abs_diff(sv, ss) <= 1e-12);
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) sum += sv[i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax along a middle axis matches per-slice evaluation") {
  Rng rng(5);
  const TensorD x = testutil::random_tensor({2, 4, 3}, rng);
  const TensorD s = softmax(x, 1);
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t c = 0; c < 3; ++c) {
      std::vector<long double> col(4);
      for (std::int64_t j = 0; j < 4; ++j) col[static_cast<std::size_t>(j)] = x.at3(i, j, c);
      const auto want = oracle::softmax_ld(col);
      for (std::int64_t j = 0; j < 4; ++j)
        CHECK(s.at3(i, j, c) ==
              doctest::Approx(static_cast<double>(want[static_cast<std::size_t>(j)])).epsilon(1e-12));
    }
}

TEST_CASE("kernels are deterministic across repeated calls") {
  Rng rng(17);
  const TensorD a = testutil::random_tensor({6, 6}, rng);
  const TensorD b = testutil::random_tensor({6, 6}, rng);
  CHECK(matmul(a, b) == matmul(a, b));
  CHECK(softmax(a, 1) == softmax(a, 1));
  CHECK(sigmoid(a) == sigmoid(a));
}

TEST_CASE("softplus stable form") {
  CHECK(stable_softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(stable_softplus(800.0) == doctest::Approx(800.0).epsilon(1e-12));
  CHECK(stable_softplus(-800.0) == 0.0);
  CHECK(std::isfinite(stable_softplus(800.0)));
}

TEST_CASE("l2_normalize_rows produces unit rows and exact backward") {
  Rng rng(23);
  const TensorD x = testutil::random_tensor({4, 5}, rng);
  const auto norm = l2_normalize_rows(x);
  for (std::int64_t i = 0; i < 4; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < 5; ++j) sq += norm.values.at2(i, j) * norm.values.at2(i, j);
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }

  const TensorD dy = testutil::random_tensor({4, 5}, rng);
  const TensorD dx = l2_normalize_rows_backward(norm, dy);
  auto loss = [&](const std::vector<double>& flat) {
    TensorD probe({4, 5}, flat);
    const auto n = l2_normalize_rows(probe);
    double acc = 0.0;
    for (std::int64_t i = 0; i < n.values.numel(); ++i) acc += n.values[i] * dy[i];
    return acc;
  };
  std::vector<double> flat(x.data(), x.data() + x.numel());
  const auto fd = oracle::central_diff(loss, flat);
  for (std::int64_t i = 0; i < dx.numel(); ++i)
    CHECK(dx[i] == doctest::Approx(fd[static_cast<std::size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(TensorD({2, 0}), ShapeError);
  CHECK_THROWS_AS(TensorD({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(TensorD({4}).reshaped({3}), ShapeError);
  CHECK_THROWS_AS(softmax(TensorD({2, 2}), 2), ShapeError);
}
