#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "snmt/tensor.hpp"

using namespace snmt;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndValues) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}), ShapeError);
  EXPECT_THROW(Tensor::from_rows({{1, 2}, {3}}), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4).item(), 4.0);
  EXPECT_THROW((void)t.item(), ShapeError);
}

TEST(Tensor, MatmulIdentity) {
  std::mt19937_64 rng(1);
  Tape tape;
  const Tensor a = random_tensor(rng, 3, 5);
  Var out = matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Tensor, SoftmaxOfEqualLogitsIsUniform) {
  Tape tape;
  Var s = softmax_rows(tape.constant(Tensor::from_rows({{0, 0}})));
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.value()(0, 1), 0.5);
}

TEST(Tensor, TanhOfZero) {
  Tape tape;
  EXPECT_EQ(tanh(tape.constant(Tensor::scalar(0))).value().item(), 0.0);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    Var s = softmax_rows(tape.constant(random_tensor(rng, 4, 9, 30.0)));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 9; ++c) {
        const double p = s.value()(r, c);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Tensor, SoftmaxStrictlyInsideUnitIntervalForModerateLogits) {
  std::mt19937_64 rng(3);
  Tape tape;
  Var s = softmax_rows(tape.constant(random_tensor(rng, 3, 6, 5.0)));
  for (double p : s.value().values()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Tensor, LogSoftmaxMatchesLogOfSoftmax) {
  std::mt19937_64 rng(4);
  Tape tape;
  Var x = tape.constant(random_tensor(rng, 3, 7, 4.0));
  const Tensor& ls = log_softmax_rows(x).value();
  const Tensor& s = softmax_rows(x).value();
  for (std::size_t i = 0; i < ls.size(); ++i) EXPECT_NEAR(ls.values()[i], std::log(s.values()[i]), 1e-12);
}

TEST(Tensor, ShapeErrorsNameThePrimitiveAndShapes) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 3));
  Var b = tape.constant(Tensor::matrix(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find(a.value().shape_string()), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, tape.constant(Tensor::matrix(3, 2))), ShapeError);
  EXPECT_THROW(mul(a, tape.constant(Tensor::matrix(1, 3))), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 5), ShapeError);
}

TEST(Tensor, BiasRowBroadcastInAdd) {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::from_rows({{10, 20}}));
  EXPECT_EQ(add(x, b).value(), Tensor::from_rows({{11, 22}, {13, 24}}));
}

TEST(Backward, SquareSum) {
  Tape tape;
  Var x = tape.parameter(Tensor::from_rows({{1, 2}}));
  auto g = backward(tape, sum(mul(x, x)));
  EXPECT_EQ(g.at(x.id), Tensor::from_rows({{2, 4}}));
}

TEST(Backward, SigmoidAtZero) {
  Tape tape;
  Var x = tape.parameter(Tensor::scalar(0));
  auto g = backward(tape, sigmoid(x));
  EXPECT_DOUBLE_EQ(g.at(x.id).item(), 0.25);
}

TEST(Backward, OnlyParameterLeavesGetGradients) {
  Tape tape;
  Var p = tape.parameter(Tensor::scalar(2));
  Var c = tape.constant(Tensor::scalar(3));
  auto g = backward(tape, mul(p, c));
  EXPECT_EQ(g.count(p.id), 1u);
  EXPECT_EQ(g.count(c.id), 0u);
  EXPECT_DOUBLE_EQ(g.at(p.id).item(), 3.0);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  Tape tape;
  Var used = tape.parameter(Tensor::scalar(2));
  Var unused = tape.parameter(Tensor::matrix(2, 2, 1.0));
  auto g = backward(tape, scale(used, 5.0));
  ASSERT_EQ(g.count(unused.id), 1u);
  EXPECT_EQ(g.at(unused.id), Tensor::matrix(2, 2, 0.0));
}

TEST(Backward, Errors) {
  Tape tape, other;
  Var v = tape.parameter(Tensor::matrix(1, 2, 1.0));
  EXPECT_THROW(backward(tape, v), ShapeError);
  Var s = other.parameter(Tensor::scalar(1));
  EXPECT_THROW(backward(tape, s), std::invalid_argument);
  EXPECT_THROW(tape.entry(1000), std::out_of_range);
}

TEST(Backward, GradientShapesMatchValues) {
  std::mt19937_64 rng(5);
  Tape tape;
  Var w = tape.parameter(random_tensor(rng, 4, 3));
  Var x = tape.parameter(random_tensor(rng, 2, 4));
  auto g = backward(tape, sum(tanh(matmul(x, w))));
  EXPECT_EQ(g.at(w.id).shape(), w.value().shape());
  EXPECT_EQ(g.at(x.id).shape(), x.value().shape());
}

TEST(Tape, ReplayReproducesValuesBitExactly) {
  std::mt19937_64 rng(6);
  Tape tape;
  Var a = tape.parameter(random_tensor(rng, 3, 4));
  Var b = tape.parameter(random_tensor(rng, 4, 2));
  Var h = tanh(matmul(a, b));
  Var l = sum(log_softmax_rows(h));
  (void)l;
  const auto first = tape.replay();
  const auto second = tape.replay();
  ASSERT_EQ(first.size(), tape.size());
  for (std::size_t i = 0; i < tape.size(); ++i) {
    EXPECT_EQ(first[i], tape.value(i)) << "node " << i;
    EXPECT_EQ(first[i], second[i]);
  }
}

TEST(Tape, EntriesAreTopologicallyOrdered) {
  std::mt19937_64 rng(7);
  Tape tape;
  Var a = tape.parameter(random_tensor(rng, 2, 2));
  Var b = sigmoid(matmul(a, a));
  sum(add(b, a));
  for (std::size_t i = 0; i < tape.size(); ++i)
    for (std::size_t in : tape.entry(i).inputs) EXPECT_LT(in, i);
}

TEST(Tensor, ConcatThenSliceIsIdentity) {
  std::mt19937_64 rng(8);
  for (std::size_t axis : {0u, 1u}) {
    Tape tape;
    const Tensor a = random_tensor(rng, 2, 3), b = random_tensor(rng, axis == 0 ? 4 : 2, axis == 0 ? 3 : 5);
    std::vector<Var> parts = {tape.constant(a), tape.constant(b)};
    Var c = concat(parts, axis);
    const std::size_t split = axis == 0 ? 2 : 3;
    const std::size_t total = axis == 0 ? 6 : 8;
    EXPECT_EQ(slice(c, axis, 0, split).value(), a);
    EXPECT_EQ(slice(c, axis, split, total).value(), b);
  }
}

TEST(Tensor, EmbeddingLookupAndPick) {
  Tape tape;
  Var table = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  std::vector<int> ids = {2, 0, 2};
  EXPECT_EQ(embedding_lookup(table, ids).value(), Tensor::from_rows({{5, 6}, {1, 2}, {5, 6}}));
  std::vector<int> idx = {1, -1, 0};
  EXPECT_EQ(pick(table, idx).value(), Tensor::from_rows({{2}, {0}, {5}}));
}

TEST(Tensor, BlockWeightedSum) {
  Tape tape;
  // m = 2 sentences, k = 2 positions, n = 1.
  Var weights = tape.constant(Tensor::from_rows({{0.25, 0.75}, {1.0, 0.0}}));
  Var blocks = tape.constant(Tensor::from_rows({{4}, {8}, {12}, {16}}));
  EXPECT_EQ(block_weighted_sum(weights, blocks).value(), Tensor::from_rows({{0.25 * 4 + 0.75 * 12}, {8}}));
}

TEST(CheckGradients, LinearFunctionIsExact) {
  std::mt19937_64 rng(9);
  const Tensor w = random_tensor(rng, 3, 4), c = random_tensor(rng, 3, 4);
  std::vector<Tensor> params = {w};
  auto f = [&](Tape& tape, std::span<const Var> v) { return sum(mul(v[0], tape.constant(c))); };
  EXPECT_LT(check_gradients(f, params).max_relative_error, 1e-10);
}

TEST(CheckGradients, SoftmaxCrossEntropy) {
  std::mt19937_64 rng(10);
  const Tensor logits = random_tensor(rng, 5, 7, 2.0);
  std::vector<int> gold = {0, 3, 6, 2, 2};
  std::vector<Tensor> params = {logits};
  auto f = [&](Tape&, std::span<const Var> v) { return scale(sum(pick(log_softmax_rows(v[0]), gold)), -1.0); };
  const auto r = check_gradients(f, params);
  EXPECT_EQ(r.elements_checked, 35u);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(CheckGradients, RejectsBadStepAndNonFiniteObjective) {
  std::vector<Tensor> params = {Tensor::scalar(1)};
  auto f = [](Tape&, std::span<const Var> v) { return v[0]; };
  EXPECT_THROW(check_gradients(f, params, 0.0), std::invalid_argument);
  EXPECT_THROW(check_gradients(f, params, 1e-2), std::invalid_argument);
  auto bad = [](Tape& tape, std::span<const Var>) {
    return tape.constant(Tensor::scalar(std::numeric_limits<double>::infinity()));
  };
  EXPECT_THROW(check_gradients(bad, params), std::domain_error);
}

TEST(CheckGradients, ThreadedMatchesSerial) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor(rng, 3, 3), b = random_tensor(rng, 3, 2);
  std::vector<Tensor> params = {a, b};
  auto f = [](Tape&, std::span<const Var> v) { return sum(tanh(matmul(v[0], v[1]))); };
  const auto serial = check_gradients(f, params, 1e-5, 1);
  const auto threaded = check_gradients(f, params, 1e-5, 3);
  EXPECT_EQ(serial.elements_checked, threaded.elements_checked);
  EXPECT_DOUBLE_EQ(serial.max_relative_error, threaded.max_relative_error);
}

// Random projections of every primitive against central differences.
TEST(CheckGradients, EveryPrimitiveOnRandomShapes) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  constexpr int kKinds = 17;
  std::uniform_int_distribution<int> kind(0, kKinds - 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = trial < kKinds ? trial : kind(rng);
    const std::size_t m = dim(rng), n = dim(rng), p = dim(rng);
    std::vector<Tensor> params;
    std::function<Var(std::span<const Var>)> op;
    auto ids = [&](std::size_t count, int vocab) {
      std::uniform_int_distribution<int> id(0, vocab - 1);
      std::vector<int> out(count);
      for (int& v : out) v = id(rng);
      return out;
    };
    switch (k) {
      case 0:
        params = {random_tensor(rng, m, n), random_tensor(rng, n, p)};
        op = [](auto v) { return matmul(v[0], v[1]); };
        break;
      case 1:
        params = {random_tensor(rng, m, n), random_tensor(rng, m, n)};
        op = [](auto v) { return add(v[0], v[1]); };
        break;
      case 2:
        params = {random_tensor(rng, m, n), random_tensor(rng, 1, n)};
        op = [](auto v) { return add(v[0], v[1]); };
        break;
      case 3:
        params = {random_tensor(rng, m, n), random_tensor(rng, m, n)};
        op = [](auto v) { return sub(v[0], v[1]); };
        break;
      case 4:
        params = {random_tensor(rng, m, n), random_tensor(rng, m, n)};
        op = [](auto v) { return mul(v[0], v[1]); };
        break;
      case 5:
        params = {random_tensor(rng, m, n)};
        op = [](auto v) { return scale(v[0], -1.7); };
        break;
      case 6:
        params = {random_tensor(rng, m, n), random_tensor(rng, m, p)};
        op = [](auto v) { return concat(std::vector<Var>{v[0], v[1]}, 1); };
        break;
      case 7:
        params = {random_tensor(rng, m, n), random_tensor(rng, p, n)};
        op = [](auto v) { return concat(std::vector<Var>{v[0], v[1]}, 0); };
        break;
      case 8: {
        params = {random_tensor(rng, m, n + 2)};
        op = [n](auto v) { return slice(v[0], 1, 1, n + 1); };
        break;
      }
      case 9:
        params = {random_tensor(rng, m, n, 3.0)};
        op = [](auto v) { return sigmoid(v[0]); };
        break;
      case 10:
        params = {random_tensor(rng, m, n, 3.0)};
        op = [](auto v) { return tanh(v[0]); };
        break;
      case 11:
        params = {random_tensor(rng, m, n + 1, 3.0)};
        op = [](auto v) { return softmax_rows(v[0]); };
        break;
      case 12:
        params = {random_tensor(rng, m, n + 1, 3.0)};
        op = [](auto v) { return log_softmax_rows(v[0]); };
        break;
      case 13: {
        params = {random_tensor(rng, 5, n)};
        const auto chosen = ids(m + 1, 5);
        op = [chosen](auto v) { return embedding_lookup(v[0], chosen); };
        break;
      }
      case 14: {
        params = {random_tensor(rng, m, n + 1)};
        auto chosen = ids(m, static_cast<int>(n + 1));
        chosen[0] = -1;
        op = [chosen](auto v) { return pick(v[0], chosen); };
        break;
      }
      case 15:
        params = {random_tensor(rng, m, n)};
        op = [m, n](auto v) { return reshape(transpose(v[0]), m * n, 1); };
        break;
      case 16:
        params = {random_tensor(rng, m, n), random_tensor(rng, n * m, p), random_tensor(rng, m, p)};
        op = [](auto v) { return add_tiled(block_weighted_sum(v[0], v[1]), v[2]); };
        break;
    }
    Tape probe;
    std::vector<Var> probe_vars;
    for (const auto& t : params) probe_vars.push_back(probe.parameter(t));
    const Tensor& shape = op(probe_vars).value();
    const Tensor projection = random_tensor(rng, shape.rows(), shape.cols());
    auto f = [&](Tape& tape, std::span<const Var> v) { return sum(mul(op(v), tape.constant(projection))); };
    const auto r = check_gradients(f, params);
    EXPECT_LT(r.max_relative_error, 1e-4) << "primitive case " << k << " trial " << trial;
    worst = std::max(worst, r.max_relative_error);
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}
