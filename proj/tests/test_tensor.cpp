#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "gazemoe/gradcheck.hpp"
#include "gazemoe/tensor.hpp"
#include "test_util.hpp"

namespace gazemoe {
namespace {

using testing::random_tensor;
using testing::values;

TEST(Tensor, FactoriesCheckSize) {
  EXPECT_EQ(Tensor::zeros({2, 3}).size(), 6u);
  EXPECT_EQ(Tensor::full({2}, 1.5).at(1), 1.5);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor::zeros({2}).item(), DimensionError);
}

TEST(Matmul, IdentityAndZero) {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor a = Tensor::from({2, 3}, {1, -2, 3, 4, 5, -6});
  EXPECT_EQ(values(matmul(eye, a)), values(a));
  const Tensor z = Tensor::zeros({3, 4});
  const Tensor az = matmul(a, z);
  for (double v : az.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, HandEvaluated) {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({2, 1}, {5, 6});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{17, 39}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientsOfBothOperands) {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  const Tensor b = Tensor::from({2, 1}, {5, 6}, true);
  sum(matmul(a, b)).backward();
  // d/dA sum(AB) = 1·Bᵀ, d/dB = Aᵀ·1
  EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{5, 6, 5, 6}));
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{4, 6}));
}

TEST(Softmax, Uniform) {
  const Tensor s = softmax(Tensor::zeros({1, 4}), 1);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, LogInputsGiveRatios) {
  const Tensor s = softmax(Tensor::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 1);
  EXPECT_NEAR(s.at(0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.at(1), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.at(2), 3.0 / 6.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  const Tensor x = Tensor::from({1, 3}, {0.3, -1.2, 2.5});
  const Tensor a = softmax(x, 1);
  const Tensor b = softmax(add_scalar(x, 100.0), 1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-15);
}

TEST(Softmax, StableForLargeLogits) {
  const Tensor s = softmax(Tensor::from({1, 2}, {1000.0, 1000.0}), 1);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
}

TEST(Softmax, NonFiniteInputIsNumericError) {
  EXPECT_THROW(softmax(Tensor::from({1, 2}, {0.0, NAN}), 1), NumericError);
  EXPECT_THROW(softmax(Tensor::from({1, 2}, {0.0, INFINITY}), 1), NumericError);
  EXPECT_THROW(softmax(Tensor::zeros({1, 2}), 2), DimensionError);
}

TEST(Softmax, PropertySumsToOneInOpenInterval) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t m = 1 + rng.uniform_int(5), n = 1 + rng.uniform_int(7);
    const Tensor x = random_tensor(rng, {m, n}, -30.0, 30.0, false);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const Tensor s = softmax(x, axis);
      const std::size_t outer = axis == 1 ? m : n, inner = axis == 1 ? n : m;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = axis == 1 ? s.at(o, i) : s.at(i, o);
          EXPECT_GT(v, 0.0);
          EXPECT_LE(v, 1.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Gelu, Examples) {
  const Tensor g = gelu(Tensor::from({3}, {0.0, 1.0, 30.0}));
  EXPECT_EQ(g.at(0), 0.0);
  // Φ(1) = ½(1 + erf(1/√2))
  EXPECT_NEAR(g.at(1), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(g.at(2), 30.0, 1e-12);
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {3, 4});
  EXPECT_EQ(values(dropout(x, 0.1, false, rng)), values(x));
  EXPECT_EQ(values(dropout(x, 0.0, true, rng)), values(x));
}

TEST(Dropout, InvertedScaling) {
  Rng rng(5);
  const Tensor x = Tensor::full({1, 20000}, 1.0);
  const Tensor y = dropout(x, 0.25, true, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.25, 0.02);
}

TEST(Dropout, RateOutOfRangeIsConfigError) {
  Rng rng(0);
  const Tensor x = Tensor::zeros({2});
  EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ConfigError);
}

TEST(LayerNorm, ConstantRowMapsToBeta) {
  const Tensor x = Tensor::full({2, 5}, 3.7);
  const Tensor gamma = Tensor::full({5}, 2.0);
  const Tensor beta = Tensor::from({5}, {0.1, 0.2, 0.3, 0.4, 0.5});
  const Tensor y = layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(y.at(i, j), beta.at(j));
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {3, 16}, -4.0, 9.0, false);
  const Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.at(i, j);
    mu /= 16.0;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var / 16.0, 1.0, 1e-12);
  }
}

TEST(Elementwise, DomainErrors) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), NumericError);
  EXPECT_THROW(reciprocal(Tensor::from({1}, {0.0})), NumericError);
  EXPECT_THROW(pow_scalar(Tensor::from({1}, {-1.0}), 2.0), NumericError);
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(add_row(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
  EXPECT_THROW(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  EXPECT_THROW(slice_cols(Tensor::zeros({2, 3}), 2, 2), DimensionError);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(gather_rows(Tensor::zeros({2, 3}), bad), DimensionError);
}

TEST(Indexing, ScatterAddsDuplicates) {
  const Tensor src = Tensor::from({2, 2}, {1, 2, 3, 4});
  const std::vector<std::size_t> idx{1, 1};
  const Tensor out = scatter_rows(src, idx, 3);
  EXPECT_EQ(values(out), (std::vector<double>{0, 0, 4, 6, 0, 0}));
}

TEST(Autograd, SquareAtThree) {
  const Tensor x = Tensor::scalar(3.0, true);
  const auto report = finite_difference_check([&] { return mul(x, x); }, {{"x", x}});
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_LT(report.max_relative_error, 1e-9);
}

TEST(Autograd, LinearFunctionIsExactUnderFiniteDifferences) {
  const Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  const Tensor w = Tensor::from({3}, {2.0, -3.0, 0.25});
  const auto report = finite_difference_check([&] { return sum(mul(x, w)); }, {{"x", x}}, {.epsilon = 0.5});
  EXPECT_LT(report.max_relative_error, 1e-12);
}

TEST(Autograd, ReportMaxIsMaxOfPerParameter) {
  Rng rng(4);
  const Tensor a = random_tensor(rng, {2, 3}), b = random_tensor(rng, {3, 2});
  const auto report = finite_difference_check([&] { return sum(sigmoid(matmul(a, b))); }, {{"a", a}, {"b", b}});
  double mx = 0.0;
  for (const auto& [name, err] : report.per_parameter_errors) mx = std::max(mx, err);
  EXPECT_EQ(report.max_relative_error, mx);
  EXPECT_EQ(report.per_parameter_errors.size(), 2u);
  EXPECT_EQ(report.epsilon, 1e-5);
}

TEST(Autograd, NonFiniteLossIsNumericError) {
  const Tensor x = Tensor::scalar(1.0, true);
  EXPECT_THROW(finite_difference_check([&] { return scale(x, INFINITY); }, {{"x", x}}), NumericError);
  EXPECT_THROW(finite_difference_check([&] { return x; }, {{"x", x}}, {.epsilon = 0.0}), ConfigError);
}

TEST(Autograd, LeafGradientsAccumulateUntilZeroed) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 3.0)).backward();
  EXPECT_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  sum(x).backward();
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Autograd, DiamondGraphVisitsEachNodeOnce) {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  const Tensor a = scale(x, 2.0);
  const Tensor b = mul(a, a);           // a used twice
  const Tensor c = add(b, a);           // and again
  const Tensor loss = sum(add(c, b));   // b used twice
  const auto stats = loss.backward();
  // x, a, b, c, add, sum
  EXPECT_EQ(stats.nodes_visited, 6u);
  // loss = Σ 2(2x)² + 2x → dloss/dx = 16x + 2
  EXPECT_DOUBLE_EQ(x.grad()[0], 18.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 34.0);
}

TEST(Autograd, NoGradGuardRecordsNoHistory) {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(sum(x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(sum(x).requires_grad());
}

TEST(Autograd, DetachCutsHistory) {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  const Tensor d = scale(x, 2.0).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(values(d), (std::vector<double>{2.0, 4.0}));
}

TEST(Autograd, PropertyAccumulationIsLinear) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, {3, 4});
    const Tensor w = random_tensor(rng, {4, 2}, -1, 1, false);
    auto f1 = [&] { return sum(gelu(matmul(x, w))); };
    auto f2 = [&] { return mean(mul(sigmoid(x), x)); };

    add(f1(), f2()).backward();
    const std::vector<double> joint(x.grad().begin(), x.grad().end());
    x.zero_grad();
    f1().backward();
    f2().backward();
    for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(x.grad()[i], joint[i], 1e-14);
  }
}

// ---- finite-difference property over every differentiable op -------------

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
};

// Values kept at least `margin` away from the given kinks.
Tensor away_from(Rng& rng, Shape shape, double lo, double hi, std::vector<double> kinks, double margin) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    bool ok = false;
    while (!ok) {
      x = rng.uniform(lo, hi);
      ok = std::all_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) > margin; });
    }
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::vector<OpCase> op_cases() {
  using V = std::vector<Tensor>;
  auto one = [](Shape s, double lo = -2.0, double hi = 2.0) {
    return [=](Rng& r) { return V{random_tensor(r, s, lo, hi)}; };
  };
  static const std::vector<std::size_t> row_idx{2, 0, 2};
  static const std::vector<std::size_t> elem_idx{0, 5, 11, 5};
  return {
      {"matmul", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
       [](const V& v) { return matmul(v[0], v[1]); }},
      {"transpose", one({3, 4}), [](const V& v) { return transpose(v[0]); }},
      {"reshape", one({3, 4}), [](const V& v) { return reshape(v[0], {2, 6}); }},
      {"add", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
       [](const V& v) { return add(v[0], v[1]); }},
      {"sub", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
       [](const V& v) { return sub(v[0], v[1]); }},
      {"mul", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
       [](const V& v) { return mul(v[0], v[1]); }},
      {"scale", one({3, 4}), [](const V& v) { return scale(v[0], -1.7); }},
      {"add_scalar", one({3, 4}), [](const V& v) { return add_scalar(v[0], 0.3); }},
      {"one_minus", one({3, 4}), [](const V& v) { return one_minus(v[0]); }},
      {"pow_scalar", one({3, 4}, 0.2, 2.0), [](const V& v) { return pow_scalar(v[0], 2.5); }},
      {"clamp", [](Rng& r) { return V{away_from(r, {3, 4}, -1.0, 1.0, {-0.5, 0.5}, 1e-3)}; },
       [](const V& v) { return clamp(v[0], -0.5, 0.5); }},
      {"log", one({3, 4}, 0.2, 3.0), [](const V& v) { return log(v[0]); }},
      {"reciprocal", one({3, 4}, 0.3, 3.0), [](const V& v) { return reciprocal(v[0]); }},
      {"sigmoid", one({3, 4}, -4.0, 4.0), [](const V& v) { return sigmoid(v[0]); }},
      {"gelu", one({3, 4}, -4.0, 4.0), [](const V& v) { return gelu(v[0]); }},
      {"add_row", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
       [](const V& v) { return add_row(v[0], v[1]); }},
      {"mul_row", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
       [](const V& v) { return mul_row(v[0], v[1]); }},
      {"scale_rows", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {3})}; },
       [](const V& v) { return scale_rows(v[0], v[1]); }},
      {"sum", one({3, 4}), [](const V& v) { return sum(v[0]); }},
      {"mean", one({3, 4}), [](const V& v) { return mean(v[0]); }},
      {"mean_rows", one({3, 4}), [](const V& v) { return mean_rows(v[0]); }},
      {"softmax_cols", one({3, 4}, -3.0, 3.0), [](const V& v) { return softmax(v[0], 1); }},
      {"softmax_rows", one({3, 4}, -3.0, 3.0), [](const V& v) { return softmax(v[0], 0); }},
      {"layer_norm",
       [](Rng& r) { return V{random_tensor(r, {3, 5}), random_tensor(r, {5}), random_tensor(r, {5})}; },
       [](const V& v) { return layer_norm(v[0], v[1], v[2]); }},
      {"dropout", one({3, 4}),
       [](const V& v) {
         Rng local(99);
         return dropout(v[0], 0.3, true, local);
       }},
      {"slice_cols", one({3, 5}), [](const V& v) { return slice_cols(v[0], 1, 3); }},
      {"concat_cols", [](Rng& r) { return V{random_tensor(r, {3, 2}), random_tensor(r, {3, 3})}; },
       [](const V& v) { return concat_cols({v[0], v[1]}); }},
      {"gather_rows", one({3, 4}), [](const V& v) { return gather_rows(v[0], row_idx); }},
      {"scatter_rows", one({3, 4}), [](const V& v) { return scatter_rows(v[0], row_idx, 4); }},
      {"gather_elements", one({3, 4}), [](const V& v) { return gather_elements(v[0], elem_idx); }},
  };
}

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferencesOverSeeds) {
  const OpCase& op = GetParam();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, fnv1a64(op.name)));
    const std::vector<Tensor> in = op.inputs(rng);
    const Tensor probe = op.fn(in);
    // A random weighting keeps constant-sum outputs (softmax) from hiding errors.
    const Tensor w = random_tensor(rng, probe.shape(), -1.0, 1.0, false);
    NamedTensors named;
    for (std::size_t i = 0; i < in.size(); ++i) named.emplace_back("in" + std::to_string(i), in[i]);
    const auto report = finite_difference_check([&] { return sum(mul(op.fn(in), w)); }, named);
    ASSERT_LT(report.max_relative_error, 1e-4) << op.name << " seed " << seed << " worst "
                                               << report.worst_parameter;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(op_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace gazemoe
