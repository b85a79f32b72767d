#include <gtest/gtest.h>

#include <cmath>

#include "serda/autodiff.hpp"
#include "serda/error.hpp"
#include "support/gradcheck.hpp"

using namespace serda;
using ad::Var;

namespace {

void expect_near(const Tensor& t, std::vector<double> want, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "element " << i;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.shape(), (Shape{2, 3}));
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::scalar(3.5).item(), 3.5);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(m.reshaped({4}), DimensionError);
}

TEST(Matmul, Examples) {
  auto id = Var::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto b = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
  expect_near(ad::matmul(id, b).value(), {1, 2, 3, 4});

  auto r = ad::matmul(Var::constant(Tensor::matrix({{1, 2}})), Var::constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r.value()[0], 11.0);

  std::mt19937_64 gen(3);
  auto z = ad::matmul(Var::constant(Tensor({2, 3}, 0.0)), Var::constant(oracle::random_tensor(gen, {3, 4})));
  EXPECT_EQ(z.value(), Tensor({2, 4}, 0.0));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    ad::matmul(Var::constant(Tensor({2, 3})), Var::constant(Tensor({2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, Examples) {
  expect_near(ad::softmax(Var::constant(Tensor::vector({0, 0}))).value(), {0.5, 0.5});
  expect_near(ad::softmax(Var::constant(Tensor::vector({1000, 1000, 1000}))).value(), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  expect_near(ad::softmax(Var::constant(Tensor::vector({std::log(1.0), std::log(3.0)}))).value(), {0.25, 0.75});
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 gen(11);
  const Tensor x = oracle::random_tensor(gen, {6, 7}, -50, 50);
  const Tensor p = ad::softmax(Var::constant(x)).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Elementwise, Examples) {
  expect_near(ad::relu(Var::constant(Tensor::vector({-1, 0, 2}))).value(), {0, 0, 2});
  expect_near(ad::l2_normalize(Var::constant(Tensor::vector({3, 4}))).value(), {0.6, 0.8});
  EXPECT_EQ(ad::mean(Var::constant(Tensor::vector({1, 2, 3}))).item(), 2.0);
  EXPECT_THROW(ad::log(Var::constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(ad::log(Var::constant(Tensor::vector({-1.0}))), DomainError);
  EXPECT_THROW(ad::l2_normalize(Var::constant(Tensor::matrix({{1, 0}, {0, 0}}))), DomainError);
}

TEST(Backward, Examples) {
  auto x = Var::leaf(Tensor({2, 3}, 0.7));
  auto g = ad::backward(ad::sum(x));
  EXPECT_EQ(g.at(x), Tensor({2, 3}, 1.0));

  auto y = Var::leaf(Tensor::vector({1, 2}));
  auto gy = ad::backward(ad::sum(ad::mul(y, y)));
  expect_near(gy.at(y), {2, 4});

  auto unrelated = Var::leaf(Tensor::vector({1}));
  auto c = Var::constant(Tensor::scalar(5.0));
  auto gc = ad::backward(c);
  EXPECT_EQ(gc.size(), 0u);
  EXPECT_FALSE(gc.contains(unrelated));
}

TEST(Backward, NonScalarRootIsContractError) {
  auto x = Var::leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(ad::backward(x), ContractError);
}

TEST(Backward, SharedLeafAccumulates) {
  // f(x) = sum(x*a) + sum(x*b) through one leaf must match the same function
  // written on two separate copies, summed.
  std::mt19937_64 gen(5);
  const Tensor xv = oracle::random_tensor(gen, {4});
  const auto a = Var::constant(oracle::random_tensor(gen, {4}));
  const auto b = Var::constant(oracle::random_tensor(gen, {4}));
  auto x = Var::leaf(xv);
  const auto g = ad::backward(ad::add(ad::sum(ad::mul(x, a)), ad::sum(ad::exp(ad::mul(x, b)))));

  auto x1 = Var::leaf(xv), x2 = Var::leaf(xv);
  const auto g2 = ad::backward(ad::add(ad::sum(ad::mul(x1, a)), ad::sum(ad::exp(ad::mul(x2, b)))));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g.at(x)[i], g2.at(x1)[i] + g2.at(x2)[i], 1e-14);
}

TEST(Backward, Deterministic) {
  for (const auto& gc : oracle::grad_cases()) {
    std::mt19937_64 g1(9), g2(9);
    const auto in1 = gc.inputs(g1), in2 = gc.inputs(g2);
    auto run = [&](const std::vector<Tensor>& in) {
      std::vector<Var> leaves;
      for (const auto& t : in) leaves.push_back(Var::leaf(t));
      const auto root = gc.f(leaves);
      const auto grads = ad::backward(root);
      std::vector<Tensor> out{root.value()};
      for (const auto& l : leaves) out.push_back(grads.contains(l) ? grads.at(l) : Tensor());
      return out;
    };
    EXPECT_EQ(run(in1), run(in2)) << gc.name;
  }
}

TEST(Gradcheck, EveryOpAndLoss) {
  for (const auto& gc : oracle::grad_cases()) {
    std::mt19937_64 gen(std::hash<std::string>{}(gc.name));
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) worst = std::max(worst, oracle::gradcheck(gc.f, gc.inputs(gen)));
    EXPECT_LT(worst, 1e-5) << gc.name;
  }
}

TEST(Frames, ShapeAndContent) {
  // [5 x 1] kernel 3 stride 2 -> rows [0,1,2], [2,3,4]
  auto f = ad::frames(Var::constant(Tensor({5, 1}, std::vector<double>{0, 1, 2, 3, 4})), 3, 2);
  EXPECT_EQ(f.shape(), (Shape{2, 3}));
  expect_near(f.value(), {0, 1, 2, 2, 3, 4});
}

TEST(Pick, BadIndexIsDataError) {
  const int idx[] = {0, 3};
  EXPECT_THROW(ad::pick(Var::constant(Tensor({2, 3})), idx), DataError);
}
