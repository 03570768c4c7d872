#include "kinject/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace kinject::ad {
namespace {

using kinject::testing::fd_gradient;
using kinject::testing::random_matrix;
using kinject::testing::relative_error;

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Eigen::VectorXd as_vector(const Matrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

TEST(ForwardEval, ArithmeticAndActivations) {
  Tape tape;
  Var x = tape.variable(scalar(0.0), "x");
  Var y = tape.variable(scalar(0.0), "y");
  Var product = x * y;
  EXPECT_EQ(forward_eval(product, {{"x", scalar(2)}, {"y", scalar(3)}})(0, 0), 6.0);

  Var t = ad::tanh(x);
  EXPECT_EQ(forward_eval(t, {{"x", scalar(0)}})(0, 0), 0.0);
  Var s = ad::sigmoid(x);
  EXPECT_EQ(forward_eval(s, {{"x", scalar(0)}})(0, 0), 0.5);
}

TEST(ForwardEval, UnboundLeafIsConfigurationError) {
  Tape tape;
  Var x = tape.variable(scalar(1.0), "x");
  Var y = tape.variable(scalar(1.0), "y");
  Var z = x + y;
  EXPECT_THROW(forward_eval(z, {{"x", scalar(1)}}), ConfigurationError);
}

TEST(ForwardEval, DoesNotMutateTapeAndIsDeterministic) {
  Tape tape;
  Var x = tape.variable(scalar(0.3), "x");
  Var z = ad::tanh(x * x) + ad::sigmoid(x);
  const double before = z.scalar();
  Bindings b{{"x", scalar(1.7)}};
  const Matrix first = forward_eval(z, b);
  const Matrix second = forward_eval(z, b);
  EXPECT_EQ(first(0, 0), second(0, 0));
  EXPECT_EQ(z.scalar(), before);
  EXPECT_EQ(b.at("x")(0, 0), 1.7);
}

TEST(ForwardEval, NanReportsOffendingNode) {
  Tape tape;
  Var x = tape.variable(scalar(1.0), "x");
  Var z = ad::log(x);
  try {
    forward_eval(z, {{"x", scalar(-1.0)}});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.node(), z.id());
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
  EXPECT_THROW(ad::log(tape.constant(-1.0)), NumericError);
}

TEST(Grad, HandExamples) {
  Tape tape;
  Var x = tape.variable(scalar(3.0));
  Var wrt[] = {x};
  EXPECT_DOUBLE_EQ(grad(square(x), wrt)[0](0, 0), 6.0);

  Var z = tape.variable(scalar(0.0));
  Var wrt_z[] = {z};
  EXPECT_DOUBLE_EQ(grad(ad::sigmoid(z), wrt_z)[0](0, 0), 0.25);
}

TEST(Grad, NonScalarRootIsContractError) {
  Tape tape;
  Var x = tape.variable(Matrix::Ones(2, 2));
  Var wrt[] = {x};
  EXPECT_THROW(tape.grad(x * x, wrt), ContractError);
}

TEST(Grad, UnreachableLeafGetsZero) {
  Tape tape;
  Var x = tape.variable(scalar(2.0));
  Var unused = tape.variable(Matrix::Ones(2, 3));
  Var wrt[] = {x, unused};
  auto g = grad(square(x), wrt);
  EXPECT_EQ(g[1], Matrix::Zero(2, 3));
}

TEST(Grad, RepeatedSweepsAgree) {
  Tape tape;
  Rng rng(7);
  Var a = tape.variable(random_matrix(3, 4, rng));
  Var b = tape.variable(random_matrix(4, 2, rng));
  Var root = sum(ad::tanh(matmul(a, b)));
  const Matrix value_before = root.value();
  Var wrt[] = {a, b};
  auto g1 = grad(root, wrt);
  auto g2 = grad(root, wrt);
  EXPECT_EQ(g1[0], g2[0]);
  EXPECT_EQ(g1[1], g2[1]);
  EXPECT_EQ(root.value(), value_before);
}

// Every primitive against central differences at 100 random points.
struct PrimitiveCase {
  std::string name;
  // Builds a scalar from one 3x2 input (and a fixed 2x3 partner for matmul).
  std::function<Var(const Var&, Tape&)> build;
  double lo, hi;
};

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  Rng rng(derive_seed(11, {std::hash<std::string>{}(c.name)}));
  // Weights keep the scalarization from hiding errors in single entries.
  const Matrix weights = random_matrix(3, 2, rng, 0.5, 1.5);
  auto build_root = [&](const Var& x, Tape& t) {
    Var y = c.build(x, t);
    if (y.rows() == 3 && y.cols() == 2) return sum(y * t.constant(weights));
    return sum(y);
  };
  for (int trial = 0; trial < 100; ++trial) {
    Matrix x0 = random_matrix(3, 2, rng, c.lo, c.hi);
    if (c.name == "relu" || c.name == "max0" || c.name == "clamp") {
      // Stay away from kinks.
      for (Eigen::Index i = 0; i < x0.size(); ++i)
        if (std::abs(x0.data()[i]) < 1e-3) x0.data()[i] = 0.5;
    }
    Tape tape;
    Var x = tape.variable(x0);
    Var wrt[] = {x};
    const Eigen::VectorXd analytic = as_vector(grad(build_root(x, tape), wrt)[0]);
    auto f = [&](const Eigen::VectorXd& v) {
      Tape t;
      Matrix m = Eigen::Map<const Matrix>(v.data(), 3, 2);
      return build_root(t.constant(m), t).scalar();
    };
    const Eigen::VectorXd numeric = fd_gradient(f, as_vector(x0));
    EXPECT_LT(relative_error(analytic, numeric), 1e-6) << c.name << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Primitives, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"add", [](const Var& x, Tape&) { return x + square(x); }, -1, 1},
        PrimitiveCase{"sub", [](const Var& x, Tape&) { return square(x) - x; }, -1, 1},
        PrimitiveCase{"mul", [](const Var& x, Tape&) { return x * ad::tanh(x); }, -1, 1},
        PrimitiveCase{"matmul",
                      [](const Var& x, Tape& t) {
                        Matrix b(2, 3);
                        b << 0.3, -0.7, 1.1, 0.5, 0.2, -0.4;
                        return matmul(x, t.constant(b));
                      },
                      -1, 1},
        PrimitiveCase{"transpose", [](const Var& x, Tape&) { return square(transpose(x)); }, -1, 1},
        PrimitiveCase{"tanh", [](const Var& x, Tape&) { return ad::tanh(x); }, -1, 1},
        PrimitiveCase{"relu", [](const Var& x, Tape&) { return relu(x) * x; }, -1, 1},
        PrimitiveCase{"max0", [](const Var& x, Tape&) { return square(max0(x)); }, -1, 1},
        PrimitiveCase{"sigmoid", [](const Var& x, Tape&) { return ad::sigmoid(x); }, -1, 1},
        PrimitiveCase{"log", [](const Var& x, Tape&) { return ad::log(x); }, 0.5, 1.5},
        PrimitiveCase{"exp", [](const Var& x, Tape&) { return ad::exp(x); }, -1, 1},
        PrimitiveCase{"square", [](const Var& x, Tape&) { return square(x); }, -1, 1},
        PrimitiveCase{"reciprocal", [](const Var& x, Tape&) { return reciprocal(x); }, 0.5, 1.5},
        PrimitiveCase{"mean", [](const Var& x, Tape&) { return mean(square(x)); }, -1, 1},
        PrimitiveCase{"sum", [](const Var& x, Tape&) { return sum(x) * sum(x); }, -1, 1},
        PrimitiveCase{"colsum", [](const Var& x, Tape&) { return square(colsum(x)); }, -1, 1},
        PrimitiveCase{"add_row",
                      [](const Var& x, Tape&) { return ad::tanh(add_row(x, colsum(x))); }, -1,
                      1},
        PrimitiveCase{"broadcast",
                      [](const Var& x, Tape&) { return x * broadcast(sum(x), 3, 2); }, -1, 1},
        PrimitiveCase{"clamp", [](const Var& x, Tape&) { return square(clamp(x, -0.5, 0.5)); }, -1,
                      1}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return info.param.name; });

TEST(GradOfGrad, HandAlgebraQuadratic) {
  // F = w x^2, scalar = (dF/dx)^2 = 4 w^2 x^2, d/dw = 8 w x^2 = 8.
  Tape tape;
  Var w = tape.variable(scalar(1.0), "w");
  Var x = tape.variable(scalar(1.0), "x");
  Var wrt_w[] = {w};
  auto g = grad_of_grad(
      tape,
      [&](Tape& t) {
        Var wrt_x[] = {x};
        Var dfdx = t.grad(w * square(x), wrt_x)[0];
        return square(dfdx);
      },
      wrt_w);
  EXPECT_DOUBLE_EQ(g[0](0, 0), 8.0);
}

TEST(GradOfGrad, TanhProductRule) {
  // F = tanh(w x), dF/dx = w sech^2(w x); d/dw at w=0, x=1 is 1.
  Tape tape;
  Var w = tape.variable(scalar(0.0), "w");
  Var x = tape.variable(scalar(1.0), "x");
  Var wrt_w[] = {w};
  auto g = grad_of_grad(
      tape,
      [&](Tape& t) {
        Var wrt_x[] = {x};
        return t.grad(ad::tanh(w * x), wrt_x)[0];
      },
      wrt_w);
  EXPECT_DOUBLE_EQ(g[0](0, 0), 1.0);
}

// Hinge penalty of the input gradient of a random one-hidden-layer net,
// differentiated w.r.t. the weights.
TEST(GradOfGrad, HingeKnowledgeScalarMatchesFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x0 = random_matrix(5, 3, rng);
    const Matrix k = random_matrix(5, 3, rng);
    const Matrix w1 = random_matrix(3, 4, rng);
    const Matrix w2 = random_matrix(4, 1, rng);
    auto penalty = [&](Tape& t, const Var& a, const Var& b) {
      Var x = t.variable(x0, "x");
      Var out = sum(ad::sigmoid(matmul(ad::tanh(matmul(x, a)), b)));
      Var wrt_x[] = {x};
      Var g = t.grad(out, wrt_x)[0];
      return mean(relu(t.constant(k) * g));
    };
    Tape tape;
    Var a = tape.variable(w1, "a");
    Var b = tape.variable(w2, "b");
    Var wrt[] = {a, b};
    auto g = grad_of_grad(tape, [&](Tape& t) { return penalty(t, a, b); }, wrt);
    Eigen::VectorXd analytic(16);
    analytic << as_vector(g[0]), as_vector(g[1]);

    auto f = [&](const Eigen::VectorXd& v) {
      Tape t;
      Var a2 = t.constant(Eigen::Map<const Matrix>(v.data(), 3, 4));
      Var b2 = t.constant(Eigen::Map<const Matrix>(v.data() + 12, 4, 1));
      return penalty(t, a2, b2).scalar();
    };
    Eigen::VectorXd v0(16);
    v0 << as_vector(w1), as_vector(w2);
    EXPECT_LT(relative_error(analytic, fd_gradient(f, v0)), 1e-4) << "trial " << trial;
  }
}

TEST(GradOfGrad, FirstOrderOnlyPrimitiveIsCapabilityError) {
  Tape tape;
  Var w = tape.variable(scalar(0.7), "w");
  Var x = tape.variable(scalar(0.4), "x");
  // cube(v) = v^3 with only a plain-matrix VJP.
  auto cube = [&](const Var& v) {
    return tape.apply_first_order(
        "cube", {v},
        [](const std::vector<const Matrix*>& in) { return Matrix(in[0]->array().cube()); },
        [](const std::vector<const Matrix*>& in, const Matrix&, const Matrix& g) {
          return std::vector<Matrix>{Matrix(3.0 * in[0]->array().square() * g.array())};
        });
  };
  Var wrt_x[] = {x};
  // First order still works.
  EXPECT_NEAR(grad(cube(w * x), wrt_x)[0](0, 0), 3.0 * std::pow(0.28, 2) * 0.7, 1e-15);

  Var wrt_w[] = {w};
  try {
    grad_of_grad(tape, [&](Tape& t) { return t.grad(cube(w * x), wrt_x)[0]; }, wrt_w);
    FAIL() << "expected CapabilityError";
  } catch (const CapabilityError& e) {
    EXPECT_EQ(e.primitive(), "cube");
  }
}

}  // namespace
}  // namespace kinject::ad
