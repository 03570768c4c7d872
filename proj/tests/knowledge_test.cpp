#include "kinject/knowledge.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "kinject/losses.hpp"
#include "kinject/random.hpp"
#include "support/oracles.hpp"

namespace kinject {
namespace {

const std::vector<std::string> kNames{"Attr13", "Attr16", "Attr23"};

TEST(KnowledgeFunction, LogisticMidpointAndShoulder) {
  const auto k = KnowledgeFunction::logistic(100, 0);
  EXPECT_EQ(k(0.0), 0.5);
  EXPECT_NEAR(k(0.1), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(k(0.1), 0.9999546, 1e-7);
  EXPECT_EQ(k(-1e6), 0.0);
  EXPECT_EQ(k(1e6), 1.0);
}

TEST(KnowledgeFunction, ConstantAndZero) {
  const auto k = KnowledgeFunction::constant(-1.0);
  for (double x : {-3.0, 0.0, 12.5}) EXPECT_EQ(k(x), -1.0);
  EXPECT_EQ(KnowledgeFunction::zero()(4.0), 0.0);
  EXPECT_THROW(KnowledgeFunction::constant(1.5), ValidationError);
  EXPECT_THROW(KnowledgeFunction::constant(-1.0001), ValidationError);
}

TEST(KnowledgeFunction, PiecewiseKnotsClampingAndContinuity) {
  const auto k = KnowledgeFunction::piecewise({{-1.0, -0.5}, {0.0, 1.0}, {2.0, 0.25}});
  EXPECT_EQ(k(-1.0), -0.5);
  EXPECT_EQ(k(0.0), 1.0);
  EXPECT_EQ(k(2.0), 0.25);
  EXPECT_EQ(k(-7.0), -0.5);
  EXPECT_EQ(k(9.0), 0.25);
  EXPECT_DOUBLE_EQ(k(-0.5), 0.25);
  EXPECT_DOUBLE_EQ(k(1.0), 0.625);
  for (double knot : {-1.0, 0.0, 2.0}) {
    EXPECT_NEAR(k(knot - 1e-12), k(knot), 1e-10);
    EXPECT_NEAR(k(knot + 1e-12), k(knot), 1e-10);
  }
  EXPECT_THROW(KnowledgeFunction::piecewise({{0.0, 0.0}, {0.0, 1.0}}), ValidationError);
  EXPECT_THROW(KnowledgeFunction::piecewise({{0.0, 0.0}, {1.0, 1.2}}), ValidationError);
}

TEST(KnowledgeSpec, EvalKRangeProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    KnowledgeSpec spec(4);
    for (std::size_t j = 0; j < 4; ++j) {
      switch (uniform_index(rng, 4)) {
        case 0: break;
        case 1: spec.set(j, KnowledgeFunction::constant(uniform(rng, -1, 1))); break;
        case 2: spec.set(j, KnowledgeFunction::logistic(uniform(rng, -200, 200), uniform(rng, -2, 2))); break;
        default: {
          double x = uniform(rng, -3, 0);
          std::vector<std::pair<double, double>> knots;
          for (int t = 0; t < 4; ++t) {
            knots.emplace_back(x, uniform(rng, -1, 1));
            x += uniform(rng, 0.01, 2);
          }
          spec.set(j, KnowledgeFunction::piecewise(knots));
        }
      }
    }
    std::vector<double> x(4);
    for (auto& v : x) v = uniform(rng, -10, 10);
    for (double k : eval_k(spec, x)) {
      EXPECT_GE(k, -1.0);
      EXPECT_LE(k, 1.0);
    }
  }
}

TEST(KnowledgeSpec, ZeroFeaturesReturnExactZero) {
  KnowledgeSpec spec(3);
  spec.set(1, KnowledgeFunction::constant(1.0));
  const std::vector<double> x{5.0, 5.0, 5.0};
  EXPECT_EQ(eval_k(spec, x), (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_THROW(spec.set(3, KnowledgeFunction::constant(1.0)), ValidationError);
  const std::vector<double> short_x{1.0};
  EXPECT_THROW(eval_k(spec, short_x), ContractError);
}

TEST(ParseKnowledge, LogisticEntry) {
  const KnowledgeSpec spec = parse_knowledge_spec("Attr13 = logistic(slope=100, center=0)\n", kNames);
  ASSERT_EQ(spec.entries().size(), 1u);
  EXPECT_EQ(spec.at(0)(0.0), 0.5);
  EXPECT_EQ(spec.at(0)(0.1), KnowledgeFunction::logistic(100, 0)(0.1));
  EXPECT_EQ(spec.at(1)(0.1), 0.0);
}

TEST(ParseKnowledge, EmptySectionIsAllZero) {
  const KnowledgeSpec spec = parse_knowledge_spec("\n# nothing here\n\n", kNames);
  EXPECT_TRUE(spec.empty());
  EXPECT_EQ(spec.features(), 3u);
}

TEST(ParseKnowledge, RangeViolation) {
  EXPECT_THROW(parse_knowledge_spec("Attr16 = constant(1.5)", kNames), ValidationError);
}

TEST(ParseKnowledge, DuplicateEntry) {
  EXPECT_THROW(parse_knowledge_spec("Attr16 = constant(1)\nAttr16 = zero", kNames), ValidationError);
}

TEST(ParseKnowledge, UnknownNamesAreAllListed) {
  try {
    parse_knowledge_spec("Attr99 = constant(1)\nAttr13 = zero\nfoo = constant(0)", kNames);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("Attr99"), std::string::npos);
    EXPECT_NE(what.find("foo"), std::string::npos);
  }
}

TEST(ParseKnowledge, AllFormsAndPositionalArguments) {
  const KnowledgeSpec spec = parse_knowledge_spec(
      "Attr13 = \"piecewise((0, -1), (1, 1))\"\n"
      "Attr16 = logistic(10, 0.5)  # slope, center\n"
      "Attr23 = constant(-0.25)\n",
      kNames);
  EXPECT_EQ(spec.at(0)(0.5), 0.0);
  EXPECT_EQ(spec.at(1)(0.5), 0.5);
  EXPECT_EQ(spec.at(2)(3.0), -0.25);
}

TEST(ParseKnowledge, MalformedExpression) {
  EXPECT_THROW(parse_knowledge_function("logistic(slope=)"), ParseError);
  EXPECT_THROW(parse_knowledge_function("cubic(1)"), ParseError);
  EXPECT_THROW(parse_knowledge_function("constant(1) x"), ParseError);
  EXPECT_THROW(parse_knowledge_spec("Attr13 logistic()", kNames), ParseError);
}

TEST(KnowledgeFunction, ToStringRoundTrips) {
  for (const auto& k : {KnowledgeFunction::zero(), KnowledgeFunction::constant(1.0 / 3.0),
                        KnowledgeFunction::logistic(100, 0.1),
                        KnowledgeFunction::piecewise({{-0.1, 0.7}, {2.0 / 3.0, -1.0}})}) {
    const auto back = parse_knowledge_function(k.to_string());
    for (double x : {-1.0, -0.1, 0.0, 0.2, 0.5, 3.0}) EXPECT_EQ(back(x), k(x));
  }
}

TEST(KnowledgeLoss, ZeroSpecGivesZeroForAnyModel) {
  Rng rng(4);
  const NetworkSpec spec = NetworkSpec::default_mlp(3);
  const FeatureStats stats = FeatureStats::identity(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Params p = testing::random_params(spec, rng);
    const Eigen::MatrixXd x = testing::random_matrix(30, 3, rng);
    EXPECT_EQ(knowledge_loss(spec, p, stats, x, KnowledgeSpec(3), KnowledgeMode::hinge), 0.0);
    EXPECT_EQ(knowledge_loss(spec, p, stats, x, KnowledgeSpec(3), KnowledgeMode::linear), 0.0);
  }
}

}  // namespace
}  // namespace kinject
