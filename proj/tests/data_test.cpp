#include "kinject/data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinject/metrics.hpp"
#include "kinject/random.hpp"

namespace kinject {
namespace {

Dataset csv(const std::string& text, const std::string& label = "class") {
  std::istringstream in(text);
  return parse_csv(in, label);
}

Dataset arff(const std::string& text, const std::string& label = "class") {
  std::istringstream in(text);
  return parse_arff(in, label);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

TEST(Csv, MissingCellIsCounted) {
  const Dataset d = csv("a,b,class\n1,2,0\n?,4,1\n5,6,0\n");
  ASSERT_EQ(d.rows(), 3u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.missing_counts(), (std::vector<std::size_t>{1, 0}));
  EXPECT_TRUE(is_missing(d.raw(1, 0)));
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
}

TEST(Csv, QuotesLabelPositionAndBooleans) {
  const Dataset d = csv("class,\"x, y\",z\r\ntrue,1.5,\"-2e3\"\nfalse,,3\n");
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"x, y", "z"}));
  EXPECT_EQ(d.raw(0, 1), -2000.0);
  EXPECT_TRUE(is_missing(d.raw(1, 0)));
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
}

TEST(Csv, NonNumericCellReportsRowAndColumn) {
  try {
    csv("a,b,class\n1,2,0\n3,abc,1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.column(), 2u);
  }
}

TEST(Csv, UnknownLabelIsSchemaError) {
  EXPECT_THROW(csv("a,class\n1,2\n"), SchemaError);
  EXPECT_THROW(csv("a,class\n1,yes\n"), SchemaError);
  EXPECT_THROW(csv("a,b\n1,0\n"), SchemaError);
}

TEST(Arff, MatchesCsvEquivalent) {
  const Dataset a = arff(
      "% comment\n@relation 'toy'\n@attribute Attr1 numeric\n@attribute 'Attr 2' REAL\n"
      "@attribute class {0,1}\n\n@data\n1,2,0\n?,4.5,1\n-3,1e-3,'1'\n");
  const Dataset c = csv("Attr1,Attr 2,class\n1,2,0\n?,4.5,1\n-3,1e-3,1\n");
  EXPECT_EQ(a.feature_names, c.feature_names);
  EXPECT_EQ(a.labels, c.labels);
  ASSERT_EQ(a.rows(), c.rows());
  for (Eigen::Index i = 0; i < a.raw.rows(); ++i)
    for (Eigen::Index j = 0; j < a.raw.cols(); ++j) {
      if (is_missing(c.raw(i, j)))
        EXPECT_TRUE(is_missing(a.raw(i, j)));
      else
        EXPECT_EQ(a.raw(i, j), c.raw(i, j));
    }
}

TEST(Arff, NominalFeatureIsRejected) {
  EXPECT_THROW(arff("@relation r\n@attribute color {red,blue}\n@attribute class {0,1}\n@data\nred,0\n"),
               SchemaError);
  EXPECT_THROW(arff("@relation r\n@attribute a numeric\n@attribute class {0,1}\n@data\n{0 1}\n"),
               ParseError);
}

TEST(LoadTable, MissingFileIsIoError) {
  EXPECT_THROW(load_table("/no/such/file.csv", TableFormat::csv, "class"), IoError);
}

TEST(Csv, WriteBackIsLossless) {
  Rng rng(3);
  Dataset d;
  d.feature_names = {"a", "b,c"};
  d.label_name = "class";
  d.raw.resize(50, 2);
  for (Eigen::Index i = 0; i < d.raw.size(); ++i) d.raw.data()[i] = normal01(rng) * std::pow(10.0, uniform(rng, -8, 8));
  d.raw(3, 1) = kMissing;
  for (int i = 0; i < 50; ++i) d.labels.push_back(i % 2);
  std::stringstream ss;
  write_csv(d, ss);
  const Dataset back = parse_csv(ss, "class");
  EXPECT_EQ(back.feature_names, d.feature_names);
  EXPECT_EQ(back.labels, d.labels);
  for (Eigen::Index i = 0; i < d.raw.size(); ++i) {
    if (is_missing(d.raw.data()[i]))
      EXPECT_TRUE(is_missing(back.raw.data()[i]));
    else
      EXPECT_EQ(back.raw.data()[i], d.raw.data()[i]);
  }
}

TEST(Standardize, ImputesWithTrainMean) {
  const Dataset d = csv("a,class\n1,0\n?,1\n3,0\n");
  const std::vector<std::size_t> train{0, 1, 2};
  const StandardizedData s = impute_and_standardize(d, train);
  EXPECT_EQ(s.stats.mean[0], 2.0);
  EXPECT_EQ(s.stats.impute(d.raw)(1, 0), 2.0);
  const Eigen::VectorXd z = s.z.col(0);
  EXPECT_NEAR(z.mean(), 0.0, 1e-15);
  // Sample sd over three rows with the imputed value counted.
  const double sd = std::sqrt(((z.array() - z.mean()).square().sum()) / 2.0);
  EXPECT_NEAR(sd, 1.0, 1e-12);
}

TEST(Standardize, TrainColumnsHaveZeroMeanUnitSd) {
  Rng rng(4);
  Dataset d;
  d.feature_names = {"a", "b", "c"};
  d.raw.resize(300, 3);
  for (Eigen::Index i = 0; i < 300; ++i) {
    d.raw(i, 0) = uniform(rng, -1000, 5000);
    d.raw(i, 1) = 1e-3 * normal01(rng) + 3.0;
    d.raw(i, 2) = std::exp(normal01(rng));
    d.labels.push_back(static_cast<int>(i % 2));
  }
  const std::vector<std::size_t> train = iota(200);
  const StandardizedData s = impute_and_standardize(d, train);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Eigen::VectorXd z = s.z.col(j).head(200);
    const double mean = z.mean();
    const double sd = std::sqrt((z.array() - mean).square().sum() / 199.0);
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(sd, 1.0, 1e-10);
  }
  const Eigen::MatrixXd back = s.stats.restore(s.z);
  EXPECT_LT((back - d.raw).cwiseAbs().maxCoeff() / d.raw.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, TestRowsDoNotAffectStats) {
  Dataset d = csv("a,class\n1,0\n2,1\n4,0\n100,1\n");
  const std::vector<std::size_t> train{0, 1, 2};
  const FeatureStats before = impute_and_standardize(d, train).stats;
  d.raw(3, 0) = -5e6;
  const FeatureStats after = impute_and_standardize(d, train).stats;
  EXPECT_EQ(before.mean, after.mean);
  EXPECT_EQ(before.sd, after.sd);
}

TEST(Standardize, AllMissingColumnIsNamed) {
  const Dataset d = csv("good,bad,class\n1,?,0\n2,?,1\n3,5,1\n");
  const std::vector<std::size_t> train{0, 1};
  try {
    impute_and_standardize(d, train);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
}

TEST(Standardize, ConstantAndSparseColumnsAreFlagged) {
  const Dataset d = csv("c,m,class\n7,1,0\n7,?,1\n7,?,0\n7,2,1\n7,?,1\n");
  const StandardizedData s = impute_and_standardize(d, iota(5));
  EXPECT_TRUE(s.stats.constant[0]);
  EXPECT_EQ(s.stats.sd[0], 1.0);
  EXPECT_EQ(s.stats.warnings.size(), 2u);
}

TEST(Split, ProportionsAreKept) {
  std::vector<int> labels(100, 0);
  for (int i = 0; i < 10; ++i) labels[static_cast<std::size_t>(i * 10)] = 1;
  const Split s = stratified_split(labels, 0.75, 99);
  int pos = 0;
  for (std::size_t i : s.train) pos += labels[i];
  EXPECT_TRUE(pos == 7 || pos == 8) << pos;
  EXPECT_EQ(s.train.size() + s.test.size(), 100u);
}

TEST(Split, DeterministicDisjointExhaustive) {
  std::vector<int> labels;
  for (int i = 0; i < 57; ++i) labels.push_back(i % 5 == 0);
  const Split a = stratified_split(labels, 0.6, 5);
  const Split b = stratified_split(labels, 0.6, 5);
  const Split c = stratified_split(labels, 0.6, 6);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.train, c.train);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (std::size_t i : a.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), labels.size());
}

TEST(Split, TinyClassIsRejected) {
  std::vector<int> labels{0, 0, 0, 1};
  EXPECT_THROW(stratified_split(labels, 0.5, 1), ValidationError);
  std::vector<int> ok{0, 0, 1, 1};
  EXPECT_THROW(stratified_split(ok, 1.0, 1), ContractError);
}

Dataset synthetic_select(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = {"noise", "label_copy", "inverse"};
  d.raw.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = uniform01(rng) < 0.3;
    d.labels.push_back(y);
    const auto r = static_cast<Eigen::Index>(i);
    d.raw(r, 0) = normal01(rng);
    d.raw(r, 1) = y;
    d.raw(r, 2) = -2.0 * y + normal01(rng);
  }
  return d;
}

TEST(FeatureSelect, LabelCopyRanksFirst) {
  const Dataset d = synthetic_select(500, 1);
  const auto ranked = roc_feature_select(d, 3);
  EXPECT_EQ(ranked[0].name, "label_copy");
  EXPECT_EQ(ranked[0].score, 1.0);
  EXPECT_EQ(ranked[1].name, "inverse");
  EXPECT_LT(ranked[1].auroc, 0.5);
  EXPECT_THROW(roc_feature_select(d, 4), ContractError);
}

TEST(FeatureSelect, IndependentFeatureScoresNearHalf) {
  const Dataset d = synthetic_select(10000, 2);
  const auto ranked = roc_feature_select(d, 3);
  EXPECT_EQ(ranked[2].name, "noise");
  EXPECT_GE(ranked[2].score, 0.5);
  EXPECT_LE(ranked[2].score, 0.53);
}

TEST(FeatureSelect, InvariantUnderIncreasingTransforms) {
  Dataset d = synthetic_select(400, 3);
  const auto before = roc_feature_select(d, 3);
  d.raw.col(0) = d.raw.col(0).array().exp();
  d.raw.col(2) = 3.0 * d.raw.col(2).array() + 11.0;
  const auto after = roc_feature_select(d, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(before[i].name, after[i].name);
    EXPECT_EQ(before[i].score, after[i].score);
  }
}

TEST(FeatureSelect, TiesKeepColumnOrder) {
  const Dataset d = csv("a,b,c,class\n1,1,1,0\n2,2,2,1\n");
  const auto ranked = roc_feature_select(d, 3);
  EXPECT_EQ(ranked[0].name, "a");
  EXPECT_EQ(ranked[1].name, "b");
  EXPECT_EQ(ranked[2].name, "c");
}

}  // namespace
}  // namespace kinject
