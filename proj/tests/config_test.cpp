#include "kinject/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace kinject {
namespace {

RunConfig parse(const std::string& text) { return parse_run_config(text); }

const char* kMinimal = "[data]\npath = \"d.csv\"\n";

TEST(Toml, ValuesAndComments) {
  const toml::Document d = toml::parse(R"toml(# leading comment
top = 3
[t]
s = "a \"q\" \\ b"   # trailing
lit = 'c:\path'
f = -1.5e-3
i = +1_000
b = false
arr = [
  [1, 2.0],   # nested
  ["x",],
]
"quoted key" = true
)toml");
  ASSERT_EQ(d.tables.size(), 2u);
  EXPECT_EQ(d.table("")->find("top")->value.integer, 3);
  const toml::Table& t = *d.table("t");
  EXPECT_EQ(t.find("s")->value.text, "a \"q\" \\ b");
  EXPECT_EQ(t.find("lit")->value.text, "c:\\path");
  EXPECT_EQ(t.find("f")->value.floating, -1.5e-3);
  EXPECT_EQ(t.find("i")->value.integer, 1000);
  EXPECT_FALSE(t.find("b")->value.boolean);
  const toml::Value& arr = t.find("arr")->value;
  ASSERT_EQ(arr.items.size(), 2u);
  EXPECT_EQ(arr.items[0].items[1].kind, toml::Value::Kind::floating);
  EXPECT_EQ(arr.items[1].items[0].text, "x");
  EXPECT_TRUE(t.find("quoted key")->value.boolean);
  EXPECT_EQ(t.find("arr")->value.line, 9u);
}

TEST(Toml, SyntaxErrorsCarryLines) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      toml::parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("a = 1\na = 2\n"), 2u);
  EXPECT_EQ(line_of("a = 1\n\nb = \"open\n"), 3u);
  EXPECT_EQ(line_of("[t]\n[t]\n"), 2u);
  EXPECT_EQ(line_of("a = [1, 2\n"), 2u);
  EXPECT_EQ(line_of("a = 1 2\n"), 1u);
  EXPECT_EQ(line_of("a = nope\n"), 1u);
  EXPECT_EQ(line_of("= 1\n"), 1u);
  EXPECT_EQ(line_of("a = 1.2.3\n"), 1u);
}

TEST(RunConfigParse, Defaults) {
  const RunConfig c = parse(kMinimal);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.data.path, "d.csv");
  EXPECT_EQ(c.data.resolved_format(), TableFormat::csv);
  EXPECT_EQ(c.data.label, "label");
  EXPECT_EQ(c.train.epochs, 200);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.search.bootstrap, 10u);
  EXPECT_EQ(c.search.split, 0.75);
  EXPECT_EQ(c.search.cells().size(), 16u);
  EXPECT_EQ(c.scarcity.fractions.size(), 8u);
  EXPECT_EQ(c.ale.bins, 40u);
  EXPECT_EQ(c.model.spec(6).layer_sizes, (std::vector<int>{6, 32, 32, 1}));
}

TEST(RunConfigParse, FullFile) {
  const RunConfig c = parse(R"toml(
seed = 42
output = "out"
[data]
path = "polish/1year.arff"
label = "class"
select_top_k = 6
[model]
arch = "resnet"
layer_sizes = [16, 16, 16]
activation = "relu"
[train]
optimizer = "sgd"
lr = 0.01
momentum = 0.5
epochs = 20
batch = 32
knowledge_mode = "linear"
[search]
lambda = [0.5, 0.2, 0.3]
bootstrap = 5
split = 0.8
[knowledge]
Attr1 = "logistic(slope=100, center=0)"
"Attr 2" = "constant(-1)"
[scarcity]
fractions = [0.9, 0.5]
with_knowledge = [0.7, 0.0, 0.3]
[ale]
features = ["Attr1"]
bins = 10
aware = false
scale = "logit"
[explain]
steps = 100
baseline = "zero"
)toml");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.output, "out");
  EXPECT_EQ(c.data.resolved_format(), TableFormat::arff);
  EXPECT_EQ(c.data.label, "class");
  EXPECT_EQ(c.data.select_top_k, 6u);
  EXPECT_EQ(c.model.spec(6).layer_sizes, (std::vector<int>{6, 16, 16, 16, 1}));
  EXPECT_EQ(c.model.spec(6).arch, Architecture::resnet);
  EXPECT_EQ(c.model.activation, Activation::relu);
  EXPECT_EQ(c.train.optimizer, OptimizerKind::sgd_momentum);
  EXPECT_EQ(c.train.momentum, 0.5);
  EXPECT_EQ(c.train.knowledge_mode, KnowledgeMode::linear);
  EXPECT_EQ(c.train_config().seed, 42u);
  ASSERT_TRUE(c.search.lambda);
  EXPECT_EQ(*c.search.lambda, LambdaWeights::make(0.5, 0.2, 0.3));
  EXPECT_EQ(c.search.cells().size(), 1u);
  EXPECT_EQ(c.search.split, 0.8);
  ASSERT_EQ(c.knowledge.size(), 2u);
  EXPECT_EQ(c.knowledge[1].first, "Attr 2");
  EXPECT_EQ(c.scarcity.fractions, (std::vector<double>{0.9, 0.5}));
  EXPECT_EQ(c.ale.bins, 10u);
  EXPECT_FALSE(c.ale.aware);
  EXPECT_TRUE(c.ale.on_logit);
  EXPECT_EQ(c.explain.steps, 100u);
  EXPECT_EQ(c.explain.baseline, BaselineKind::zero);
}

TEST(RunConfigParse, CustomGrid) {
  const RunConfig c = parse(std::string(kMinimal) + "[search]\nlambda_grid = [[1, 0, 0], [0.6, 0.1, 0.3]]\n");
  ASSERT_EQ(c.search.cells().size(), 2u);
  EXPECT_EQ(c.search.cells()[1], LambdaWeights::make(0.6, 0.1, 0.3));
  EXPECT_EQ(parse(std::string(kMinimal) + "[search]\nlambda_grid = \"table1\"\n").search.cells(), table1_grid());
}

TEST(RunConfigParse, InvalidSettings) {
  const std::string base = kMinimal;
  const char* bad[] = {
      "[search]\nlambda = [1, 0, 0]\nlambda_grid = \"table1\"\n",
      "[search]\nlambda = [0.5, 0.5, 0.5]\n",
      "[search]\nlambda = [1, 0]\n",
      "[search]\nlambda_grid = \"table2\"\n",
      "[search]\nlambda_grid = []\n",
      "[search]\nbootstrap = 1\n",
      "[search]\nsplit = 1.0\n",
      "[data]\n",
      "[model]\narch = \"cnn\"\n",
      "[model]\nlayer_sizes = [0]\n",
      "[model]\narch = \"resnet\"\nlayer_sizes = [8, 8]\n",
      "[train]\noptimizer = \"rmsprop\"\n",
      "[train]\nlr = -1\n",
      "[train]\nepochs = \"ten\"\n",
      "[train]\nseed = 5\n",
      "[knowledge]\nx = \"cubic\"\n",
      "[scarcity]\nfractions = [1.5]\n",
      "[ale]\nbins = 0\n",
      "[ale]\nscale = \"log\"\n",
      "[explain]\nbaseline = \"median\"\n",
      "[nonsense]\n",
      "typo = 1\n",
  };
  for (const char* extra : bad) {
    std::string text = base + extra;
    if (std::string(extra) == "[data]\n") text = "[data]\nlabel = \"y\"\n";
    if (std::string(extra) == "[train]\nseed = 5\n") text = "seed = 4\n" + base + extra;
    if (std::string(extra) == "typo = 1\n") text = std::string(extra) + base;
    EXPECT_THROW(parse(text), ConfigurationError) << extra;
  }
  EXPECT_THROW(parse("[data]\npath = \"d\"\nfeatures = [\"a\"]\nselect_top_k = 1\n"), ConfigurationError);
  EXPECT_THROW(parse("[data]\npath = \"d\"\nbogus = 1\n"), ConfigurationError);
  EXPECT_THROW(parse("[data\npath = \"d\"\n"), ParseError);
}

TEST(RunConfigParse, TrainSeedAgreeingWithTopLevelIsAccepted) {
  EXPECT_EQ(parse(std::string("seed = 5\n") + kMinimal + "[train]\nseed = 5\n").seed, 5u);
  EXPECT_EQ(parse(std::string(kMinimal) + "[train]\nseed = 9\n").seed, 9u);
}

TEST(RunConfigParse, ResolvedTextRoundTrips) {
  const RunConfig c = parse(R"toml(
seed = 7
[data]
path = "x.csv"
features = ["a", "b"]
[model]
layer_sizes = [4, 4]
[train]
lr = 0.003
[search]
lambda_grid = [[0.9, 0.0, 0.1], [0.7, 0.2, 0.1]]
[knowledge]
a = "piecewise((0, 1), (2, -1))"
[scarcity]
without_knowledge = [1, 0, 0]
)toml");
  const std::string text = to_toml(c);
  const RunConfig back = parse(text);
  EXPECT_EQ(to_toml(back), text);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.data.features, c.data.features);
  EXPECT_EQ(back.model.hidden, c.model.hidden);
  EXPECT_EQ(back.train.lr, 0.003);
  EXPECT_EQ(back.search.cells(), c.search.cells());
  EXPECT_EQ(back.knowledge, c.knowledge);
  EXPECT_EQ(back.scarcity.without_knowledge, c.scarcity.without_knowledge);
  EXPECT_EQ(to_toml(parse(to_toml(parse(kMinimal)))), to_toml(parse(kMinimal)));
}

TEST(RunConfigLoad, RelativeDataPathFollowsConfigFile) {
  const auto dir = std::filesystem::temp_directory_path() / "kinject_config_test";
  std::filesystem::create_directories(dir / "sub");
  const auto file = dir / "sub" / "run.toml";
  std::ofstream(file) << "[data]\npath = \"../data.csv\"\n";
  EXPECT_EQ(load_run_config(file.string()).data.path, (dir / "data.csv").string());
  std::ofstream(file) << "[data]\npath = \"/abs/data.csv\"\n";
  EXPECT_EQ(load_run_config(file.string()).data.path, "/abs/data.csv");
  EXPECT_THROW(load_run_config((dir / "missing.toml").string()), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace kinject
