#include <gtest/gtest.h>

#include <algorithm>

#include "ross/config.hpp"

using namespace ross;

namespace {

std::vector<std::string> offending(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    auto k = e.keys;
    std::sort(k.begin(), k.end());
    return k;
  }
  return {};
}

}  // namespace

TEST(Config, EmptyDocumentGivesPublishedDefaults) {
  const auto c = parse_config_text("{}");
  EXPECT_EQ(c.optimizer.epochs, 100);
  EXPECT_DOUBLE_EQ(c.optimizer.learning_rate, 0.001);
  EXPECT_EQ(c.optimizer.decay_epochs, (std::vector<int>{45, 90}));
  EXPECT_DOUBLE_EQ(c.optimizer.decay_factor, 10.0);
  EXPECT_EQ(c.ross.dilation_fractions, (std::vector<double>{0.05, 0.10, 0.15}));
  EXPECT_DOUBLE_EQ(c.ross.boundary_threshold, 0.5);
  EXPECT_DOUBLE_EQ(c.loss.lm, 1.0);
  EXPECT_DOUBLE_EQ(c.loss.dbs, 1.0);
  EXPECT_DOUBLE_EQ(c.noise.channel_fraction, 0.10);
  EXPECT_EQ(c.noise.mode, "multiply");
  EXPECT_EQ(c.ross.student_saliency, "gradcam");
  EXPECT_TRUE(c.ross.enable_lm && c.ross.enable_dbs && c.ross.enable_sni);
  EXPECT_EQ(c.probe_count, 8);
}

TEST(Config, OverridesMergeIntoDefaults) {
  const auto c = parse_config_text(R"({"optimizer": {"epochs": 20, "decay_epochs": [14, 18]},
                                       "method": {"name": "lwf"}, "loss": {"lambda_dbs": 0.1}, "seed": 9})");
  EXPECT_EQ(c.optimizer.epochs, 20);
  EXPECT_EQ(c.optimizer.decay_epochs, (std::vector<int>{14, 18}));
  EXPECT_DOUBLE_EQ(c.optimizer.learning_rate, 0.001);
  EXPECT_EQ(c.method.name, "lwf");
  EXPECT_DOUBLE_EQ(c.loss.dbs, 0.1);
  EXPECT_DOUBLE_EQ(c.loss.lm, 1.0);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, ResolvedFormReparsesIdentically) {
  const auto c = parse_config_text(R"({"ross": {"enable_sni": false, "student_saliency": "cam"}, "model": {"widths": [8, 8, 16, 16]}})");
  const auto again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, EveryUnknownKeyIsListed) {
  EXPECT_EQ(offending(R"({"epochs": 5, "optimizer": {"lr": 0.1}, "ross": {"enable_lm": true, "colour": 1}})"),
            (std::vector<std::string>{"epochs", "optimizer.lr", "ross.colour"}));
}

TEST(Config, TypeMismatchesAreListed) {
  EXPECT_EQ(offending(R"({"seed": "seven", "optimizer": {"epochs": 2.5, "decay_epochs": ["x"]}, "ross": {"enable_lm": 1}, "method": 3})"),
            (std::vector<std::string>{"method", "optimizer.decay_epochs", "optimizer.epochs", "ross.enable_lm", "seed"}));
  // integers are accepted where reals are expected
  EXPECT_NO_THROW(parse_config_text(R"({"optimizer": {"learning_rate": 1}})"));
}

TEST(Config, SemanticViolations) {
  EXPECT_EQ(offending(R"({"ross": {"dilation_fractions": [0.1, 0.05, 0.2]}})"), (std::vector<std::string>{"ross.dilation_fractions"}));
  EXPECT_EQ(offending(R"({"ross": {"dilation_fractions": [0.05, 0.1]}})"), (std::vector<std::string>{"ross.dilation_fractions"}));
  EXPECT_EQ(offending(R"({"schedule": {"total_classes": 11}})"), (std::vector<std::string>{"schedule"}));
  EXPECT_EQ(offending(R"({"model": {"backbone": "resnet18"}})"), (std::vector<std::string>{"model.backbone"}));
  EXPECT_EQ(offending(R"({"noise": {"mode": "xor", "channel_fraction": 0}})"), (std::vector<std::string>{"noise.channel_fraction", "noise.mode"}));
  EXPECT_EQ(offending(R"({"ross": {"student_saliency": "lime"}, "method": {"name": "icarl"}})"),
            (std::vector<std::string>{"method.name", "ross.student_saliency"}));
  EXPECT_EQ(offending(R"({"loss": {"lambda_lm": -1}})"), (std::vector<std::string>{"loss"}));
  EXPECT_EQ(offending(R"({"optimizer": {"batch_size": 0}})"), (std::vector<std::string>{"optimizer.batch_size"}));
}

TEST(Config, MalformedJson) {
  EXPECT_EQ(offending("{"), (std::vector<std::string>{"<root>"}));
  EXPECT_EQ(offending("[1, 2]"), (std::vector<std::string>{"<root>"}));
}

TEST(Config, RossOffDisablesAllComponents) {
  auto c = parse_config_text("{}");
  c.ross_off();
  EXPECT_FALSE(c.ross.enable_lm || c.ross.enable_dbs || c.ross.enable_sni);
}
