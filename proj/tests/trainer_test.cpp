#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "stereoagg/checkpoint.hpp"
#include "stereoagg/image_io.hpp"
#include "stereoagg/optimizer.hpp"
#include "stereoagg/trainer.hpp"
#include "support.hpp"

namespace stereoagg {
namespace {

using T = Tensor<double>;

ModelConfig small_model() {
  ModelConfig m;
  m.backbone.features = 4;
  m.backbone.max_disparity = 8;
  m.backbone.residual_blocks = 1;
  m.backbone.encoder_levels = 1;
  m.backbone.height = 16;
  m.backbone.width = 16;
  m.aggregation.proposals = 2;
  m.aggregation.guidance_width = 4;
  return m;
}

std::vector<StereoSample> small_data(Index count, std::uint64_t seed = 3) {
  SceneSpec s;
  s.height = 16;
  s.width = 16;
  s.layers = 2;
  s.seed = seed;
  return generate_dataset(s, count);
}

TrainConfig train_config(Index iterations, double lr = 1e-3) {
  TrainConfig t;
  t.iterations = iterations;
  t.optimizer.learning_rate = lr;
  return t;
}

bool same_bits(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  if (a.tensors().size() != b.tensors().size()) return false;
  for (const auto& [name, t] : a.tensors()) {
    if (!b.contains(name) || t.shape() != b.at(name).shape()) return false;
    if (!(t.values() == b.at(name).values()).all()) return false;
  }
  return true;
}

TEST(RmsProp, HandComputedSingleStep) {
  ParameterSet<double> p;
  T& x = p.add_constant("p", {}, 1.0);
  backward(sum(x));  // g = 1
  RmsPropConfig c;
  c.learning_rate = 1e-4;
  RmsProp<double> opt(c);
  opt.step(p);
  EXPECT_NEAR(opt.accumulators().at("p")[0], 0.1, 1e-15);
  EXPECT_NEAR(p.at("p").item(), 1.0 - 1e-4 / (std::sqrt(0.1) + 1e-8), 1e-15);
  EXPECT_NEAR(p.at("p").item(), 0.99968377, 1e-8);
}

TEST(RmsProp, ZeroGradientLeavesParameter) {
  ParameterSet<double> p;
  T& x = p.add_constant("p", {3}, 2.0);
  backward(sum(scale(x, 0.0)));
  RmsProp<double> opt;
  opt.step(p);
  EXPECT_TRUE((p.at("p").values() == 2.0).all());
}

TEST(RmsProp, TwoStepsOnAQuadraticMatchScalarRecomputation) {
  // f(p) = 0.5 * a * p^2, gradient a * p.
  const double a = 3.0, lr = 0.05;
  ParameterSet<double> params;
  params.add_constant("p", {}, 0.8);
  RmsPropConfig c;
  c.learning_rate = lr;
  RmsProp<double> opt(c);
  double p = 0.8, v = 0.0;
  for (int step = 0; step < 2; ++step) {
    params.zero_grad();
    const T& x = params.at("p");
    backward(scale(mul(x, x), 0.5 * a));
    opt.step(params);
    const double g = a * p;
    v = 0.9 * v + 0.1 * g * g;
    p = p - lr * g / (std::sqrt(v) + 1e-8);
    EXPECT_NEAR(params.at("p").item(), p, 1e-10);
  }
}

TEST(RmsProp, MissingGradientIsAContractViolation) {
  ParameterSet<double> p;
  p.add_constant("p", {2}, 1.0);
  RmsProp<double> opt;
  EXPECT_THROW(opt.step(p), ContractViolation);
}

TEST(RmsProp, ConfigValidation) {
  RmsPropConfig c;
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.decay = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Checkpoint, EncodeDecodeIsByteStable) {
  StereoModel<float> model(small_model(), 5);
  calibrate_batch_norm(model, small_data(1));
  Checkpoint c;
  c.iteration = 12;
  c.config = "{\n  \"seed\": 5\n}";
  c.params = model.params();
  c.rms["feat.out.b"] = ArrayX<float>::Constant(4, 0.25f);
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.iteration, 12u);
  EXPECT_EQ(back.config, c.config);
  EXPECT_TRUE(same_bits(back.params, c.params));
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const std::string dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir + "/m.ckpt", c);
  EXPECT_EQ(read_file(dir + "/m.ckpt"), bytes);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir + "/m.ckpt")), bytes);
}

TEST(Checkpoint, RejectsDamage) {
  StereoModel<float> model(small_model(), 5);
  Checkpoint c;
  c.params = model.params();
  const std::string bytes = encode_checkpoint(c);
  EXPECT_THROW(decode_checkpoint("garbage"), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), IoError);
}

TEST(Model, MismatchedParametersAreNamed) {
  StereoModel<float> model(small_model(), 1);
  ParameterSet<float> params = model.params();
  params.tensors().erase("agg.prop.mix.w");
  try {
    StereoModel<float> broken(small_model(), params);
    FAIL() << "accepted a checkpoint missing a parameter";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("agg.prop.mix.w"), std::string::npos);
  }
  ModelConfig bigger = small_model();
  bigger.backbone.features = 8;
  EXPECT_THROW(StereoModel<float>(bigger, model.params()), ConfigError);
}

TEST(Model, UntrainedEvalNeedsCalibration) {
  StereoModel<float> model(small_model(), 1);
  const auto data = small_data(2);
  EXPECT_THROW(model.predict(data[0].left, data[0].right), ConfigError);
  calibrate_batch_norm(model, data);
  const Tensor<float> d = model.predict(data[0].left, data[0].right);
  EXPECT_EQ(d.shape(), (Shape{16, 16}));
  EXPECT_GE(d.values().minCoeff(), 0.0f);
  EXPECT_LE(d.values().maxCoeff(), 7.0f);
}

TEST(Model, FloatAndDoubleAgree) {
  StereoModel<float> f(small_model(), 2);
  StereoModel<double> d(small_model(), f.params().cast<double>());
  const auto data = small_data(1);
  const Tensor<float> a = f.predict(data[0].left, data[0].right, Mode::train);
  const Tensor<double> b = d.predict(data[0].left, data[0].right, Mode::train);
  EXPECT_LT((a.values().cast<double>() - b.values()).abs().maxCoeff(), 1e-3);
}

TEST(Shuffle, EveryEpochIsAPermutation) {
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (std::uint64_t t = epoch * 7; t < (epoch + 1) * 7; ++t) seen.insert(sample_for_step(7, 7, t));
    EXPECT_EQ(seen.size(), 7u);
  }
  EXPECT_EQ(sample_for_step(7, 7, 10), sample_for_step(7, 7, 10));
}

TEST(Trainer, ZeroLearningRateKeepsInitialization) {
  StereoModel<float> model(small_model(), 4);
  const ParameterSet<float> init = model.params().cast<float>();
  Trainer trainer(model, train_config(1, 0.0));
  const auto records = trainer.run(small_data(2));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_TRUE(same_bits(trainer.checkpoint().params, init));
}

TEST(Trainer, SameSeedsGiveBitIdenticalLosses) {
  auto run = [] {
    StereoModel<float> model(small_model(), 6);
    Trainer trainer(model, train_config(10));
    std::vector<double> losses;
    for (const auto& r : trainer.run(small_data(4))) losses.push_back(r.loss);
    return losses;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a, b);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto data = small_data(3);
  StereoModel<float> straight(small_model(), 8);
  std::vector<double> full;
  {
    Trainer t(straight, train_config(6));
    for (const auto& r : t.run(data)) full.push_back(r.loss);
  }

  StereoModel<float> first(small_model(), 8);
  Trainer a(first, train_config(3));
  a.run(data);
  const Checkpoint saved = decode_checkpoint(encode_checkpoint(a.checkpoint()));
  EXPECT_EQ(saved.iteration, 3u);

  StereoModel<float> second(small_model(), 999);  // different init, overwritten by resume
  Trainer b(second, train_config(6));
  b.resume(saved);
  const auto rest = b.run(data);
  ASSERT_EQ(rest.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rest[i].iteration, static_cast<Index>(4 + i));
    EXPECT_EQ(rest[i].loss, full[3 + i]) << "iteration " << 4 + i;
  }
  EXPECT_TRUE(same_bits(second.params(), straight.params()));
}

TEST(Trainer, LogsEveryIterationAndEvaluations) {
  StereoModel<float> model(small_model(), 9);
  TrainConfig cfg = train_config(4);
  cfg.eval_interval = 2;
  Trainer trainer(model, cfg);
  std::ostringstream log;
  trainer.run(small_data(2), &log);
  const std::string text = log.str();
  EXPECT_NE(text.find("iter=1 loss="), std::string::npos);
  EXPECT_NE(text.find("iter=4 loss="), std::string::npos);
  EXPECT_NE(text.find("iter=2 eval "), std::string::npos);
  EXPECT_NE(text.find("iter=4 eval "), std::string::npos);
}

TEST(Trainer, EvaluationIsReproducible) {
  StereoModel<float> model(small_model(), 10);
  const auto data = small_data(3);
  Trainer trainer(model, train_config(3));
  trainer.run(data);
  const Evaluation a = evaluate_model(model, data), b = evaluate_model(model, data);
  EXPECT_EQ(a.pooled.err_gt_1px, b.pooled.err_gt_1px);
  EXPECT_EQ(a.pooled.err_gt_3px, b.pooled.err_gt_3px);
  EXPECT_EQ(a.pooled.mae, b.pooled.mae);
  ASSERT_EQ(a.per_sample.size(), 3u);
}

TEST(Trainer, AblatedStreamsAreFrozen) {
  ModelConfig cfg = small_model();
  cfg.aggregation.disable_guidance = true;
  StereoModel<float> model(cfg, 11);
  const ParameterSet<float> init = model.params().cast<float>();
  Trainer trainer(model, train_config(2));
  trainer.run(small_data(2));
  EXPECT_TRUE((model.params().at("agg.guide.conv0.w").values() == init.at("agg.guide.conv0.w").values()).all());
  EXPECT_FALSE((model.params().at("agg.prop.mix.w").values() == init.at("agg.prop.mix.w").values()).all());
}

TEST(Trainer, WrongSampleSizeIsAConfigError) {
  StereoModel<float> model(small_model(), 12);
  Trainer trainer(model, train_config(1));
  SceneSpec s;  // 32x32
  EXPECT_THROW(trainer.run(generate_dataset(s, 1)), ConfigError);
  EXPECT_THROW(trainer.run({}), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.iterations = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.eval_interval = -1;
  EXPECT_THROW(t.validate(), ConfigError);
}

}  // namespace
}  // namespace stereoagg
