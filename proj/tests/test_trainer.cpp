#include <gtest/gtest.h>

#include <sstream>

#include "pdnet/checkpoint.hpp"
#include "pdnet/error.hpp"
#include "pdnet/trainer.hpp"
#include "test_util.hpp"

using namespace pdnet;
using pdnet::testing::bit_identical;

namespace {

MasterConfig tiny_master() {
  MasterConfig m;
  m.stage_channels = {4, 8};
  m.convs_per_block = {2, 1};
  m.input_size = 16;
  return m;
}

SubNetConfig tiny_subnet() {
  SubNetConfig s;
  s.stage_channels = {4, 8};
  s.fusion_stage = 1;
  return s;
}

SceneConfig tiny_scene() {
  SceneConfig c;
  c.size = 16;
  return c;
}

TrainConfig quick(std::size_t epochs) { return TrainConfig::with_epochs(epochs); }

std::string checkpoint_bytes(const PDNetParams<float>& p) {
  std::ostringstream out;
  write_checkpoint(out, p);
  return out.str();
}

}  // namespace

TEST(Schedule, EndpointsAndLinearDecay) {
  TrainConfig t;
  t.epochs = 20;
  EXPECT_EQ(t.learning_rate(0), 0.001);
  EXPECT_EQ(t.learning_rate(19), 0.0001);
  for (std::size_t e = 0; e < 20; ++e) {
    EXPECT_NEAR(t.learning_rate(e), 0.001 + (0.0001 - 0.001) * e / 19.0, 1e-15);
  }
  t.epochs = 1;
  EXPECT_EQ(t.learning_rate(0), 0.001);
}

TEST(Schedule, Validation) {
  TrainConfig t;
  t.lr_end = 0.01;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr_end = -1;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Schedule, KeysRoundTrip) {
  TrainConfig t;
  t.epochs = 7;
  t.lr_start = 0.002;
  t.shuffle = false;
  KeyValues kv;
  write_train_keys(t, "train.", kv);
  TrainConfig back;
  apply_train_keys(kv, "train.", back);
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_EQ(back.lr_start, 0.002);
  EXPECT_FALSE(back.shuffle);
  EXPECT_THROW(apply_train_keys(KeyValues::parse("train.epoch=3\n", "t"), "train.", back), ConfigError);
}

TEST(Pretrain, StepCountIsCeilOfBatches) {
  const auto data = gen_samples(tiny_scene(), 8, 0);
  EXPECT_EQ(pretrain_master(quick(1), tiny_master(), data).steps, 1u);
  TrainConfig t = quick(1);
  t.batch_size = 3;
  EXPECT_EQ(pretrain_master(t, tiny_master(), data).steps, 3u);
  t.epochs = 2;
  const TrainResult r = pretrain_master(t, tiny_master(), data);
  EXPECT_EQ(r.steps, 6u);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_FALSE(r.log[0].test_mae.has_value());
}

TEST(Pretrain, SameSeedSameBytes) {
  const auto data = gen_samples(tiny_scene(), 12, 1);
  TrainConfig t = quick(2);
  t.seed = 9;
  const std::string a = checkpoint_bytes(pretrain_master(t, tiny_master(), data).params);
  const std::string b = checkpoint_bytes(pretrain_master(t, tiny_master(), data).params);
  EXPECT_EQ(a, b);
  t.seed = 10;
  EXPECT_NE(a, checkpoint_bytes(pretrain_master(t, tiny_master(), data).params));
}

TEST(Pretrain, LossFallsOnEasyData) {
  SceneConfig easy = tiny_scene();
  easy.color_contrast = 1.0;
  const auto data = gen_samples(easy, 64, 2);
  TrainConfig t = quick(20);
  const TrainResult r = pretrain_master(t, tiny_master(), data);
  ASSERT_EQ(r.log.size(), 20u);
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  EXPECT_LT(r.log.back().train_loss, 0.9 * r.log.front().train_loss);
}

TEST(Pretrain, Errors) {
  EXPECT_THROW(pretrain_master(quick(1), tiny_master(), {}), DataError);
  const auto wrong = gen_samples(SceneConfig{}, 2, 0);  // 64x64 against a 16x16 network
  EXPECT_THROW(pretrain_master(quick(1), tiny_master(), wrong), ShapeError);
  MasterConfig four = tiny_master();
  four.input_channels = 4;
  EXPECT_THROW(pretrain_master(quick(1), four, gen_samples(tiny_scene(), 2, 0)), ConfigError);
}

TEST(Pretrain, DivergenceNamesEpoch) {
  const auto data = gen_samples(tiny_scene(), 8, 3);
  TrainConfig t = quick(3);
  t.lr_start = 1e30;
  t.lr_end = 1e30;
  try {
    pretrain_master(t, tiny_master(), data);
    FAIL() << "expected divergence";
  } catch (const AutodiffError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Variants, ContractsAndContradictions) {
  const auto split = gen_dataset(tiny_scene(), 12, 4);
  const TrainResult prior = pretrain_master(quick(1), tiny_master(), split.train);
  const FusionSpec fusion;

  const TrainResult mnet = train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::mnet}, nullptr,
                                       split.train, split.test);
  EXPECT_EQ(mnet.params.master.input_channels, 4u);
  EXPECT_EQ(mnet.params.get("enc.b0.c0.w").value.shape().c, 4u);
  EXPECT_FALSE(mnet.params.has_subnet());

  const TrainResult pnet = train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::pnet},
                                       &prior.params, split.train, split.test);
  EXPECT_FALSE(pnet.params.has_subnet());
  for (const auto& p : pnet.params.list()) EXPECT_NE(p.group, ParamGroup::subnet) << p.name;
  EXPECT_TRUE(pnet.log.back().test_fbeta.has_value());

  const TrainResult dnet = train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::dnet}, nullptr,
                                       split.train, split.test);
  EXPECT_TRUE(dnet.params.has_subnet());
  EXPECT_EQ(dnet.params.fusion.alpha, 1.0);
  EXPECT_EQ(dnet.params.count_frozen(), 0u);

  EXPECT_THROW(train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::pnet}, nullptr, split.train),
               ConfigError);
  EXPECT_THROW(train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::mnet}, &prior.params,
                           split.train),
               ConfigError);
  EXPECT_THROW(train_pdnet(quick(1), tiny_master(), tiny_subnet(), fusion, {VariantKind::pdnet, -1.0},
                           &prior.params, split.train),
               ConfigError);

  MasterConfig wider = tiny_master();
  wider.stage_channels = {8, 8};
  SubNetConfig wider_sub = tiny_subnet();
  wider_sub.stage_channels = {8, 8};
  EXPECT_THROW(train_pdnet(quick(1), wider, wider_sub, fusion, {VariantKind::pdnet}, &prior.params, split.train),
               ConfigError);
}

TEST(Variants, PriorEncoderStaysBitIdentical) {
  const auto split = gen_dataset(tiny_scene(), 16, 5);
  const TrainResult prior = pretrain_master(quick(2), tiny_master(), split.train);
  const TrainResult r = train_pdnet(quick(3), tiny_master(), tiny_subnet(), FusionSpec{}, {VariantKind::pdnet},
                                    &prior.params, split.train, split.test);
  std::size_t checked = 0;
  for (const auto& p : prior.params.list()) {
    if (p.group != ParamGroup::master_encoder) continue;
    EXPECT_TRUE(bit_identical(p.value, r.params.get(p.name).value)) << p.name;
    ++checked;
  }
  EXPECT_GT(checked, 0u);
  EXPECT_FALSE(bit_identical(prior.params.get("head.w").value, r.params.get("head.w").value));
}

TEST(Predict, ShapesAndRange) {
  const auto data = gen_samples(tiny_scene(), 5, 6);
  Rng rng(0);
  auto params = build_master<float>(tiny_master(), rng);
  const auto maps = predict(params, data, 2);
  ASSERT_EQ(maps.size(), 5u);
  for (const auto& m : maps) {
    EXPECT_EQ(m.shape(), (Shape{1, 1, 16, 16}));
    for (float v : m.data()) ASSERT_TRUE(v > 0.0f && v < 1.0f);
  }
  // Batching does not change eval-mode outputs.
  const auto one_by_one = predict(params, data, 1);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(pdnet::testing::max_abs_diff(maps[i], one_by_one[i]), 1e-6);
}

TEST(Logs, CsvLayout) {
  std::vector<EpochLog> log{{0, 0.001, 0.5, 0.25, 0.75}, {1, 0.0001, 0.25, std::nullopt, std::nullopt}};
  std::ostringstream out;
  write_log_csv(log, out);
  EXPECT_EQ(out.str(), "epoch,lr,train_loss,test_mae,test_fbeta\n0,0.001,0.5,0.25,0.75\n1,1e-04,0.25,,\n");
}

TEST(Ablation, SixRowsAndAlphaOffMatchesPNet) {
  const auto split = gen_dataset(tiny_scene(), 12, 7);
  AblationConfig cfg;
  cfg.pretrain = quick(1);
  cfg.train = quick(1);
  cfg.master = tiny_master();
  cfg.subnet = tiny_subnet();
  cfg.alpha_zero_row = true;
  const auto rows = run_ablation(cfg, split.train, split.test);
  ASSERT_EQ(rows.size(), 7u);
  const char* names[] = {"MNet", "PNet", "DNet", "PDNet", "PDNet", "PDNet", "PDNet"};
  const char* alphas[] = {"-", "-", "1", "1", "0.3;0.5;0.7;0.9", "1.3;1.5;1.7;1.9", "0"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].variant, names[i]);
    EXPECT_EQ(rows[i].alpha, alphas[i]);
    EXPECT_EQ(rows[i].seed, "0");
    EXPECT_GE(rows[i].fbeta, 0.0);
    EXPECT_LE(rows[i].fbeta, 1.0);
  }
  EXPECT_EQ(rows[6].fbeta, rows[1].fbeta);
  EXPECT_EQ(rows[6].mae, rows[1].mae);
}

TEST(Ablation, SeedsAddMeanRowsAndJobsAgree) {
  const auto split = gen_dataset(tiny_scene(), 10, 8);
  AblationConfig cfg;
  cfg.pretrain = quick(1);
  cfg.train = quick(1);
  cfg.master = tiny_master();
  cfg.subnet = tiny_subnet();
  cfg.alpha_groups = false;
  cfg.seeds = {1, 2};
  const auto rows = run_ablation(cfg, split.train, split.test);
  ASSERT_EQ(rows.size(), 12u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[8 + i].seed, "mean");
    EXPECT_NEAR(rows[8 + i].fbeta, 0.5 * (rows[i].fbeta + rows[4 + i].fbeta), 1e-12);
  }
  cfg.jobs = 3;
  const auto parallel = run_ablation(cfg, split.train, split.test);
  std::ostringstream a, b;
  write_ablation_csv(rows, a);
  write_ablation_csv(parallel, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, 28), "variant,alpha,fbeta,mae,seed");
}
