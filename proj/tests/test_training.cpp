#include <doctest.h>

#include "fd.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "gtsp/errors.hpp"
#include "gtsp/io.hpp"
#include "gtsp/nn/checkpoint.hpp"
#include "gtsp/rng.hpp"
#include "gtsp/training.hpp"

using namespace gtsp;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = TrainConfig::desk();
  c.policy.embed_dim = 8;
  c.policy.heads = 2;
  c.policy.graph_layers = 1;
  c.policy.image_layers = 1;
  c.policy.fusion_layers = 1;
  c.policy.bottleneck_tokens = 2;
  c.policy.patch_size = 4;
  c.epochs = 3;
  c.instances_per_epoch = 12;
  c.batch_size = 5;
  c.rollouts = 3;
  c.instances = {10, 4, Family::random, 0, {}};
  c.validation = {10, 4, Family::random, 500, {}};
  c.validation_count = 4;
  c.seed = 77;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gtsp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("shared baseline examples") {
  CHECK(shared_baseline(std::vector<double>{-1.0, -3.0}) == -2.0);
  CHECK(shared_baseline(std::vector<double>{-5.0}) == -5.0);
  const std::vector<double> same(7, -1.2345678901234567);
  CHECK(shared_baseline(same) == same[0]);
  CHECK(shared_baseline(std::vector<double>{0.1, 0.2, 0.3}) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(shared_baseline(std::vector<double>{}), ContractError);
}

TEST_CASE("presets") {
  const auto desk = TrainConfig::desk();
  CHECK(desk.policy.embed_dim == 64);
  CHECK(desk.policy.heads == 4);
  CHECK(desk.policy.graph_layers == 2);
  CHECK(desk.policy.image_layers == 2);
  CHECK(desk.policy.fusion_layers == 2);
  CHECK(desk.instances.n == 20);
  CHECK(desk.instances.m == 4);
  CHECK(desk.effective_rollouts() == 5);
  CHECK(desk.epochs == 20);
  CHECK(desk.instances_per_epoch == 2000);
  CHECK(desk.batch_size == 64);
  CHECK(desk.batches_per_epoch() == 32);
  CHECK(desk.validation_count == 30);
  const auto paper = TrainConfig::paper();
  CHECK(paper.epochs == 200);
  CHECK(paper.instances_per_epoch == 100000);
  CHECK(paper.batch_size == 128);
  CHECK(paper.policy.embed_dim == 128);
  CHECK(paper.base_lr == 1e-4);
  CHECK(paper.weight_decay == 1e-6);
  CHECK(paper.clip_norm == 1.0);
  CHECK(paper.batches_per_epoch() == 782);
  auto bad = desk;
  bad.epochs = 0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("epochs"), ValidationError);
  bad = desk;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK(TrainConfig::from_json(desk.to_json()).to_json() == desk.to_json());
}

TEST_CASE("equal rollout rewards give exactly zero gradient") {
  // Singleton clusters on a 3-4-5 triangle: the two multi-start rollouts are
  // reversals of each other and their costs are exact binary fractions.
  const auto cfg = tiny_config();
  Policy p(cfg.policy, 1);
  GtspInstance inst;
  inst.coords = {{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.375}};
  inst.cluster_of = {0, 1, 2};
  inst.cluster_count = 3;
  Rng rng(1);
  nn::GradBuffer grads(p.params());
  const auto loss = reinforce_instance(p, inst, 2, 1, rng, grads);
  REQUIRE(loss.tours.size() == 2);
  CHECK(loss.tours[0] != loss.tours[1]);
  CHECK(loss.rewards[0] == -1.5);
  for (double a : loss.advantages) CHECK(a == 0.0);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double g : grads[i]) REQUIRE(g == 0.0);
  }
}

TEST_CASE("k = 1 gives zero gradient for every instance") {
  auto cfg = tiny_config();
  cfg.rollouts = 1;
  cfg.weight_decay = 0.0;
  Policy p(cfg.policy, 2);
  const auto batch = generate_dataset(cfg.instances, 4);
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto before = p.params()[0].value.values;
  const auto stats = reinforce_update(p, batch, seeds, cfg, 1e-3);
  CHECK(stats.grad_norm == 0.0);
  CHECK(stats.clipped_norm == 0.0);
  CHECK(stats.update_norm == 0.0);
  CHECK(p.params()[0].value.values == before);
}

TEST_CASE("reinforce loss gradient matches finite differences (n=10, m=4, d=8)") {
  const auto cfg = tiny_config();
  Policy p(cfg.policy, 3);
  gtsp::testing::jitter(p.params(), 3);
  const auto inst = generate_instance({10, 4, Family::random, 3, {}});
  Rng rng(9);
  nn::GradBuffer grads(p.params());
  const auto sampled = reinforce_instance(p, inst, 3, 2, rng, grads);
  // Loss with the sampled tours and advantages held fixed.
  std::vector<double> weights;
  for (double a : sampled.advantages) weights.push_back(-a / (3.0 * 2.0));
  auto loss_of = [&] {
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    return nn::weighted_sum(p.evaluate_tours(bind, enc, inst, sampled.tours).log_probs, weights).item();
  };
  CHECK(loss_of() == doctest::Approx(sampled.loss).epsilon(1e-12));
  double diff_sq = 0.0, ref_sq = 0.0;
  for (std::size_t i = 0; i < p.params().size(); ++i) {
    auto& vals = p.params()[i].value.values;
    const std::size_t stride = std::max<std::size_t>(1, vals.size() / 5);
    for (std::size_t e = 0; e < vals.size(); e += stride) {
      const double orig = vals[e];
      vals[e] = orig + 1e-5;
      const double up = loss_of();
      vals[e] = orig - 1e-5;
      const double down = loss_of();
      vals[e] = orig;
      const double numeric = (up - down) / 2e-5;
      diff_sq += (grads[i][e] - numeric) * (grads[i][e] - numeric);
      ref_sq += numeric * numeric;
    }
  }
  REQUIRE(ref_sq > 0.0);
  CHECK(std::sqrt(diff_sq / ref_sq) < 1e-4);
}

TEST_CASE("update statistics and clipping") {
  auto cfg = tiny_config();
  cfg.clip_norm = 1e-3;
  Policy p(cfg.policy, 4);
  const auto batch = generate_dataset(cfg.instances, 5);
  const std::vector<std::uint64_t> seeds{5, 6, 7, 8, 9};
  const auto stats = reinforce_update(p, batch, seeds, cfg, 1e-3);
  CHECK(stats.grad_norm > 1e-3);
  CHECK(stats.clipped_norm == doctest::Approx(1e-3).epsilon(1e-9));
  CHECK(stats.update_norm > 0.0);
  CHECK(p.params().adam_steps == 1);
  CHECK(std::isfinite(stats.mean_reward));
  CHECK(stats.mean_reward < 0.0);
}

TEST_CASE("gradients do not depend on the thread count") {
  auto cfg = tiny_config();
  const auto batch = generate_dataset(cfg.instances, 17);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 17; ++i) seeds.push_back(100 + i);
  cfg.threads = 1;
  Policy a(cfg.policy, 5);
  reinforce_update(a, batch, seeds, cfg, 1e-3);
  cfg.threads = 3;
  Policy b(cfg.policy, 5);
  reinforce_update(b, batch, seeds, cfg, 1e-3);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value.values == b.params()[i].value.values);
}

TEST_CASE("training is deterministic, logs every epoch and follows the cosine schedule") {
  const auto cfg = tiny_config();
  const auto dir_a = scratch("train_a");
  const auto dir_b = scratch("train_b");
  Policy a(cfg.policy, cfg.seed);
  const auto log_a = train(a, cfg, {dir_a, false, {}});
  Policy b(cfg.policy, cfg.seed);
  const auto log_b = train(b, cfg, {dir_b, false, {}});
  REQUIRE(log_a.records.size() == 3);
  REQUIRE(log_a.initial_val_cost.has_value());
  const nn::LrSchedule sched{cfg.base_lr, cfg.epochs, 0.0};
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(log_a.records[e].epoch == static_cast<int>(e) + 1);
    CHECK(log_a.records[e].val_cost == log_b.records[e].val_cost);
    CHECK(log_a.records[e].train_reward == log_b.records[e].train_reward);
    CHECK(log_a.records[e].lr == nn::cosine_lr(sched, static_cast<double>(e)));
  }
  CHECK(read_file(dir_a / "last.ckpt") == read_file(dir_b / "last.ckpt"));
  CHECK(read_file(dir_a / "epoch_002.ckpt") == read_file(dir_b / "epoch_002.ckpt"));
  const auto csv = read_train_log(dir_a / "train_log.csv");
  REQUIRE(csv.records.size() == 3);
  CHECK(csv.records[2].val_cost == log_a.records[2].val_cost);
  CHECK(read_file(dir_a / "train_log.csv").rfind("epoch,val_cost,train_reward,lr,seconds\n", 0) == 0);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("resuming reproduces the next epoch bit-identically") {
  auto cfg = tiny_config();
  cfg.epochs = 4;
  const auto full_dir = scratch("resume_full");
  Policy full(cfg.policy, cfg.seed);
  const auto full_log = train(full, cfg, {full_dir, false, {}});

  const auto dir = scratch("resume_part");
  std::filesystem::create_directories(dir);
  // Simulate an interrupted run: keep the epoch-2 checkpoint and the first two log rows.
  std::filesystem::copy_file(full_dir / "epoch_002.ckpt", dir / "last.ckpt");
  TrainLog partial;
  partial.records.assign(full_log.records.begin(), full_log.records.begin() + 2);
  std::ostringstream csv;
  write_train_log(csv, partial);
  write_file(dir / "train_log.csv", csv.str());

  Policy resumed(cfg.policy, cfg.seed);
  const auto log = train(resumed, cfg, {dir, true, {}});
  REQUIRE(log.records.size() == 4);
  for (std::size_t e = 2; e < 4; ++e) {
    CHECK(log.records[e].val_cost == full_log.records[e].val_cost);
    CHECK(log.records[e].train_reward == full_log.records[e].train_reward);
    CHECK(log.records[e].lr == full_log.records[e].lr);
  }
  for (std::size_t i = 0; i < full.params().size(); ++i) {
    CHECK(resumed.params()[i].value.values == full.params()[i].value.values);
  }

  auto other = cfg;
  other.base_lr = 5e-4;
  Policy conflict(other.policy, other.seed);
  CHECK_THROWS_WITH_AS(train(conflict, other, {dir, true, {}}), doctest::Contains("resume conflict"), ValidationError);
  std::filesystem::remove_all(full_dir);
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate") {
  const auto cfg = tiny_config();
  const Policy p(cfg.policy, 6);
  const auto data = generate_dataset({12, 4, Family::random, 40, {}}, 30);
  const auto r = evaluate(p, data);
  REQUIRE(r.costs.size() == 30);
  double mean = 0.0;
  for (double c : r.costs) mean += c / 30.0;
  CHECK(std::fabs(r.mean_obj() - mean) <= 1e-12);
  const auto again = evaluate(p, data);
  CHECK(again.costs == r.costs);
  const auto sampled = evaluate(p, data, DecodeMode::sample, 3);
  CHECK(sampled.costs.size() == 30);
  CHECK(evaluate(p, data, DecodeMode::sample, 3).costs == sampled.costs);
}

TEST_CASE("GTSP_THREADS parsing") {
  ::setenv("GTSP_THREADS", "3", 1);
  CHECK(thread_count_from_env() == 3);
  ::setenv("GTSP_THREADS", "zero", 1);
  CHECK(thread_count_from_env() == 1);
  ::unsetenv("GTSP_THREADS");
  CHECK(thread_count_from_env() == 1);
}
