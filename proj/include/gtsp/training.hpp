#pragma once

// REINFORCE with a per-instance shared baseline over k multi-start rollouts.
//
// For a batch of N instances with k sampled rollouts each,
//   loss = -(1 / kN) * sum_i sum_j (R_ij - b_i) * log p(pi_ij),  b_i = mean_j R_ij,
// where R is the negative tour cost. Gradients go through global-norm clipping
// and one Adam step at the epoch's cosine learning rate.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtsp/instance.hpp"
#include "gtsp/nn/params.hpp"
#include "gtsp/policy.hpp"
#include "gtsp/report.hpp"

namespace gtsp {

struct TrainConfig {
  PolicyConfig policy;
  int epochs = 200;
  int instances_per_epoch = 100000;
  int batch_size = 128;
  int rollouts = 0;  // 0: default_rollouts(instances.n)
  double base_lr = 1e-4;
  double weight_decay = 1e-6;
  double clip_norm = 1.0;
  GeneratorSpec instances{20, 4, Family::scale, 0, {}};
  GeneratorSpec validation{20, 4, Family::scale, 0x5EED0000, {}};  // seed of validation instance 0
  int validation_count = 30;
  std::uint64_t seed = 1;
  // Worker threads for the per-instance forward/backward; results do not
  // depend on it. 0 reads GTSP_THREADS (default 1).
  int threads = 0;

  static TrainConfig desk();
  static TrainConfig paper();

  [[nodiscard]] int effective_rollouts() const;
  [[nodiscard]] int batches_per_epoch() const;
  // Throws ValidationError naming the offending field.
  void validate() const;
  [[nodiscard]] std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Mean of the rewards, computed as r_0 + sum_j (r_j - r_0) / k so equal
// rewards return that reward exactly. Throws ContractError on empty input.
double shared_baseline(std::span<const double> rewards);

struct InstanceLoss {
  double loss = 0.0;  // this instance's share of the batch loss
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<std::vector<int>> tours;
};

// Samples k rollouts for one instance and accumulates the gradient of
//   -(1 / (k * batch)) * sum_j adv_j * log p(pi_j)
// into grads. Zero advantages contribute nothing, exactly.
InstanceLoss reinforce_instance(const Policy& policy, const GtspInstance& instance, int k, int batch, Rng& rng,
                                nn::GradBuffer& grads);

struct BatchStats {
  double loss = 0.0;
  double mean_reward = 0.0;
  double grad_norm = 0.0;       // before clipping
  double clipped_norm = 0.0;    // after clipping
  double update_norm = 0.0;     // L2 norm of the parameter change
};

// One update on `batch`; instance i samples with Rng(sample_seeds[i]).
// Throws NumericError (with the instance seed) on a non-finite loss or gradient.
BatchStats reinforce_update(Policy& policy, std::span<const GtspInstance> batch,
                            std::span<const std::uint64_t> sample_seeds, const TrainConfig& config, double lr);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double val_cost = 0.0;
  double train_reward = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::optional<double> initial_val_cost;  // untrained policy, when training started from scratch
};

// CSV header: epoch,val_cost,train_reward,lr,seconds
void write_train_log(std::ostream& out, const TrainLog& log);
TrainLog read_train_log(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  bool resume = false;            // continue from out_dir/last.ckpt
  std::function<void(const EpochRecord&)> on_epoch;
};

// Checkpoints: out_dir/epoch_NNN.ckpt and out_dir/last.ckpt after every epoch;
// log: out_dir/train_log.csv. Resume requires an identical configuration
// (ValidationError otherwise).
TrainLog train(Policy& policy, const TrainConfig& config, const TrainOptions& options = {});

std::vector<GtspInstance> validation_set(const TrainConfig& config);

// Greedy (best of default_rollouts) or sampled (best of that many samples) decoding per instance.
MethodResult evaluate(const Policy& policy, std::span<const GtspInstance> dataset,
                      DecodeMode mode = DecodeMode::greedy, std::uint64_t sample_seed = 0);

void save_policy(const std::filesystem::path& path, const Policy& policy, int epoch = 0,
                 const std::string& train_json = "");
// Rebuilds the architecture from the checkpoint's config and loads the weights.
Policy load_policy(const std::filesystem::path& path);

int thread_count_from_env();

}  // namespace gtsp
