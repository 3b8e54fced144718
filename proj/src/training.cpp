#include "gtsp/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include "gtsp/errors.hpp"
#include "gtsp/io.hpp"
#include "gtsp/nn/checkpoint.hpp"
#include "gtsp/rng.hpp"

namespace gtsp {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kChunk = 8;  // instances per gradient buffer
constexpr std::uint64_t kStreamInstances = 1;
constexpr std::uint64_t kStreamSampling = 2;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

nlohmann::ordered_json spec_json(const GeneratorSpec& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["m"] = s.m;
  j["family"] = to_string(s.family);
  j["seed"] = s.seed;
  return j;
}

GeneratorSpec spec_from_json(const nlohmann::json& j, GeneratorSpec fallback) {
  fallback.n = j.value("n", fallback.n);
  fallback.m = j.value("m", fallback.m);
  if (j.contains("family")) fallback.family = parse_family(j.at("family").get<std::string>());
  fallback.seed = j.value("seed", fallback.seed);
  return fallback;
}

std::string checkpoint_json(const Policy& policy, const std::string& train_json) {
  nlohmann::ordered_json j;
  j["policy"] = nlohmann::ordered_json::parse(policy.config().to_json());
  if (!train_json.empty()) j["train"] = nlohmann::ordered_json::parse(train_json);
  return j.dump();
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i = next++; i < count && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, count); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.policy.embed_dim = 64;
  c.policy.heads = 4;
  c.policy.graph_layers = 2;
  c.policy.image_layers = 2;
  c.policy.fusion_layers = 2;
  c.epochs = 20;
  c.instances_per_epoch = 2000;
  c.batch_size = 64;
  c.rollouts = 5;
  c.instances = {20, 4, Family::scale, 0, {}};
  c.validation = {20, 4, Family::scale, 0x5EED0000, {}};
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 200;
  c.instances_per_epoch = 100000;
  c.batch_size = 128;
  c.rollouts = 0;
  c.base_lr = 1e-4;
  c.weight_decay = 1e-6;
  c.clip_norm = 1.0;
  return c;
}

int TrainConfig::effective_rollouts() const { return rollouts > 0 ? rollouts : default_rollouts(instances.n); }

int TrainConfig::batches_per_epoch() const { return (instances_per_epoch + batch_size - 1) / batch_size; }

void TrainConfig::validate() const {
  policy.validate();
  if (epochs < 1) throw ValidationError("epochs must be >= 1, got " + std::to_string(epochs));
  if (instances_per_epoch < 1) {
    throw ValidationError("instances_per_epoch must be >= 1, got " + std::to_string(instances_per_epoch));
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1, got " + std::to_string(batch_size));
  if (rollouts < 0) throw ValidationError("rollouts must be >= 1 (or 0 for the default), got " + std::to_string(rollouts));
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ValidationError("base_lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ValidationError("weight_decay must be >= 0");
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) throw ValidationError("clip_norm must be positive");
  if (validation_count < 1) throw ValidationError("validation_count must be >= 1");
  if (threads < 0) throw ValidationError("threads must be >= 0");
  validate_spec(instances);
  validate_spec(validation);
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["instances_per_epoch"] = instances_per_epoch;
  j["batch_size"] = batch_size;
  j["rollouts"] = effective_rollouts();
  j["base_lr"] = base_lr;
  j["weight_decay"] = weight_decay;
  j["clip_norm"] = clip_norm;
  j["instances"] = spec_json(instances);
  j["validation"] = spec_json(validation);
  j["validation_count"] = validation_count;
  j["seed"] = seed;
  j["policy"] = nlohmann::ordered_json::parse(policy.to_json());
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.epochs = j.value("epochs", c.epochs);
    c.instances_per_epoch = j.value("instances_per_epoch", c.instances_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.rollouts = j.value("rollouts", c.rollouts);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("instances")) c.instances = spec_from_json(j.at("instances"), c.instances);
    if (j.contains("validation")) c.validation = spec_from_json(j.at("validation"), c.validation);
    c.validation_count = j.value("validation_count", c.validation_count);
    c.seed = j.value("seed", c.seed);
    if (j.contains("policy")) c.policy = PolicyConfig::from_json(j.at("policy").dump());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double shared_baseline(std::span<const double> rewards) {
  if (rewards.empty()) throw ContractError("shared_baseline: no rewards");
  const double r0 = rewards[0];
  double shift = 0.0;
  for (double r : rewards) shift += r - r0;
  return r0 + shift / static_cast<double>(rewards.size());
}

InstanceLoss reinforce_instance(const Policy& policy, const GtspInstance& inst, int k, int batch, Rng& rng,
                                nn::GradBuffer& grads) {
  nn::Tape tape(true);
  nn::Binder bind(tape, policy.params(), &grads);
  const EncoderOutput enc = policy.encode(bind, inst);
  const RolloutBatch rollouts = policy.rollout(bind, enc, inst, k, DecodeMode::sample, &rng);

  InstanceLoss out;
  for (const auto& r : rollouts.results) {
    out.rewards.push_back(r.reward);
    out.tours.push_back(r.tour.nodes);
  }
  const double b = shared_baseline(out.rewards);
  const double norm = static_cast<double>(out.rewards.size()) * static_cast<double>(batch);
  std::vector<double> weights;
  bool any = false;
  for (double r : out.rewards) {
    out.advantages.push_back(r - b);
    weights.push_back(-(r - b) / norm);
    any = any || weights.back() != 0.0;
  }
  const nn::Var loss = nn::weighted_sum(rollouts.log_probs, weights);
  out.loss = loss.item();
  if (any && std::isfinite(out.loss)) tape.backward(loss);
  return out;
}

BatchStats reinforce_update(Policy& policy, std::span<const GtspInstance> batch,
                            std::span<const std::uint64_t> sample_seeds, const TrainConfig& config, double lr) {
  if (batch.empty()) throw ContractError("reinforce_update: empty batch");
  if (sample_seeds.size() != batch.size()) throw ContractError("reinforce_update: one sampling seed per instance");
  auto& store = policy.params();
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<nn::GradBuffer> buffers(chunks, nn::GradBuffer(store));
  std::vector<InstanceLoss> losses(batch.size());
  const int threads = config.threads > 0 ? config.threads : thread_count_from_env();
  const int k = config.effective_rollouts();
  const int n_batch = static_cast<int>(batch.size());

  parallel_for(chunks, threads, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(batch.size(), (c + 1) * kChunk); ++i) {
      Rng rng(sample_seeds[i]);
      losses[i] = reinforce_instance(policy, batch[i], k, n_batch, rng, buffers[c]);
      if (!std::isfinite(losses[i].loss)) {
        throw NumericError("non-finite loss at optimizer step " + std::to_string(store.adam_steps + 1) +
                           ", batch position " + std::to_string(i) + ", instance seed " +
                           std::to_string(batch[i].seed) + ", sampling seed " + std::to_string(sample_seeds[i]));
      }
    }
  });

  for (std::size_t c = 1; c < chunks; ++c) buffers[0].add(buffers[c]);
  buffers[0].store_into(store);

  BatchStats stats;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  for (const auto& l : losses) {
    stats.loss += l.loss;
    for (double r : l.rewards) reward_sum += r;
    reward_count += l.rewards.size();
  }
  stats.mean_reward = reward_sum / static_cast<double>(reward_count);
  stats.grad_norm = nn::grad_norm(store);
  if (!std::isfinite(stats.grad_norm)) {
    throw NumericError("non-finite gradient at optimizer step " + std::to_string(store.adam_steps + 1) +
                       ", first instance seed " + std::to_string(batch[0].seed));
  }
  nn::clip_grad_norm(store, config.clip_norm);
  stats.clipped_norm = nn::grad_norm(store);

  std::vector<std::vector<double>> before;
  before.reserve(store.size());
  for (const auto& p : store) before.push_back(p.value.values);
  nn::adam_step(store, lr, config.weight_decay);
  double update_sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& now = store[i].value.values;
    for (std::size_t e = 0; e < now.size(); ++e) {
      const double d = now[e] - before[i][e];
      update_sq += d * d;
    }
  }
  stats.update_norm = std::sqrt(update_sq);
  return stats;
}

void write_train_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,val_cost,train_reward,lr,seconds\n";
  for (const auto& r : log.records) {
    out << r.epoch << ',' << format_real(r.val_cost) << ',' << format_real(r.train_reward) << ','
        << format_real(r.lr) << ',' << format_real(r.seconds, 6) << '\n';
  }
}

TrainLog read_train_log(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  TrainLog log;
  if (!std::getline(in, line) || line != "epoch,val_cost,train_reward,lr,seconds") {
    throw ParseError(path.string() + ": line 1: expected the train log header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochRecord r;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    std::istringstream row(line);
    if (!(row >> r.epoch >> c1 >> r.val_cost >> c2 >> r.train_reward >> c3 >> r.lr >> c4 >> r.seconds) || c1 != ',' ||
        c2 != ',' || c3 != ',' || c4 != ',') {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": malformed record");
    }
    log.records.push_back(r);
  }
  return log;
}

std::vector<GtspInstance> validation_set(const TrainConfig& config) {
  return generate_dataset(config.validation, config.validation_count);
}

MethodResult evaluate(const Policy& policy, std::span<const GtspInstance> dataset, DecodeMode mode,
                      std::uint64_t sample_seed) {
  MethodResult out;
  out.method = "mmfl";
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const GtspInstance& inst = dataset[i];
    Tour tour;
    if (mode == DecodeMode::greedy) {
      tour = greedy_solve(policy, inst);
    } else {
      nn::Tape tape(false);
      nn::Binder bind(tape, policy.params(), nullptr);
      const EncoderOutput enc = policy.encode(bind, inst);
      const int k =
          std::min(default_rollouts(inst.node_count()), static_cast<int>(multistart_candidates(inst).size()));
      Rng rng(derive_seed(sample_seed, {i}));
      const RolloutBatch batch = policy.rollout(bind, enc, inst, k, DecodeMode::sample, &rng);
      tour = std::ranges::min_element(batch.results, {}, [](const RolloutResult& r) { return r.tour.cost; })->tour;
    }
    const TourReport report = validate_tour(inst, tour.nodes);
    if (!report.ok()) throw FeasibilityError("evaluate: policy produced an infeasible tour: " + report.summary());
    out.seeds.push_back(inst.seed);
    out.costs.push_back(tour.cost);
    out.tours.push_back(std::move(tour));
  }
  out.inference_seconds = seconds_since(t0);
  out.end_to_end_seconds = out.inference_seconds;
  return out;
}

void save_policy(const std::filesystem::path& path, const Policy& policy, int epoch, const std::string& train_json) {
  nn::CheckpointHeader h;
  h.seed = policy.seed();
  h.epoch = epoch;
  h.adam_steps = policy.params().adam_steps;
  h.optimizer_state = true;
  h.config_json = checkpoint_json(policy, train_json);
  nn::save_checkpoint(path, policy.params(), h);
}

Policy load_policy(const std::filesystem::path& path) {
  const nn::CheckpointHeader h = nn::read_checkpoint_header(path);
  PolicyConfig cfg;
  try {
    const auto j = nlohmann::json::parse(h.config_json);
    cfg = PolicyConfig::from_json(j.contains("policy") ? j.at("policy").dump() : h.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": checkpoint config: " + e.what());
  }
  Policy policy(cfg, h.seed);
  nn::load_checkpoint(path, policy.params());
  return policy;
}

int thread_count_from_env() {
  const char* v = std::getenv("GTSP_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long t = std::strtol(v, &end, 10);
  if (*end != '\0' || t < 1 || t > 1024) {
    std::clog << "warning: ignoring GTSP_THREADS=" << v << " (expected an integer in [1, 1024])\n";
    return 1;
  }
  return static_cast<int>(t);
}

TrainLog train(Policy& policy, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (!(policy.config() == config.policy)) throw ValidationError("train: policy architecture differs from the config");
  const std::string train_json = config.to_json();
  const bool write = !options.out_dir.empty();
  if (write) std::filesystem::create_directories(options.out_dir);
  const auto last_path = options.out_dir / "last.ckpt";
  const auto log_path = options.out_dir / "train_log.csv";

  TrainLog log;
  int start_epoch = 0;
  if (options.resume) {
    if (!write) throw ValidationError("train: resume needs an output directory");
    if (!std::filesystem::exists(last_path)) throw IoError(last_path.string() + ": no checkpoint to resume from");
    const nn::CheckpointHeader h = nn::read_checkpoint_header(last_path);
    const auto stored = nlohmann::json::parse(h.config_json);
    if (!stored.contains("train") || stored.at("train") != nlohmann::json::parse(train_json)) {
      throw ValidationError("train: resume conflict: " + last_path.string() +
                            " was written with a different training configuration");
    }
    if (h.seed != policy.seed()) throw ValidationError("train: resume conflict: checkpoint seed differs");
    nn::load_checkpoint(last_path, policy.params());
    start_epoch = h.epoch;
    if (std::filesystem::exists(log_path)) {
      for (const auto& r : read_train_log(log_path).records) {
        if (r.epoch <= start_epoch) log.records.push_back(r);
      }
    }
    if (static_cast<int>(log.records.size()) != start_epoch) {
      throw ValidationError("train: resume conflict: " + log_path.string() + " does not hold " +
                            std::to_string(start_epoch) + " epoch records");
    }
  }

  const std::vector<GtspInstance> val = validation_set(config);
  if (start_epoch == 0) log.initial_val_cost = evaluate(policy, val).mean_obj();

  const nn::LrSchedule schedule{config.base_lr, config.epochs, 0.0};
  const int batches = config.batches_per_epoch();
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = nn::cosine_lr(schedule, epoch);
    double reward_sum = 0.0;
    int remaining = config.instances_per_epoch;
    for (int b = 0; b < batches; ++b) {
      const int size = std::min(config.batch_size, remaining);
      remaining -= size;
      std::vector<GtspInstance> insts;
      std::vector<std::uint64_t> sample_seeds;
      for (int i = 0; i < size; ++i) {
        const std::initializer_list<std::uint64_t> ids{static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b),
                                                       static_cast<std::uint64_t>(i)};
        GeneratorSpec spec = config.instances;
        spec.seed = derive_seed(derive_seed(config.seed, {kStreamInstances}), ids);
        insts.push_back(generate_instance(spec));
        sample_seeds.push_back(derive_seed(derive_seed(config.seed, {kStreamSampling}), ids));
      }
      try {
        const BatchStats s = reinforce_update(policy, insts, sample_seeds, config, lr);
        reward_sum += s.mean_reward * size;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + ": " + e.what());
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_reward = reward_sum / config.instances_per_epoch;
    rec.val_cost = evaluate(policy, val).mean_obj();
    rec.seconds = seconds_since(t0);
    log.records.push_back(rec);
    if (write) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", rec.epoch);
      save_policy(options.out_dir / name, policy, rec.epoch, train_json);
      save_policy(last_path, policy, rec.epoch, train_json);
      std::ostringstream csv;
      write_train_log(csv, log);
      write_file(log_path, csv.str());
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  return log;
}

}  // namespace gtsp
