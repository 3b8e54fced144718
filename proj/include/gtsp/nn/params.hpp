#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtsp/nn/tape.hpp"
#include "gtsp/nn/tensor.hpp"

namespace gtsp {
class Rng;
}

namespace gtsp::nn {

struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  // Adam moments.
  std::vector<double> m;
  std::vector<double> v;
};

// Named parameters in registration order, plus optimizer state.
class ParameterStore {
 public:
  // Throws ValidationError on a duplicate name.
  int add(std::string name, Tensor value);
  // Weight [in, out] uniform in +-1/sqrt(in).
  int add_linear_weight(std::string name, std::size_t in, std::size_t out, Rng& rng);
  int add_constant(std::string name, Shape shape, double fill);
  int add_uniform(std::string name, Shape shape, double bound, Rng& rng);

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] Parameter& operator[](std::size_t i) { return params_[i]; }
  [[nodiscard]] const Parameter& operator[](std::size_t i) const { return params_[i]; }
  [[nodiscard]] int find(const std::string& name) const;  // -1 when absent
  [[nodiscard]] std::size_t element_count() const;

  [[nodiscard]] auto begin() { return params_.begin(); }
  [[nodiscard]] auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  void zero_grad();
  // Marks gradients as populated; adam_step refuses to run otherwise.
  void mark_grads_ready() { grads_ready_ = true; }
  [[nodiscard]] bool grads_ready() const { return grads_ready_; }
  void consume_grads() { grads_ready_ = false; }

  std::uint64_t adam_steps = 0;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> index_;
  bool grads_ready_ = false;
};

// Gradient accumulator shaped like a store; one per worker/chunk.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParameterStore& store);
  [[nodiscard]] std::span<double> operator[](std::size_t i) { return grads_[i]; }
  [[nodiscard]] std::span<const double> operator[](std::size_t i) const { return grads_[i]; }
  [[nodiscard]] std::size_t size() const { return grads_.size(); }
  void zero();
  // this += other, parameter by parameter.
  void add(const GradBuffer& other);
  // Copies into the store's grad fields and marks them ready.
  void store_into(ParameterStore& store) const;

 private:
  std::vector<std::vector<double>> grads_;
};

// Binds parameters onto a tape, creating each leaf at most once.
class Binder {
 public:
  // grads may be null for inference-only tapes.
  Binder(Tape& tape, const ParameterStore& store, GradBuffer* grads);
  Var operator()(int param);
  [[nodiscard]] Tape& tape() const { return tape_; }
  [[nodiscard]] const ParameterStore& store() const { return store_; }

 private:
  Tape& tape_;
  const ParameterStore& store_;
  GradBuffer* grads_;
  std::vector<int> bound_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam with decoupled weight decay:
//   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
// Throws ContractError unless gradients were marked ready.
void adam_step(ParameterStore& store, double lr, double weight_decay, const AdamConfig& cfg = {});

struct LrSchedule {
  double base_lr = 1e-4;
  int total_epochs = 1;
  double min_lr = 0.0;
};

// min + (base - min) * (1 + cos(pi * epoch / total)) / 2; epoch is clamped to
// [0, total] with a warning on stderr.
double cosine_lr(const LrSchedule& schedule, double epoch);

[[nodiscard]] double grad_norm(const ParameterStore& store);
// Rescales all gradients by min(1, max_norm / norm) and returns that factor.
double clip_grad_norm(ParameterStore& store, double max_norm = 1.0);

}  // namespace gtsp::nn
