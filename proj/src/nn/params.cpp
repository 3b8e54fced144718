#include "gtsp/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "gtsp/errors.hpp"
#include "gtsp/rng.hpp"

namespace gtsp::nn {

int ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ValidationError("parameter '" + name + "' registered twice");
  const int id = static_cast<int>(params_.size());
  index_.emplace(name, id);
  Parameter p;
  p.name = std::move(name);
  const std::size_t n = value.size();
  p.value = std::move(value);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  params_.push_back(std::move(p));
  return id;
}

int ParameterStore::add_linear_weight(std::string name, std::size_t in, std::size_t out, Rng& rng) {
  return add_uniform(std::move(name), {in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

int ParameterStore::add_constant(std::string name, Shape shape, double fill) {
  const std::size_t n = nn::element_count(shape);
  return add(std::move(name), Tensor(std::move(shape), std::vector<double>(n, fill)));
}

int ParameterStore::add_uniform(std::string name, Shape shape, double bound, Rng& rng) {
  std::vector<double> values(nn::element_count(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return add(std::move(name), Tensor(std::move(shape), std::move(values)));
}

int ParameterStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::ranges::fill(p.grad, 0.0);
  grads_ready_ = false;
}

GradBuffer::GradBuffer(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store) grads_.emplace_back(p.value.size(), 0.0);
}

void GradBuffer::zero() {
  for (auto& g : grads_) std::ranges::fill(g, 0.0);
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    for (std::size_t j = 0; j < grads_[i].size(); ++j) grads_[i][j] += other.grads_[i][j];
  }
}

void GradBuffer::store_into(ParameterStore& store) const {
  for (std::size_t i = 0; i < grads_.size(); ++i) store[i].grad = grads_[i];
  store.mark_grads_ready();
}

Binder::Binder(Tape& tape, const ParameterStore& store, GradBuffer* grads)
    : tape_(tape), store_(store), grads_(grads), bound_(store.size(), -1) {}

Var Binder::operator()(int param) {
  int& slot = bound_[static_cast<std::size_t>(param)];
  if (slot < 0) {
    const Parameter& p = store_[static_cast<std::size_t>(param)];
    const auto rows = static_cast<int>(p.value.rows());
    const auto cols = static_cast<int>(p.value.cols());
    std::span<double> sink;
    if (grads_ != nullptr && tape_.recording()) sink = (*grads_)[static_cast<std::size_t>(param)];
    slot = tape_.external(rows, cols, p.value.values, sink).id;
  }
  return Var{&tape_, slot};
}

void adam_step(ParameterStore& store, double lr, double weight_decay, const AdamConfig& cfg) {
  if (!store.grads_ready()) throw ContractError("adam_step: gradients have not been populated");
  ++store.adam_steps;
  const double t = static_cast<double>(store.adam_steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store) {
    auto& w = p.value.values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.m[i] / bc1;
      const double v_hat = p.v[i] / bc2;
      w[i] -= lr * weight_decay * w[i];
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.consume_grads();
}

double cosine_lr(const LrSchedule& s, double epoch) {
  if (epoch < 0.0 || epoch > s.total_epochs) {
    std::clog << "warning: cosine_lr epoch " << epoch << " outside [0, " << s.total_epochs << "], clamping\n";
    epoch = std::clamp(epoch, 0.0, static_cast<double>(s.total_epochs));
  }
  const double frac = s.total_epochs > 0 ? epoch / s.total_epochs : 1.0;
  return s.min_lr + (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

double grad_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const auto& p : store) {
    for (double g : p.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : store) {
    for (double& g : p.grad) g *= factor;
  }
  return factor;
}

}  // namespace gtsp::nn
