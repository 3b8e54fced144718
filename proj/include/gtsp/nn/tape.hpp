#pragma once

// Eager reverse-mode differentiation. Every operation computes its value
// immediately and, when the tape records gradients, appends a closure that
// propagates the output gradient to its inputs. backward() replays the
// closures in reverse creation order.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gtsp/nn/tensor.hpp"

namespace gtsp::nn {

class Tape;

// Handle to a matrix-valued node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  [[nodiscard]] bool valid() const { return tape != nullptr && id >= 0; }
  [[nodiscard]] int rows() const;
  [[nodiscard]] int cols() const;
  [[nodiscard]] std::span<const double> value() const;
  [[nodiscard]] double item() const;
};

class Tape {
 public:
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const { return record_; }

  Var constant(int rows, int cols, std::vector<double> values);
  Var constant(const Tensor& t);
  // Differentiable leaf whose gradient can be read back with grad().
  Var leaf(int rows, int cols, std::vector<double> values);
  // Leaf that reads `values` in place and accumulates its gradient into `grad_sink`
  // (both must outlive the tape). grad_sink may be empty for a frozen leaf.
  Var external(int rows, int cols, std::span<const double> values, std::span<double> grad_sink);

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws ContractError when loss is not 1x1.
  void backward(Var loss);

  [[nodiscard]] std::span<const double> value(int id) const;
  [[nodiscard]] int rows(int id) const { return nodes_[static_cast<std::size_t>(id)].rows; }
  [[nodiscard]] int cols(int id) const { return nodes_[static_cast<std::size_t>(id)].cols; }
  [[nodiscard]] bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Gradient of a node after backward (zeros if nothing reached it).
  [[nodiscard]] std::vector<double> grad(Var v) const;
  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

  // Op-construction interface used by ops.cpp.
  Var push(int rows, int cols, std::vector<double> value, bool needs_grad);
  std::span<double> mutable_value(int id);
  // Gradient buffer of a node, zero-initialised on first access.
  double* grad_ptr(int id);
  void on_backward(std::function<void()> fn);

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    const double* external_value = nullptr;
    std::vector<double> grad;
    double* external_grad = nullptr;
    bool needs_grad = false;
  };
  struct Step {
    int after_node;
    std::function<void()> fn;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Step> steps_;
};

// --- differentiable operations (inputs must live on the same tape) ---

// x[r,in] * w[in,out] (+ b[1,out]). Shape mismatch throws ShapeError naming both shapes.
Var linear(Var x, Var w, Var b = {});
Var matmul(Var a, Var b);
// a[r,k] * b[c,k]^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
// a[r,c] + row[1,c] broadcast over rows.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
// Per-row normalisation over the last axis, then gamma * x_hat + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Row-wise softmax; masked entries (allowed[i] == 0) are -inf before normalisation
// and come out exactly 0. An all-masked row throws ContractError.
Var softmax(Var x, std::span<const std::uint8_t> allowed = {});
// Row-wise log-softmax with the same masking rule; masked entries are -inf.
Var log_softmax(Var x, std::span<const std::uint8_t> allowed = {});
// Multi-head scaled dot-product attention core over already projected q[rq,d],
// k[rk,d], v[rk,d]. allowed, when given, is rq*rk. Optionally returns the weights.
Var attention(Var q, Var k, Var v, int heads, std::span<const std::uint8_t> allowed = {},
              std::vector<double>* weights_out = nullptr);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, int begin, int count);
Var gather_rows(Var a, std::span<const int> rows);
Var mean_rows(Var a);
// out[r] = a[r, cols[r]] as an [r,1] column.
Var pick(Var a, std::span<const int> cols);
Var sum(Var a);
// sum_i w[i] * a[i] over all elements, as a 1x1.
Var weighted_sum(Var a, std::span<const double> weights);

}  // namespace gtsp::nn
