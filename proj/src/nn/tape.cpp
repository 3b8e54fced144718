#include "gtsp/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gtsp/errors.hpp"
#include "gtsp/nn/kernels.hpp"

namespace gtsp::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (element_count(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " needs " + std::to_string(element_count(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
}

Tensor Tensor::zeros(Shape s) {
  const std::size_t n = element_count(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

int Var::rows() const { return tape->rows(id); }
int Var::cols() const { return tape->cols(id); }
std::span<const double> Var::value() const { return tape->value(id); }
double Var::item() const { return tape->value(id)[0]; }

Var Tape::push(int rows, int cols, std::vector<double> value, bool needs_grad) {
  Node node;
  node.rows = rows;
  node.cols = cols;
  node.value = std::move(value);
  node.needs_grad = needs_grad && record_;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(int rows, int cols, std::vector<double> values) {
  if (static_cast<std::size_t>(rows) * cols != values.size()) {
    throw ShapeError("constant: shape [" + std::to_string(rows) + "," + std::to_string(cols) + "] needs " +
                     std::to_string(static_cast<std::size_t>(rows) * cols) + " values");
  }
  return push(rows, cols, std::move(values), false);
}

Var Tape::constant(const Tensor& t) {
  return constant(static_cast<int>(t.rows()), static_cast<int>(t.cols()), t.values);
}

Var Tape::leaf(int rows, int cols, std::vector<double> values) {
  Var v = constant(rows, cols, std::move(values));
  nodes_[static_cast<std::size_t>(v.id)].needs_grad = record_;
  return v;
}

Var Tape::external(int rows, int cols, std::span<const double> values, std::span<double> grad_sink) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) throw ShapeError("external: value size mismatch");
  Node node;
  node.rows = rows;
  node.cols = cols;
  node.external_value = values.data();
  if (!grad_sink.empty()) {
    if (grad_sink.size() != values.size()) throw ShapeError("external: gradient sink size mismatch");
    node.external_grad = grad_sink.data();
    node.needs_grad = record_;
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::span<const double> Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.external_value != nullptr) return {n.external_value, static_cast<std::size_t>(n.rows) * n.cols};
  return n.value;
}

std::span<double> Tape::mutable_value(int id) { return nodes_[static_cast<std::size_t>(id)].value; }

double* Tape::grad_ptr(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.external_grad != nullptr) return n.external_grad;
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
  return n.grad.data();
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  const std::size_t len = static_cast<std::size_t>(n.rows) * n.cols;
  if (n.external_grad != nullptr) return {n.external_grad, n.external_grad + len};
  if (n.grad.empty()) return std::vector<double>(len, 0.0);
  return n.grad;
}

void Tape::on_backward(std::function<void()> fn) {
  steps_.push_back(Step{static_cast<int>(nodes_.size()) - 1, std::move(fn)});
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (rows(loss.id) != 1 || cols(loss.id) != 1) {
    throw ContractError("backward: loss must be a scalar, got [" + std::to_string(rows(loss.id)) + "," +
                        std::to_string(cols(loss.id)) + "]");
  }
  if (!record_) throw ContractError("backward: tape was created without gradient recording");
  if (!needs_grad(loss.id)) return;
  grad_ptr(loss.id)[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (it->after_node > loss.id) continue;
    const Node& out = nodes_[static_cast<std::size_t>(it->after_node)];
    if (out.grad.empty() && out.external_grad == nullptr) continue;
    it->fn();
  }
}

namespace {

std::string dims(Var v) { return "[" + std::to_string(v.rows()) + "," + std::to_string(v.cols()) + "]"; }

void same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands live on different tapes");
}

bool any_grad(std::initializer_list<Var> vars) {
  return std::ranges::any_of(vars, [](Var v) { return v.valid() && v.tape->needs_grad(v.id); });
}

std::size_t len(Var v) { return static_cast<std::size_t>(v.rows()) * v.cols(); }

void accumulate(double* dst, const double* src, std::size_t n) {
  kernels::active().axpy(static_cast<int>(n), 1.0, src, dst);
}

}  // namespace

Var linear(Var x, Var w, Var b) {
  same_tape(x, w, "linear");
  if (x.cols() != w.rows()) throw ShapeError("linear: input " + dims(x) + " incompatible with weight " + dims(w));
  if (b.valid() && (b.rows() != 1 || b.cols() != w.cols())) {
    throw ShapeError("linear: bias " + dims(b) + " incompatible with weight " + dims(w));
  }
  Tape& t = *x.tape;
  const int r = x.rows(), in = x.cols(), o = w.cols();
  std::vector<double> out(static_cast<std::size_t>(r) * o, 0.0);
  if (b.valid()) {
    const auto bv = b.value();
    for (int i = 0; i < r; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<long>(i) * o);
  }
  kernels::active().gemm_nn(r, o, in, x.value().data(), w.value().data(), out.data());
  const bool ng = any_grad({x, w, b});
  Var y = t.push(r, o, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, x, w, b, y, r, in, o] {
      const double* dy = t.grad_ptr(y.id);
      const auto& k = kernels::active();
      if (t.needs_grad(x.id)) k.gemm_nt(r, in, o, dy, w.value().data(), t.grad_ptr(x.id));
      if (t.needs_grad(w.id)) k.gemm_tn(in, o, r, x.value().data(), dy, t.grad_ptr(w.id));
      if (b.valid() && t.needs_grad(b.id)) {
        double* db = t.grad_ptr(b.id);
        for (int i = 0; i < r; ++i) k.axpy(o, 1.0, dy + static_cast<long>(i) * o, db);
      }
    });
  }
  return y;
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " incompatible with " + dims(b));
  Tape& t = *a.tape;
  const int r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<double> out(static_cast<std::size_t>(r) * c, 0.0);
  kernels::active().gemm_nn(r, c, k, a.value().data(), b.value().data(), out.data());
  const bool ng = any_grad({a, b});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, b, y, r, k, c] {
      const double* dy = t.grad_ptr(y.id);
      const auto& kt = kernels::active();
      if (t.needs_grad(a.id)) kt.gemm_nt(r, k, c, dy, b.value().data(), t.grad_ptr(a.id));
      if (t.needs_grad(b.id)) kt.gemm_tn(k, c, r, a.value().data(), dy, t.grad_ptr(b.id));
    });
  }
  return y;
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + dims(a) + " incompatible with " + dims(b));
  Tape& t = *a.tape;
  const int r = a.rows(), k = a.cols(), c = b.rows();
  std::vector<double> out(static_cast<std::size_t>(r) * c, 0.0);
  kernels::active().gemm_nt(r, c, k, a.value().data(), b.value().data(), out.data());
  const bool ng = any_grad({a, b});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, b, y, r, k, c] {
      const double* dy = t.grad_ptr(y.id);
      const auto& kt = kernels::active();
      if (t.needs_grad(a.id)) kt.gemm_nn(r, k, c, dy, b.value().data(), t.grad_ptr(a.id));
      if (t.needs_grad(b.id)) kt.gemm_tn(c, k, r, dy, a.value().data(), t.grad_ptr(b.id));
    });
  }
  return y;
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: " + dims(a) + " vs " + dims(b));
  Tape& t = *a.tape;
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool ng = any_grad({a, b});
  Var y = t.push(a.rows(), a.cols(), std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, b, y] {
      const double* dy = t.grad_ptr(y.id);
      if (t.needs_grad(a.id)) accumulate(t.grad_ptr(a.id), dy, len(y));
      if (t.needs_grad(b.id)) accumulate(t.grad_ptr(b.id), dy, len(y));
    });
  }
  return y;
}

Var add_row(Var a, Var row) {
  same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: " + dims(a) + " vs row " + dims(row));
  Tape& t = *a.tape;
  const int r = a.rows(), c = a.cols();
  const auto av = a.value();
  const auto rv = row.value();
  std::vector<double> out(av.begin(), av.end());
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] += rv[static_cast<std::size_t>(j)];
  }
  const bool ng = any_grad({a, row});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, row, y, r, c] {
      const double* dy = t.grad_ptr(y.id);
      if (t.needs_grad(a.id)) accumulate(t.grad_ptr(a.id), dy, len(y));
      if (t.needs_grad(row.id)) {
        double* dr = t.grad_ptr(row.id);
        for (int i = 0; i < r; ++i) kernels::active().axpy(c, 1.0, dy + static_cast<long>(i) * c, dr);
      }
    });
  }
  return y;
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mul: " + dims(a) + " vs " + dims(b));
  Tape& t = *a.tape;
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool ng = any_grad({a, b});
  Var y = t.push(a.rows(), a.cols(), std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, b, y] {
      const double* dy = t.grad_ptr(y.id);
      const auto av = a.value();
      const auto bv = b.value();
      if (t.needs_grad(a.id)) {
        double* da = t.grad_ptr(a.id);
        for (std::size_t i = 0; i < av.size(); ++i) da[i] += dy[i] * bv[i];
      }
      if (t.needs_grad(b.id)) {
        double* db = t.grad_ptr(b.id);
        for (std::size_t i = 0; i < av.size(); ++i) db[i] += dy[i] * av[i];
      }
    });
  }
  return y;
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  const bool ng = any_grad({a});
  Var y = t.push(a.rows(), a.cols(), std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, y, s] { kernels::active().axpy(static_cast<int>(len(y)), s, t.grad_ptr(y.id), t.grad_ptr(a.id)); });
  }
  return y;
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const bool ng = any_grad({a});
  Var y = t.push(a.rows(), a.cols(), std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, y] {
      const double* dy = t.grad_ptr(y.id);
      double* da = t.grad_ptr(a.id);
      const auto av = a.value();
      for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i] > 0.0) da[i] += dy[i];
      }
    });
  }
  return y;
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const bool ng = any_grad({a});
  Var y = t.push(a.rows(), a.cols(), std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, y] {
      const double* dy = t.grad_ptr(y.id);
      double* da = t.grad_ptr(a.id);
      const auto yv = y.value();
      for (std::size_t i = 0; i < yv.size(); ++i) da[i] += dy[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return y;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma, "layer_norm");
  same_tape(x, beta, "layer_norm");
  const int r = x.rows(), c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c) {
    throw ShapeError("layer_norm: input " + dims(x) + " with gamma " + dims(gamma) + " and beta " + dims(beta));
  }
  Tape& t = *x.tape;
  const auto xv = x.value();
  const auto gv = gamma.value();
  const auto bv = beta.value();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r));
  std::vector<double> out(xv.size());
  for (int i = 0; i < r; ++i) {
    const double* row = xv.data() + static_cast<long>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= c;
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(i)] = rs;
    for (int j = 0; j < c; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * c + j;
      (*xhat)[idx] = (row[j] - mean) * rs;
      out[idx] = gv[static_cast<std::size_t>(j)] * (*xhat)[idx] + bv[static_cast<std::size_t>(j)];
    }
  }
  const bool ng = any_grad({x, gamma, beta});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, x, gamma, beta, y, r, c, xhat, rstd] {
      const double* dy = t.grad_ptr(y.id);
      const auto gv = gamma.value();
      if (t.needs_grad(gamma.id) || t.needs_grad(beta.id)) {
        double* dg = t.needs_grad(gamma.id) ? t.grad_ptr(gamma.id) : nullptr;
        double* db = t.needs_grad(beta.id) ? t.grad_ptr(beta.id) : nullptr;
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * c + j;
            if (dg) dg[j] += dy[idx] * (*xhat)[idx];
            if (db) db[j] += dy[idx];
          }
        }
      }
      if (t.needs_grad(x.id)) {
        double* dx = t.grad_ptr(x.id);
        for (int i = 0; i < r; ++i) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (int j = 0; j < c; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * c + j;
            const double g = dy[idx] * gv[static_cast<std::size_t>(j)];
            mean_g += g;
            mean_gx += g * (*xhat)[idx];
          }
          mean_g /= c;
          mean_gx /= c;
          const double rs = (*rstd)[static_cast<std::size_t>(i)];
          for (int j = 0; j < c; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * c + j;
            const double g = dy[idx] * gv[static_cast<std::size_t>(j)];
            dx[idx] += rs * (g - mean_g - (*xhat)[idx] * mean_gx);
          }
        }
      }
    });
  }
  return y;
}

namespace {

// Softmax of one row into `out`; masked entries get exactly 0. Returns log-sum-exp.
double softmax_row(const double* x, const std::uint8_t* allowed, int c, double* out) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double mx = kNegInf;
  for (int j = 0; j < c; ++j) {
    if ((allowed == nullptr || allowed[j]) && x[j] > mx) mx = x[j];
  }
  if (mx == kNegInf) throw ContractError("softmax: every entry of a row is masked (degenerate distribution)");
  double s = 0.0;
  for (int j = 0; j < c; ++j) {
    if (allowed == nullptr || allowed[j]) {
      out[j] = std::exp(x[j] - mx);
      s += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  const double inv = 1.0 / s;
  for (int j = 0; j < c; ++j) out[j] *= inv;
  return mx + std::log(s);
}

void check_mask(Var x, std::span<const std::uint8_t> allowed, const char* op) {
  if (!allowed.empty() && allowed.size() != len(x)) {
    throw ShapeError(std::string(op) + ": mask of " + std::to_string(allowed.size()) + " entries for input " + dims(x));
  }
}

}  // namespace

Var softmax(Var x, std::span<const std::uint8_t> allowed) {
  check_mask(x, allowed, "softmax");
  Tape& t = *x.tape;
  const int r = x.rows(), c = x.cols();
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (int i = 0; i < r; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    softmax_row(xv.data() + off, allowed.empty() ? nullptr : allowed.data() + off, c, out.data() + off);
  }
  const bool ng = any_grad({x});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, x, y, r, c] {
      const double* dy = t.grad_ptr(y.id);
      const auto yv = y.value();
      double* dx = t.grad_ptr(x.id);
      for (int i = 0; i < r; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += dy[off + j] * yv[off + j];
        for (int j = 0; j < c; ++j) dx[off + j] += yv[off + j] * (dy[off + j] - dot);
      }
    });
  }
  return y;
}

Var log_softmax(Var x, std::span<const std::uint8_t> allowed) {
  check_mask(x, allowed, "log_softmax");
  Tape& t = *x.tape;
  const int r = x.rows(), c = x.cols();
  const auto xv = x.value();
  auto probs = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> out(xv.size());
  for (int i = 0; i < r; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    const std::uint8_t* mask = allowed.empty() ? nullptr : allowed.data() + off;
    const double lse = softmax_row(xv.data() + off, mask, c, probs->data() + off);
    for (int j = 0; j < c; ++j) {
      out[off + j] = (mask == nullptr || mask[j]) ? xv[off + j] - lse : -std::numeric_limits<double>::infinity();
    }
  }
  const bool ng = any_grad({x});
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    std::vector<std::uint8_t> mask(allowed.begin(), allowed.end());
    t.on_backward([&t, x, y, r, c, probs, mask = std::move(mask)] {
      const double* dy = t.grad_ptr(y.id);
      double* dx = t.grad_ptr(x.id);
      for (int i = 0; i < r; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * c;
        double total = 0.0;
        for (int j = 0; j < c; ++j) {
          if (mask.empty() || mask[off + j]) total += dy[off + j];
        }
        for (int j = 0; j < c; ++j) {
          if (mask.empty() || mask[off + j]) dx[off + j] += dy[off + j] - (*probs)[off + j] * total;
        }
      }
    });
  }
  return y;
}

Var attention(Var q, Var k, Var v, int heads, std::span<const std::uint8_t> allowed,
              std::vector<double>* weights_out) {
  same_tape(q, k, "attention");
  same_tape(q, v, "attention");
  const int rq = q.rows(), rk = k.rows(), d = q.cols();
  if (heads < 1 || d % heads != 0) {
    throw ValidationError("attention: embedding dim " + std::to_string(d) + " is not divisible by " +
                          std::to_string(heads) + " heads");
  }
  if (k.cols() != d || v.cols() != d || v.rows() != rk) {
    throw ShapeError("attention: q " + dims(q) + ", k " + dims(k) + ", v " + dims(v));
  }
  if (!allowed.empty() && allowed.size() != static_cast<std::size_t>(rq) * rk) {
    throw ShapeError("attention: mask of " + std::to_string(allowed.size()) + " entries for scores [" +
                     std::to_string(rq) + "," + std::to_string(rk) + "]");
  }
  Tape& t = *q.tape;
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kt = kernels::active();

  auto split = [d, dh](std::span<const double> src, int rows, int h) {
    std::vector<double> out(static_cast<std::size_t>(rows) * dh);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(src.data() + static_cast<long>(i) * d + static_cast<long>(h) * dh, dh,
                  out.data() + static_cast<long>(i) * dh);
    }
    return out;
  };

  // probs[h] is rq x rk
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(heads) * rq * rk);
  std::vector<double> out(static_cast<std::size_t>(rq) * d, 0.0);
  std::vector<double> scores(static_cast<std::size_t>(rq) * rk);
  std::vector<double> head_out(static_cast<std::size_t>(rq) * dh);
  for (int h = 0; h < heads; ++h) {
    const auto qh = split(q.value(), rq, h);
    const auto khd = split(k.value(), rk, h);
    const auto vh = split(v.value(), rk, h);
    std::fill(scores.begin(), scores.end(), 0.0);
    kt.gemm_nt(rq, rk, dh, qh.data(), khd.data(), scores.data());
    for (double& s : scores) s *= inv_sqrt;
    double* ph = probs->data() + static_cast<std::size_t>(h) * rq * rk;
    for (int i = 0; i < rq; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * rk;
      softmax_row(scores.data() + off, allowed.empty() ? nullptr : allowed.data() + off, rk, ph + off);
    }
    std::fill(head_out.begin(), head_out.end(), 0.0);
    kt.gemm_nn(rq, dh, rk, ph, vh.data(), head_out.data());
    for (int i = 0; i < rq; ++i) {
      std::copy_n(head_out.data() + static_cast<long>(i) * dh, dh,
                  out.data() + static_cast<long>(i) * d + static_cast<long>(h) * dh);
    }
  }
  if (weights_out != nullptr) *weights_out = *probs;
  const bool ng = any_grad({q, k, v});
  Var y = t.push(rq, d, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, q, k, v, y, rq, rk, d, dh, heads, inv_sqrt, probs, split] {
      const auto& kt = kernels::active();
      const double* dy = t.grad_ptr(y.id);
      double* dq = t.needs_grad(q.id) ? t.grad_ptr(q.id) : nullptr;
      double* dk = t.needs_grad(k.id) ? t.grad_ptr(k.id) : nullptr;
      double* dv = t.needs_grad(v.id) ? t.grad_ptr(v.id) : nullptr;
      std::vector<double> dout(static_cast<std::size_t>(rq) * dh);
      std::vector<double> dp(static_cast<std::size_t>(rq) * rk);
      std::vector<double> dqh(static_cast<std::size_t>(rq) * dh);
      std::vector<double> dkh(static_cast<std::size_t>(rk) * dh);
      std::vector<double> dvh(static_cast<std::size_t>(rk) * dh);
      auto scatter = [&](double* dst, const std::vector<double>& src, int rows, int h) {
        for (int i = 0; i < rows; ++i) {
          kt.axpy(dh, 1.0, src.data() + static_cast<long>(i) * dh, dst + static_cast<long>(i) * d + static_cast<long>(h) * dh);
        }
      };
      for (int h = 0; h < heads; ++h) {
        const double* ph = probs->data() + static_cast<std::size_t>(h) * rq * rk;
        for (int i = 0; i < rq; ++i) {
          std::copy_n(dy + static_cast<long>(i) * d + static_cast<long>(h) * dh, dh, dout.data() + static_cast<long>(i) * dh);
        }
        const auto vh = split(v.value(), rk, h);
        if (dv) {
          std::fill(dvh.begin(), dvh.end(), 0.0);
          kt.gemm_tn(rk, dh, rq, ph, dout.data(), dvh.data());
          scatter(dv, dvh, rk, h);
        }
        if (!dq && !dk) continue;
        std::fill(dp.begin(), dp.end(), 0.0);
        kt.gemm_nt(rq, rk, dh, dout.data(), vh.data(), dp.data());
        // dS = P * (dP - rowsum(dP * P)), then the 1/sqrt(dh) factor.
        for (int i = 0; i < rq; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * rk;
          double dot = 0.0;
          for (int j = 0; j < rk; ++j) dot += dp[off + j] * ph[off + j];
          for (int j = 0; j < rk; ++j) dp[off + j] = ph[off + j] * (dp[off + j] - dot) * inv_sqrt;
        }
        if (dq) {
          const auto khd = split(k.value(), rk, h);
          std::fill(dqh.begin(), dqh.end(), 0.0);
          kt.gemm_nn(rq, dh, rk, dp.data(), khd.data(), dqh.data());
          scatter(dq, dqh, rq, h);
        }
        if (dk) {
          const auto qh = split(q.value(), rq, h);
          std::fill(dkh.begin(), dkh.end(), 0.0);
          kt.gemm_tn(rk, dh, rq, dp.data(), qh.data(), dkh.data());
          scatter(dk, dkh, rk, h);
        }
      }
    });
  }
  return y;
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const int c = parts.front().cols();
  int r = 0;
  bool ng = false;
  for (const Var& p : parts) {
    same_tape(parts.front(), p, "concat_rows");
    if (p.cols() != c) throw ShapeError("concat_rows: " + dims(parts.front()) + " vs " + dims(p));
    r += p.rows();
    ng = ng || t.needs_grad(p.id);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(r) * c);
  for (const Var& p : parts) {
    const auto pv = p.value();
    out.insert(out.end(), pv.begin(), pv.end());
  }
  Var y = t.push(r, c, std::move(out), ng);
  if (ng) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    t.on_backward([&t, y, inputs = std::move(inputs)] {
      const double* dy = t.grad_ptr(y.id);
      std::size_t off = 0;
      for (const Var& p : inputs) {
        if (t.needs_grad(p.id)) accumulate(t.grad_ptr(p.id), dy + off, len(p));
        off += len(p);
      }
    });
  }
  return y;
}

Var slice_rows(Var a, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + dims(a));
  }
  Tape& t = *a.tape;
  const int c = a.cols();
  const auto av = a.value();
  std::vector<double> out(av.begin() + static_cast<long>(begin) * c, av.begin() + static_cast<long>(begin + count) * c);
  const bool ng = any_grad({a});
  Var y = t.push(count, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, y, begin, c] {
      accumulate(t.grad_ptr(a.id) + static_cast<long>(begin) * c, t.grad_ptr(y.id), len(y));
    });
  }
  return y;
}

Var gather_rows(Var a, std::span<const int> rows) {
  Tape& t = *a.tape;
  const int c = a.cols();
  const auto av = a.value();
  std::vector<double> out(rows.size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of " + dims(a));
    std::copy_n(av.data() + static_cast<long>(rows[i]) * c, c, out.data() + i * c);
  }
  const bool ng = any_grad({a});
  Var y = t.push(static_cast<int>(rows.size()), c, std::move(out), ng);
  if (ng) {
    std::vector<int> idx(rows.begin(), rows.end());
    t.on_backward([&t, a, y, c, idx = std::move(idx)] {
      const double* dy = t.grad_ptr(y.id);
      double* da = t.grad_ptr(a.id);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        kernels::active().axpy(c, 1.0, dy + i * c, da + static_cast<long>(idx[i]) * c);
      }
    });
  }
  return y;
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const int r = a.rows(), c = a.cols();
  if (r == 0) throw ShapeError("mean_rows: empty input " + dims(a));
  const auto av = a.value();
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += av[static_cast<std::size_t>(i) * c + j];
  }
  for (double& o : out) o /= r;
  const bool ng = any_grad({a});
  Var y = t.push(1, c, std::move(out), ng);
  if (ng) {
    t.on_backward([&t, a, y, r, c] {
      const double* dy = t.grad_ptr(y.id);
      double* da = t.grad_ptr(a.id);
      for (int i = 0; i < r; ++i) kernels::active().axpy(c, 1.0 / r, dy, da + static_cast<long>(i) * c);
    });
  }
  return y;
}

Var pick(Var a, std::span<const int> cols) {
  if (static_cast<int>(cols.size()) != a.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + dims(a));
  }
  Tape& t = *a.tape;
  const int c = a.cols();
  const auto av = a.value();
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= c) throw ShapeError("pick: column " + std::to_string(cols[i]) + " out of " + dims(a));
    out[i] = av[i * c + static_cast<std::size_t>(cols[i])];
  }
  const bool ng = any_grad({a});
  Var y = t.push(static_cast<int>(cols.size()), 1, std::move(out), ng);
  if (ng) {
    std::vector<int> idx(cols.begin(), cols.end());
    t.on_backward([&t, a, y, c, idx = std::move(idx)] {
      const double* dy = t.grad_ptr(y.id);
      double* da = t.grad_ptr(a.id);
      for (std::size_t i = 0; i < idx.size(); ++i) da[i * c + static_cast<std::size_t>(idx[i])] += dy[i];
    });
  }
  return y;
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value()) s += v;
  const bool ng = any_grad({a});
  Var y = t.push(1, 1, {s}, ng);
  if (ng) {
    t.on_backward([&t, a, y] {
      const double g = t.grad_ptr(y.id)[0];
      double* da = t.grad_ptr(a.id);
      for (std::size_t i = 0; i < len(a); ++i) da[i] += g;
    });
  }
  return y;
}

Var weighted_sum(Var a, std::span<const double> weights) {
  if (weights.size() != len(a)) throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " + dims(a));
  Tape& t = *a.tape;
  const auto av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (weights[i] != 0.0) s += weights[i] * av[i];
  }
  const bool ng = any_grad({a});
  Var y = t.push(1, 1, {s}, ng);
  if (ng) {
    std::vector<double> w(weights.begin(), weights.end());
    t.on_backward([&t, a, y, w = std::move(w)] {
      const double g = t.grad_ptr(y.id)[0];
      double* da = t.grad_ptr(a.id);
      for (std::size_t i = 0; i < w.size(); ++i) da[i] += g * w[i];
    });
  }
  return y;
}

}  // namespace gtsp::nn
