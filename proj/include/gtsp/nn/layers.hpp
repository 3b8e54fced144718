#pragma once

#include <string>

#include "gtsp/nn/params.hpp"
#include "gtsp/nn/tape.hpp"

namespace gtsp::nn {

struct Linear {
  int weight = -1;
  int bias = -1;  // -1: no bias

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true);
  Var operator()(Binder& bind, Var x) const;
};

struct LayerNorm {
  int gamma = -1;
  int beta = -1;
  double eps = 1e-5;

  static LayerNorm create(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Binder& bind, Var x) const;
};

// Linear(d, 4d) -> ReLU -> Linear(4d, d).
struct FeedForward {
  Linear in;
  Linear out;

  static FeedForward create(ParameterStore& store, const std::string& name, int dim, int hidden, Rng& rng);
  Var operator()(Binder& bind, Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng);
  // Queries come from query_src, keys and values from kv_src.
  Var operator()(Binder& bind, Var query_src, Var kv_src, std::span<const std::uint8_t> allowed = {}) const;
};

// Post-norm transformer block: x = LN(x + MHSA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;

  static EncoderLayer create(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng);
  Var operator()(Binder& bind, Var x) const;
};

}  // namespace gtsp::nn
