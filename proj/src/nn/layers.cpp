#include "gtsp/nn/layers.hpp"

#include "gtsp/errors.hpp"
#include "gtsp/rng.hpp"

namespace gtsp::nn {

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = store.add_linear_weight(name + ".weight", static_cast<std::size_t>(in), static_cast<std::size_t>(out), rng);
  if (with_bias) l.bias = store.add_constant(name + ".bias", {1, static_cast<std::size_t>(out)}, 0.0);
  return l;
}

Var Linear::operator()(Binder& bind, Var x) const {
  return linear(x, bind(weight), bias >= 0 ? bind(bias) : Var{});
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = store.add_constant(name + ".gamma", {1, static_cast<std::size_t>(dim)}, 1.0);
  ln.beta = store.add_constant(name + ".beta", {1, static_cast<std::size_t>(dim)}, 0.0);
  return ln;
}

Var LayerNorm::operator()(Binder& bind, Var x) const { return layer_norm(x, bind(gamma), bind(beta), eps); }

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, int dim, int hidden, Rng& rng) {
  return FeedForward{Linear::create(store, name + ".in", dim, hidden, rng),
                     Linear::create(store, name + ".out", hidden, dim, rng)};
}

Var FeedForward::operator()(Binder& bind, Var x) const { return out(bind, relu(in(bind, x))); }

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, int dim, int heads,
                                              Rng& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ValidationError("attention config: dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.q = Linear::create(store, name + ".q", dim, dim, rng);
  a.k = Linear::create(store, name + ".k", dim, dim, rng);
  a.v = Linear::create(store, name + ".v", dim, dim, rng);
  a.o = Linear::create(store, name + ".o", dim, dim, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Binder& bind, Var query_src, Var kv_src, std::span<const std::uint8_t> allowed) const {
  const Var qp = q(bind, query_src);
  const Var kp = k(bind, kv_src);
  const Var vp = v(bind, kv_src);
  return o(bind, attention(qp, kp, vp, heads, allowed));
}

EncoderLayer EncoderLayer::create(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng) {
  EncoderLayer l;
  l.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  l.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  l.ffn = FeedForward::create(store, name + ".ffn", dim, 4 * dim, rng);
  l.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  return l;
}

Var EncoderLayer::operator()(Binder& bind, Var x) const {
  const Var h = norm1(bind, add(x, attn(bind, x, x)));
  return norm2(bind, add(h, ffn(bind, h)));
}

}  // namespace gtsp::nn
