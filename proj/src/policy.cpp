#include "gtsp/policy.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "gtsp/errors.hpp"
#include "gtsp/rng.hpp"

namespace gtsp {

using nn::Var;

void PolicyConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string("policy config: ") + name + " must be >= 1, got " + std::to_string(v));
  };
  positive(embed_dim, "embed_dim");
  positive(graph_layers, "graph_layers");
  positive(image_layers, "image_layers");
  positive(fusion_layers, "fusion_layers");
  positive(heads, "heads");
  positive(bottleneck_tokens, "bottleneck_tokens");
  positive(patch_size, "patch_size");
  if (embed_dim % heads != 0) {
    throw ValidationError("policy config: embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                          std::to_string(heads));
  }
  if (!(logit_clip > 0.0)) throw ValidationError("policy config: logit_clip must be > 0");
  if (!(ars_alpha > 0.0)) throw ValidationError("policy config: ars_alpha must be > 0");
}

std::string PolicyConfig::to_json() const {
  nlohmann::ordered_json j;
  j["embed_dim"] = embed_dim;
  j["graph_layers"] = graph_layers;
  j["image_layers"] = image_layers;
  j["fusion_layers"] = fusion_layers;
  j["heads"] = heads;
  j["bottleneck_tokens"] = bottleneck_tokens;
  j["patch_size"] = patch_size;
  j["ars_alpha"] = ars_alpha;
  j["fusion_weight"] = fusion_weight;
  j["context_weight"] = context_weight;
  j["logit_clip"] = logit_clip;
  j["disable_image"] = disable_image;
  j["disable_fusion"] = disable_fusion;
  return j.dump();
}

PolicyConfig PolicyConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy config: ") + e.what());
  }
  PolicyConfig c;
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.graph_layers = j.value("graph_layers", c.graph_layers);
    c.image_layers = j.value("image_layers", c.image_layers);
    c.fusion_layers = j.value("fusion_layers", c.fusion_layers);
    c.heads = j.value("heads", c.heads);
    c.bottleneck_tokens = j.value("bottleneck_tokens", c.bottleneck_tokens);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.ars_alpha = j.value("ars_alpha", c.ars_alpha);
    c.fusion_weight = j.value("fusion_weight", c.fusion_weight);
    c.context_weight = j.value("context_weight", c.context_weight);
    c.logit_clip = j.value("logit_clip", c.logit_clip);
    c.disable_image = j.value("disable_image", c.disable_image);
    c.disable_fusion = j.value("disable_fusion", c.disable_fusion);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy config: ") + e.what());
  }
  c.validate();
  return c;
}

DecoderState DecoderState::start(const GtspInstance& inst) {
  DecoderState s;
  s.node_visited.assign(static_cast<std::size_t>(inst.node_count()), 0);
  s.cluster_visited.assign(static_cast<std::size_t>(inst.cluster_count), 0);
  s.tour.reserve(static_cast<std::size_t>(inst.cluster_count));
  return s;
}

bool DecoderState::eligible(const GtspInstance& inst, int node) const {
  return node >= 0 && node < inst.node_count() && !node_visited[static_cast<std::size_t>(node)] &&
         !cluster_visited[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(node)])];
}

void DecoderState::visit(const GtspInstance& inst, int node) {
  if (!eligible(inst, node)) {
    throw FeasibilityError("decoder: node " + std::to_string(node) + " is not eligible at step " + std::to_string(step));
  }
  tour.push_back(node);
  node_visited[static_cast<std::size_t>(node)] = 1;
  cluster_visited[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(node)])] = 1;
  ++step;
}

Policy::Policy(PolicyConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  Rng rng(derive_seed(seed, {0x706F6C696379ULL}));
  const int d = config_.embed_dim;
  const int h = config_.heads;
  const int w2 = config_.patch_size * config_.patch_size;

  graph_embed_ = nn::Linear::create(params_, "graph.embed", 3, d, rng);
  for (int l = 0; l < config_.graph_layers; ++l) {
    graph_layers_.push_back(nn::EncoderLayer::create(params_, "graph.layer" + std::to_string(l), d, h, rng));
  }
  patch_embed_ = nn::Linear::create(params_, "image.patch", w2, d, rng);
  pos_fc1_ = nn::Linear::create(params_, "image.pos.fc1", 2, d, rng);
  pos_fc2_ = nn::Linear::create(params_, "image.pos.fc2", d, d, rng);
  for (int l = 0; l < config_.image_layers; ++l) {
    image_layers_.push_back(nn::EncoderLayer::create(params_, "image.layer" + std::to_string(l), d, h, rng));
  }
  const double token_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const auto nb = static_cast<std::size_t>(config_.bottleneck_tokens);
  for (int l = 0; l < config_.fusion_layers; ++l) {
    const std::string p = "fusion.layer" + std::to_string(l);
    FusionLayer f;
    f.bottleneck_graph = params_.add_uniform(p + ".bottleneck_graph", {nb, static_cast<std::size_t>(d)}, token_bound, rng);
    f.bottleneck_image = params_.add_uniform(p + ".bottleneck_image", {nb, static_cast<std::size_t>(d)}, token_bound, rng);
    f.graph_attn = nn::MultiHeadAttention::create(params_, p + ".graph_attn", d, h, rng);
    f.image_attn = nn::MultiHeadAttention::create(params_, p + ".image_attn", d, h, rng);
    f.graph_norm = nn::LayerNorm::create(params_, p + ".graph_norm", d);
    f.image_norm = nn::LayerNorm::create(params_, p + ".image_norm", d);
    f.graph_ffn = nn::FeedForward::create(params_, p + ".graph_ffn", d, 4 * d, rng);
    f.image_ffn = nn::FeedForward::create(params_, p + ".image_ffn", d, 4 * d, rng);
    fusion_layers_.push_back(f);
  }
  query_last_ = nn::Linear::create(params_, "decoder.query_last", d, d, rng, false);
  query_context_ = nn::Linear::create(params_, "decoder.query_context", d, d, rng, false);
  key_proj_ = nn::Linear::create(params_, "decoder.key", d, d, rng, false);
}

InstanceImage Policy::image_for(const GtspInstance& inst) const {
  return build_image(inst, config_.patch_size, config_.ars_alpha);
}

Var Policy::encode_graph(nn::Binder& bind, const GtspInstance& inst) const {
  const int n = inst.node_count();
  std::vector<double> feats(static_cast<std::size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    const auto& p = inst.coords[static_cast<std::size_t>(i)];
    feats[static_cast<std::size_t>(i) * 3 + 0] = p.x;
    feats[static_cast<std::size_t>(i) * 3 + 1] = p.y;
    feats[static_cast<std::size_t>(i) * 3 + 2] =
        static_cast<double>(inst.cluster_of[static_cast<std::size_t>(i)]) / inst.cluster_count;
  }
  Var h = graph_embed_(bind, bind.tape().constant(n, 3, std::move(feats)));
  for (const auto& layer : graph_layers_) h = layer(bind, h);
  return h;
}

Var Policy::encode_image(nn::Binder& bind, const InstanceImage& image) const {
  if (image.patch_size != config_.patch_size) {
    throw ValidationError("image encoder: image patch size " + std::to_string(image.patch_size) +
                          " differs from the configured " + std::to_string(config_.patch_size));
  }
  const PatchGrid grid = extract_patches(image);
  const int count = grid.count();
  const int w2 = config_.patch_size * config_.patch_size;
  const double norm = 1.0 / (image.cluster_count + 1);
  std::vector<double> pixels(grid.values.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = grid.values[i] * norm;
  std::vector<double> coords(static_cast<std::size_t>(count) * 2);
  for (int p = 0; p < count; ++p) {
    coords[static_cast<std::size_t>(p) * 2] = grid.coords[static_cast<std::size_t>(p)].first;
    coords[static_cast<std::size_t>(p) * 2 + 1] = grid.coords[static_cast<std::size_t>(p)].second;
  }
  nn::Tape& tape = bind.tape();
  const Var patches = patch_embed_(bind, tape.constant(count, w2, std::move(pixels)));
  const Var pos = pos_fc2_(bind, nn::relu(pos_fc1_(bind, tape.constant(count, 2, std::move(coords)))));
  Var z = nn::add(patches, pos);
  for (const auto& layer : image_layers_) z = layer(bind, z);
  return z;
}

FusionOutput Policy::fuse(nn::Binder& bind, Var h_graph, Var h_image) const {
  FusionOutput out;
  if (config_.disable_fusion) {
    out.h_graph_out = h_graph;
    out.h_fused = h_graph;
    out.context = nn::mean_rows(h_graph);
    return out;
  }
  const int n = h_graph.rows();
  const bool has_image = h_image.valid();
  const int patches = has_image ? h_image.rows() : 0;
  Var hg = h_graph;
  Var hi = h_image;
  for (const auto& layer : fusion_layers_) {
    const Var bg = bind(layer.bottleneck_graph);
    const Var bi = bind(layer.bottleneck_image);
    const std::array<Var, 2> g_parts{hg, bg};
    const Var g_in = nn::concat_rows(g_parts);
    Var i_in = bi;
    if (has_image) {
      const std::array<Var, 2> i_parts{hi, bi};
      i_in = nn::concat_rows(i_parts);
    }
    const Var g_att = layer.graph_attn(bind, g_in, i_in);
    // Only the node/patch rows feed later stages; the bottleneck outputs are
    // replaced by the next layer's own tokens.
    const Var g_norm = layer.graph_norm(bind, nn::add(hg, nn::slice_rows(g_att, 0, n)));
    const Var g_next = nn::add(g_norm, layer.graph_ffn(bind, g_norm));
    if (has_image) {
      const Var i_att = layer.image_attn(bind, i_in, g_in);
      const Var i_norm = layer.image_norm(bind, nn::add(hi, nn::slice_rows(i_att, 0, patches)));
      hi = nn::add(i_norm, layer.image_ffn(bind, i_norm));
    }
    hg = g_next;
  }
  out.h_graph_out = hg;
  out.context = nn::mean_rows(hg);
  if (has_image) {
    out.h_image_out = hi;
    const Var img_mean = nn::mean_rows(hi);
    out.h_fused = nn::add_row(hg, nn::scale(img_mean, config_.fusion_weight));
    out.context = nn::add(out.context, nn::scale(img_mean, config_.context_weight));
  } else {
    out.h_fused = hg;
  }
  return out;
}

EncoderOutput Policy::encode(nn::Binder& bind, const GtspInstance& inst, const InstanceImage* image) const {
  EncoderOutput enc;
  enc.h_graph = encode_graph(bind, inst);
  if (!config_.disable_fusion && !config_.disable_image) {
    if (image != nullptr) {
      enc.h_image = encode_image(bind, *image);
    } else {
      enc.h_image = encode_image(bind, image_for(inst));
    }
  }
  const FusionOutput f = fuse(bind, enc.h_graph, enc.h_image);
  enc.h_graph_out = f.h_graph_out;
  enc.h_image_out = f.h_image_out;
  enc.h_fused = f.h_fused;
  enc.context = f.context;
  enc.keys = key_proj_(bind, enc.h_fused);
  enc.q_context = query_context_(bind, enc.context);
  return enc;
}

DecodeStepResult Policy::decode_step(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& inst,
                                     std::span<DecoderState> states, DecodeMode mode, std::span<const int> forced,
                                     Rng* rng) const {
  const int k = static_cast<int>(states.size());
  const int n = inst.node_count();
  if (!forced.empty() && static_cast<int>(forced.size()) != k) {
    throw ContractError("decode_step: forced node count does not match state count");
  }
  if (forced.empty() && mode == DecodeMode::sample && rng == nullptr) {
    throw ContractError("decode_step: sampling requires a random generator");
  }
  std::vector<int> last(static_cast<std::size_t>(k));
  std::vector<std::uint8_t> allowed(static_cast<std::size_t>(k) * n, 0);
  for (int s = 0; s < k; ++s) {
    const DecoderState& st = states[static_cast<std::size_t>(s)];
    if (st.tour.empty()) throw ContractError("decode_step: state has no previous node (place the depot first)");
    last[static_cast<std::size_t>(s)] = st.tour.back();
    bool any = false;
    for (int i = 0; i < n; ++i) {
      if (st.eligible(inst, i)) {
        allowed[static_cast<std::size_t>(s) * n + i] = 1;
        any = true;
      }
    }
    if (!any) throw FeasibilityError("decode_step: no eligible node remains at step " + std::to_string(st.step));
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_.embed_dim));
  const Var h_last = nn::gather_rows(enc.h_fused, last);
  const Var query = nn::add_row(query_last_(bind, h_last), enc.q_context);
  const Var scores = nn::scale(nn::matmul_nt(query, enc.keys), inv_sqrt_d);
  const Var logits = nn::scale(nn::tanh(scores), config_.logit_clip);
  const Var logp = nn::log_softmax(logits, allowed);

  DecodeStepResult res;
  res.nodes.resize(static_cast<std::size_t>(k));
  res.logits.assign(logits.value().begin(), logits.value().end());
  res.probabilities.resize(res.logits.size());
  const auto lp = logp.value();
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (!allowed[i]) res.logits[i] = -std::numeric_limits<double>::infinity();
    res.probabilities[i] = allowed[i] ? std::exp(lp[i]) : 0.0;
  }
  for (int s = 0; s < k; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * n;
    int choice = -1;
    if (!forced.empty()) {
      choice = forced[static_cast<std::size_t>(s)];
      if (choice < 0 || choice >= n || !allowed[off + static_cast<std::size_t>(choice)]) {
        throw FeasibilityError("decode_step: forced node " + std::to_string(choice) + " is not eligible");
      }
    } else if (mode == DecodeMode::greedy) {
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        if (allowed[off + i] && (choice < 0 || res.logits[off + i] > best)) {
          best = res.logits[off + i];
          choice = i;
        }
      }
    } else {
      const double u = rng->uniform();
      double cum = 0.0;
      for (int i = 0; i < n; ++i) {
        if (!allowed[off + i]) continue;
        choice = i;
        cum += res.probabilities[off + i];
        if (u < cum) break;
      }
    }
    res.nodes[static_cast<std::size_t>(s)] = choice;
  }
  res.log_probs = nn::pick(logp, res.nodes);
  for (int s = 0; s < k; ++s) states[static_cast<std::size_t>(s)].visit(inst, res.nodes[static_cast<std::size_t>(s)]);
  return res;
}

std::vector<int> multistart_candidates(const GtspInstance& inst) {
  const int depot_cluster = inst.cluster_of[static_cast<std::size_t>(inst.depot)];
  const Point& d = inst.coords[static_cast<std::size_t>(inst.depot)];
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < inst.node_count(); ++i) {
    if (inst.cluster_of[static_cast<std::size_t>(i)] == depot_cluster) continue;
    const Point& p = inst.coords[static_cast<std::size_t>(i)];
    cand.emplace_back(std::hypot(p.x - d.x, p.y - d.y), i);
  }
  std::ranges::sort(cand);
  std::vector<int> out;
  out.reserve(cand.size());
  for (const auto& c : cand) out.push_back(c.second);
  return out;
}

int default_rollouts(int node_count) { return std::max(1, node_count / 4); }

RolloutBatch Policy::run(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& inst, int k, DecodeMode mode,
                         Rng* rng, std::span<const std::vector<int>> forced_tours) const {
  const int m = inst.cluster_count;
  std::vector<int> starts;
  if (forced_tours.empty()) {
    starts = multistart_candidates(inst);
    if (k < 1) throw ContractError("rollout: k must be >= 1");
    if (k > static_cast<int>(starts.size())) {
      std::clog << "warning: rollout count " << k << " clamped to " << starts.size() << " eligible start nodes\n";
      k = static_cast<int>(starts.size());
    }
  } else {
    k = static_cast<int>(forced_tours.size());
    for (const auto& t : forced_tours) {
      const auto report = validate_tour(inst, t);
      if (!report.ok()) throw FeasibilityError("evaluate_tours: " + report.summary());
    }
  }

  std::vector<DecoderState> states(static_cast<std::size_t>(k), DecoderState::start(inst));
  for (auto& s : states) s.visit(inst, inst.depot);  // step 0: depot, probability 1

  Var total;
  std::vector<int> forced(static_cast<std::size_t>(k));
  for (int t = 1; t < m; ++t) {
    std::span<const int> force;
    if (!forced_tours.empty()) {
      for (int j = 0; j < k; ++j) forced[static_cast<std::size_t>(j)] = forced_tours[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
      force = forced;
    } else if (t == 1) {
      std::copy_n(starts.begin(), k, forced.begin());
      force = forced;
    }
    const DecodeStepResult step = decode_step(bind, enc, inst, states, mode, force, rng);
    total = total.valid() ? nn::add(total, step.log_probs) : step.log_probs;
  }
  if (!total.valid()) total = bind.tape().constant(k, 1, std::vector<double>(static_cast<std::size_t>(k), 0.0));

  RolloutBatch batch;
  batch.log_probs = total;
  const auto lp = total.value();
  for (int j = 0; j < k; ++j) {
    RolloutResult r;
    r.tour = make_tour(inst, states[static_cast<std::size_t>(j)].tour);
    r.log_prob = lp[static_cast<std::size_t>(j)];
    r.reward = -r.tour.cost;
    batch.results.push_back(std::move(r));
  }
  return batch;
}

RolloutBatch Policy::rollout(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& inst, int k,
                             DecodeMode mode, Rng* rng) const {
  return run(bind, enc, inst, k, mode, rng, {});
}

RolloutBatch Policy::evaluate_tours(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& inst,
                                    std::span<const std::vector<int>> tours) const {
  if (tours.empty()) throw ContractError("evaluate_tours: no tours given");
  return run(bind, enc, inst, 0, DecodeMode::greedy, nullptr, tours);
}

Tour greedy_solve(const Policy& policy, const GtspInstance& inst) {
  nn::Tape tape(false);
  nn::Binder bind(tape, policy.params(), nullptr);
  const EncoderOutput enc = policy.encode(bind, inst);
  const int k = std::min(default_rollouts(inst.node_count()), static_cast<int>(multistart_candidates(inst).size()));
  const RolloutBatch batch = policy.rollout(bind, enc, inst, k, DecodeMode::greedy);
  const auto best = std::ranges::min_element(batch.results, [](const RolloutResult& a, const RolloutResult& b) {
    return a.tour.cost < b.tour.cost;
  });
  return best->tour;
}

}  // namespace gtsp
