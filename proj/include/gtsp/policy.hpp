#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtsp/image.hpp"
#include "gtsp/instance.hpp"
#include "gtsp/nn/layers.hpp"
#include "gtsp/nn/params.hpp"
#include "gtsp/nn/tape.hpp"

namespace gtsp {

class Rng;

struct PolicyConfig {
  int embed_dim = 128;
  int graph_layers = 3;
  int image_layers = 3;
  int fusion_layers = 3;
  int heads = 8;
  int bottleneck_tokens = 10;
  int patch_size = 16;
  double ars_alpha = 2.0;
  double fusion_weight = 0.5;
  double context_weight = 0.3;
  double logit_clip = 10.0;
  bool disable_image = false;
  bool disable_fusion = false;

  // Throws ValidationError naming the offending field.
  void validate() const;
  [[nodiscard]] std::string to_json() const;
  static PolicyConfig from_json(const std::string& text);
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// Encoder results for one instance, living on the binder's tape.
struct EncoderOutput {
  nn::Var h_graph;    // n x d, graph encoder output
  nn::Var h_image;    // N x d, image encoder output (invalid when the image branch is off)
  nn::Var h_graph_out;  // n x d after fusion (== h_graph when fusion is disabled)
  nn::Var h_image_out;  // N x d after fusion (invalid when no image tokens exist)
  nn::Var h_fused;    // n x d
  nn::Var context;    // 1 x d
  // Decoder precomputations.
  nn::Var keys;       // n x d, h_fused * W_K
  nn::Var q_context;  // 1 x d, context * W_q_graph
};

struct FusionOutput {
  nn::Var h_graph_out;
  nn::Var h_image_out;
  nn::Var h_fused;
  nn::Var context;
};

// Partial tour of one rollout.
struct DecoderState {
  int step = 0;
  std::vector<int> tour;
  std::vector<std::uint8_t> node_visited;
  std::vector<std::uint8_t> cluster_visited;

  static DecoderState start(const GtspInstance& instance);
  void visit(const GtspInstance& instance, int node);
  [[nodiscard]] bool eligible(const GtspInstance& instance, int node) const;
};

enum class DecodeMode { greedy, sample };

struct DecodeStepResult {
  std::vector<int> nodes;  // chosen node per state
  nn::Var log_probs;       // [states, 1], log-probability of each chosen node
  std::vector<double> logits;         // states x n, -inf on masked nodes
  std::vector<double> probabilities;  // states x n, exactly 0 on masked nodes
};

struct RolloutResult {
  Tour tour;
  double log_prob = 0.0;
  double reward = 0.0;  // -tour cost
};

struct RolloutBatch {
  std::vector<RolloutResult> results;
  nn::Var log_probs;  // [k, 1], differentiable sum of per-step log-probabilities
};

class Policy {
 public:
  Policy(PolicyConfig config, std::uint64_t seed);

  [[nodiscard]] const PolicyConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] nn::ParameterStore& params() { return params_; }
  [[nodiscard]] const nn::ParameterStore& params() const { return params_; }

  [[nodiscard]] InstanceImage image_for(const GtspInstance& instance) const;

  nn::Var encode_graph(nn::Binder& bind, const GtspInstance& instance) const;
  nn::Var encode_image(nn::Binder& bind, const InstanceImage& image) const;
  // h_image may be invalid (no image tokens).
  FusionOutput fuse(nn::Binder& bind, nn::Var h_graph, nn::Var h_image) const;
  // Full encoder; image defaults to image_for(instance).
  EncoderOutput encode(nn::Binder& bind, const GtspInstance& instance, const InstanceImage* image = nullptr) const;

  // One decoding step for a batch of states (each with step >= 1). `forced`,
  // when non-empty, gives the node for each state. rng is required for sampling.
  DecodeStepResult decode_step(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& instance,
                               std::span<DecoderState> states, DecodeMode mode, std::span<const int> forced = {},
                               Rng* rng = nullptr) const;

  // k multi-start rollouts: step 0 is the depot, step 1 of rollout j is the
  // j-th nearest node outside the depot's cluster, later steps follow `mode`.
  RolloutBatch rollout(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& instance, int k,
                       DecodeMode mode, Rng* rng = nullptr) const;
  // Teacher-forced rollouts along given feasible tours.
  RolloutBatch evaluate_tours(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& instance,
                              std::span<const std::vector<int>> tours) const;

 private:
  struct FusionLayer {
    int bottleneck_graph = -1;
    int bottleneck_image = -1;
    nn::MultiHeadAttention graph_attn;
    nn::MultiHeadAttention image_attn;
    nn::LayerNorm graph_norm;
    nn::LayerNorm image_norm;
    nn::FeedForward graph_ffn;
    nn::FeedForward image_ffn;
  };

  RolloutBatch run(nn::Binder& bind, const EncoderOutput& enc, const GtspInstance& instance, int k,
                   DecodeMode mode, Rng* rng, std::span<const std::vector<int>> forced_tours) const;

  PolicyConfig config_;
  std::uint64_t seed_;
  nn::ParameterStore params_;

  nn::Linear graph_embed_;
  std::vector<nn::EncoderLayer> graph_layers_;
  nn::Linear patch_embed_;
  nn::Linear pos_fc1_;
  nn::Linear pos_fc2_;
  std::vector<nn::EncoderLayer> image_layers_;
  std::vector<FusionLayer> fusion_layers_;
  nn::Linear query_last_;
  nn::Linear query_context_;
  nn::Linear key_proj_;
};

// Nodes outside the depot's cluster sorted by distance to the depot (ties: lower index).
std::vector<int> multistart_candidates(const GtspInstance& instance);

// Default multi-start width max(1, floor(n / 4)).
int default_rollouts(int node_count);

// Best of default_rollouts(n) greedy multi-start rollouts (ties: first rollout).
Tour greedy_solve(const Policy& policy, const GtspInstance& instance);

}  // namespace gtsp
