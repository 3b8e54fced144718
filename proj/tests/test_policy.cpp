#include <doctest.h>

#include "fd.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "gtsp/errors.hpp"
#include "gtsp/policy.hpp"
#include "gtsp/rng.hpp"
#include "gtsp/training.hpp"
#include "support.hpp"

using namespace gtsp;
using gtsp::testing::make_instance;

namespace {

PolicyConfig toy_config() {
  PolicyConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.graph_layers = 1;
  c.image_layers = 1;
  c.fusion_layers = 1;
  c.bottleneck_tokens = 2;
  c.patch_size = 4;
  return c;
}

PolicyConfig small_config() {
  PolicyConfig c;
  c.embed_dim = 16;
  c.heads = 4;
  c.graph_layers = 2;
  c.image_layers = 1;
  c.fusion_layers = 2;
  c.bottleneck_tokens = 3;
  return c;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  PolicyConfig c = small_config();
  c.disable_image = true;
  CHECK(PolicyConfig::from_json(c.to_json()) == c);
  PolicyConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("heads"), ValidationError);
  bad = c;
  bad.logit_clip = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.bottleneck_tokens = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_NOTHROW(PolicyConfig{}.validate());
}

TEST_CASE("parameter layout follows the configuration") {
  const Policy p(small_config(), 1);
  const auto& s = p.params();
  const int bg = s.find("fusion.layer0.bottleneck_graph");
  REQUIRE(bg >= 0);
  CHECK(s[static_cast<std::size_t>(bg)].value.shape == nn::Shape{3, 16});
  CHECK(s.find("fusion.layer1.bottleneck_image") >= 0);
  CHECK(s.find("fusion.layer2.bottleneck_image") < 0);
  CHECK(s.find("graph.layer1.attn.q.weight") >= 0);
  CHECK(s.find("image.layer0.ffn.in.weight") >= 0);
  CHECK(s.find("image.patch.weight") >= 0);
  CHECK(s[static_cast<std::size_t>(s.find("image.patch.weight"))].value.shape == nn::Shape{256, 16});
  CHECK(s.find("decoder.key.weight") >= 0);
  CHECK(s.find("decoder.key.bias") < 0);
  const Policy again(small_config(), 1);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(again.params()[i].value.values == s[i].value.values);
}

TEST_CASE("graph encoder: duplicates and permutation equivariance") {
  const Policy p(small_config(), 2);
  const auto inst = make_instance({{0.1, 0.2}, {0.5, 0.5}, {0.5, 0.5}, {0.9, 0.1}, {0.3, 0.8}}, {0, 1, 1, 2, 0});
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto h = p.encode_graph(bind, inst).value();
  const int d = 16;
  for (int c = 0; c < d; ++c) CHECK(h[static_cast<std::size_t>(d + c)] == doctest::Approx(h[static_cast<std::size_t>(2 * d + c)]).epsilon(1e-14));

  const std::vector<int> perm{3, 0, 4, 1, 2};
  GtspInstance shuffled = inst;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.coords[i] = inst.coords[static_cast<std::size_t>(perm[i])];
    shuffled.cluster_of[i] = inst.cluster_of[static_cast<std::size_t>(perm[i])];
  }
  const auto hs = p.encode_graph(bind, shuffled).value();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (int c = 0; c < d; ++c) {
      CHECK(hs[i * d + static_cast<std::size_t>(c)] ==
            doctest::Approx(h[static_cast<std::size_t>(perm[i]) * d + static_cast<std::size_t>(c)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoders stay finite on many instances") {
  const Policy p(small_config(), 3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Family f = all_families()[seed % all_families().size()];
    const int n = family_draws_cluster_count(f) ? 100 : 40;
    const auto inst = generate_instance({n, 8, f, seed, {}});
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    bool finite = true;
    for (double v : enc.h_fused.value()) finite = finite && std::isfinite(v);
    for (double v : enc.context.value()) finite = finite && std::isfinite(v);
    CHECK(finite);
  }
}

TEST_CASE("image encoder shapes and positional tie-break") {
  const Policy p(small_config(), 4);
  const auto empty = make_instance({{0.01, 0.01}, {0.02, 0.01}}, {0, 1});
  // 32x32 image (4 patches); only the top-left patch has content.
  const auto img = build_image(empty, 32, 32, 16);
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const nn::Var z = p.encode_image(bind, img);
  CHECK(z.rows() == 4);
  CHECK(z.cols() == 16);
  const auto v = z.value();
  // patches 1 and 3 are all-zero but sit at different positions
  CHECK(max_abs_diff(v.subspan(16, 16), v.subspan(48, 16)) > 1e-6);
  const auto one = p.encode_image(bind, build_image(empty, 16, 16, 16));
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 16);
}

TEST_CASE("fusion output shapes and the fused-embedding identity") {
  const Policy p(small_config(), 5);
  const auto inst = generate_instance({30, 5, Family::random, 1, {}});
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto enc = p.encode(bind, inst);
  CHECK(enc.h_graph.rows() == 30);
  CHECK(enc.h_image.rows() == 1);
  CHECK(enc.h_graph_out.rows() == 30);
  CHECK(enc.h_image_out.rows() == 1);
  CHECK(enc.h_fused.rows() == 30);
  CHECK(enc.context.rows() == 1);
  CHECK(enc.context.cols() == 16);
  const auto hg = enc.h_graph_out.value();
  const auto hi = enc.h_image_out.value();
  const auto hf = enc.h_fused.value();
  for (int r = 0; r < 30; ++r) {
    for (int c = 0; c < 16; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * 16 + static_cast<std::size_t>(c);
      CHECK(hf[i] == doctest::Approx(hg[i] + 0.5 * hi[static_cast<std::size_t>(c)]).epsilon(1e-14));
    }
  }
  double mean_g = 0.0;
  for (int r = 0; r < 30; ++r) mean_g += hg[static_cast<std::size_t>(r) * 16] / 30.0;
  CHECK(enc.context.value()[0] == doctest::Approx(mean_g + 0.3 * hi[0]).epsilon(1e-12));
}

TEST_CASE("disable_fusion bypasses fusion exactly") {
  PolicyConfig c = small_config();
  c.disable_fusion = true;
  const Policy p(c, 6);
  const auto inst = generate_instance({25, 5, Family::proximity, 2, {}});
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto enc = p.encode(bind, inst);
  const auto hg = enc.h_graph.value();
  const auto hf = enc.h_fused.value();
  for (std::size_t i = 0; i < hg.size(); ++i) CHECK(hf[i] == hg[i]);
  for (int col = 0; col < 16; ++col) {
    double m = 0.0;
    for (int r = 0; r < 25; ++r) m += hg[static_cast<std::size_t>(r) * 16 + static_cast<std::size_t>(col)];
    CHECK(enc.context.value()[static_cast<std::size_t>(col)] == doctest::Approx(m / 25.0).epsilon(1e-14));
  }
}

TEST_CASE("disable_image makes the output independent of the image") {
  PolicyConfig c = small_config();
  c.disable_image = true;
  const Policy p(c, 7);
  const auto inst = generate_instance({25, 5, Family::random, 3, {}});
  auto blank = p.image_for(inst);
  std::fill(blank.pixels.begin(), blank.pixels.end(), 0);
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto a = p.encode(bind, inst);
  const auto b = p.encode(bind, inst, &blank);
  CHECK_FALSE(a.h_image.valid());
  CHECK(max_abs_diff(a.h_fused.value(), b.h_fused.value()) == 0.0);
  CHECK(max_abs_diff(a.context.value(), b.context.value()) == 0.0);

  // With the image branch on, blanking the image changes the embedding.
  const Policy full(small_config(), 7);
  const auto fa = full.encode(bind, inst);
  const auto fb = full.encode(bind, inst, &blank);
  CHECK(max_abs_diff(fa.h_fused.value(), fb.h_fused.value()) > 0.0);
}

TEST_CASE("decode steps: masking, probabilities and the logit bound") {
  const Policy p(small_config(), 8);
  Rng rng(8);
  int steps = 0;
  for (std::uint64_t seed = 0; steps < 300; ++seed) {
    const auto inst = generate_instance({20, 5, Family::random, seed, {}});
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    std::vector<DecoderState> states(1, DecoderState::start(inst));
    states[0].visit(inst, inst.depot);
    for (int step = 1; step < inst.cluster_count; ++step, ++steps) {
      const DecoderState before = states[0];
      const auto res = p.decode_step(bind, enc, inst, states, DecodeMode::sample, {}, &rng);
      double total = 0.0;
      for (int i = 0; i < inst.node_count(); ++i) {
        CHECK(std::isinf(res.logits[static_cast<std::size_t>(i)]) == !before.eligible(inst, i));
        const double prob = res.probabilities[static_cast<std::size_t>(i)];
        const double logit = res.logits[static_cast<std::size_t>(i)];
        if (std::isinf(logit)) {
          CHECK(prob == 0.0);
        } else {
          CHECK(logit >= -10.0);
          CHECK(logit <= 10.0);
          total += prob;
        }
      }
      CHECK(std::fabs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("decoder state invariants") {
  const auto inst = make_instance({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}}, {0, 1, 1, 2, 0});
  auto s = DecoderState::start(inst);
  s.visit(inst, 0);
  CHECK_FALSE(s.eligible(inst, 4));
  CHECK(s.eligible(inst, 1));
  s.visit(inst, 2);
  CHECK_FALSE(s.eligible(inst, 1));
  CHECK(s.step == 2);
  CHECK(s.cluster_visited == std::vector<std::uint8_t>{1, 1, 0});
  CHECK_THROWS_AS(s.visit(inst, 1), FeasibilityError);
}

TEST_CASE("equal logits give uniform probabilities") {
  Policy p(small_config(), 9);
  const int key = p.params().find("decoder.key.weight");
  auto& w = p.params()[static_cast<std::size_t>(key)].value.values;
  std::fill(w.begin(), w.end(), 0.0);
  const auto inst = generate_instance({21, 4, Family::random, 5, {}});
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto enc = p.encode(bind, inst);
  std::vector<DecoderState> states(1, DecoderState::start(inst));
  states[0].visit(inst, 0);
  const auto res = p.decode_step(bind, enc, inst, states, DecodeMode::greedy);
  int eligible = 0;
  for (double pr : res.probabilities) eligible += pr > 0.0 ? 1 : 0;
  for (double pr : res.probabilities) {
    if (pr > 0.0) CHECK(pr == doctest::Approx(1.0 / eligible).epsilon(1e-15));
  }
  // greedy tie-break: lowest eligible index
  int first = -1;
  for (int i = 0; i < inst.node_count() && first < 0; ++i) {
    if (res.probabilities[static_cast<std::size_t>(i)] > 0.0) first = i;
  }
  CHECK(res.nodes[0] == first);
}

TEST_CASE("multi-start rollouts") {
  const Policy p(small_config(), 10);
  const auto inst = generate_instance({40, 6, Family::random, 6, {}});
  const auto cand = multistart_candidates(inst);
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto enc = p.encode(bind, inst);
  const auto batch = p.rollout(bind, enc, inst, 8, DecodeMode::greedy);
  REQUIRE(batch.results.size() == 8);
  std::set<int> second;
  for (std::size_t j = 0; j < 8; ++j) {
    const auto& tour = batch.results[j].tour;
    CHECK(tour.nodes[0] == inst.depot);
    CHECK(tour.nodes[1] == cand[j]);
    second.insert(tour.nodes[1]);
    CHECK(validate_tour(inst, tour.nodes).ok());
    CHECK(batch.results[j].reward == doctest::Approx(-tour.cost).epsilon(1e-12));
  }
  CHECK(second.size() == 8);
  const auto again = p.rollout(bind, enc, inst, 8, DecodeMode::greedy);
  for (std::size_t j = 0; j < 8; ++j) CHECK(again.results[j].tour.nodes == batch.results[j].tour.nodes);

  // clamped when k exceeds the eligible count
  const auto tiny = make_instance({{0, 0}, {1, 0}, {0, 1}}, {0, 1, 2});
  nn::Tape t2(false);
  nn::Binder b2(t2, p.params(), nullptr);
  const auto e2 = p.encode(b2, tiny);
  CHECK(p.rollout(b2, e2, tiny, 5, DecodeMode::greedy).results.size() == 2);
}

TEST_CASE("greedy_solve returns the best multi-start rollout") {
  CHECK(default_rollouts(100) == 25);
  CHECK(default_rollouts(20) == 5);
  CHECK(default_rollouts(3) == 1);
  const Policy p(small_config(), 11);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = generate_instance({24, 5, Family::density, seed, {}});
    const Tour best = greedy_solve(p, inst);
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    const auto batch = p.rollout(bind, enc, inst, 6, DecodeMode::greedy);
    double m = batch.results[0].tour.cost;
    for (const auto& r : batch.results) m = std::min(m, r.tour.cost);
    CHECK(best.cost == m);
  }
}

TEST_CASE("untrained policy tours are feasible") {
  const Policy p(small_config(), 12);
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Family f = all_families()[seed % all_families().size()];
    const auto inst = generate_instance({family_draws_cluster_count(f) ? 100 : 30, 6, f, seed, {}});
    CHECK(validate_tour(inst, greedy_solve(p, inst).nodes).ok());
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    for (const auto& r : p.rollout(bind, enc, inst, 3, DecodeMode::sample, &rng).results) {
      CHECK(validate_tour(inst, r.tour.nodes).ok());
    }
  }
}

TEST_CASE("recorded log-probabilities match a teacher-forced re-evaluation") {
  const Policy p(small_config(), 13);
  Rng rng(13);
  const auto inst = generate_instance({30, 6, Family::random, 9, {}});
  nn::Tape t(false);
  nn::Binder bind(t, p.params(), nullptr);
  const auto enc = p.encode(bind, inst);
  const auto sampled = p.rollout(bind, enc, inst, 4, DecodeMode::sample, &rng);
  std::vector<std::vector<int>> tours;
  for (const auto& r : sampled.results) tours.push_back(r.tour.nodes);
  nn::Tape t2(false);
  nn::Binder b2(t2, p.params(), nullptr);
  const auto enc2 = p.encode(b2, inst);
  const auto forced = p.evaluate_tours(b2, enc2, inst, tours);
  for (std::size_t j = 0; j < tours.size(); ++j) {
    CHECK(std::fabs(std::exp(forced.results[j].log_prob) - std::exp(sampled.results[j].log_prob)) < 1e-6);
    CHECK(forced.results[j].log_prob < 0.0);
  }
  std::vector<std::vector<int>> bad{{0, 1}};
  CHECK_THROWS_AS(p.evaluate_tours(b2, enc2, inst, bad), FeasibilityError);
}

TEST_CASE("policy log-probability gradient matches finite differences (n=8, m=4, d=8)") {
  Policy p(toy_config(), 14);
  gtsp::testing::jitter(p.params(), 14);
  const auto inst = generate_instance({8, 4, Family::random, 14, {}});
  const std::vector<std::vector<int>> tours = [&] {
    nn::Tape t(false);
    nn::Binder bind(t, p.params(), nullptr);
    const auto enc = p.encode(bind, inst);
    Rng rng(3);
    std::vector<std::vector<int>> out;
    for (const auto& r : p.rollout(bind, enc, inst, 2, DecodeMode::sample, &rng).results) out.push_back(r.tour.nodes);
    return out;
  }();
  const std::vector<double> weights{-0.7, 0.4};
  auto loss_of = [&](nn::GradBuffer* grads) {
    nn::Tape t(grads != nullptr);
    nn::Binder bind(t, p.params(), grads);
    const auto enc = p.encode(bind, inst);
    const auto batch = p.evaluate_tours(bind, enc, inst, tours);
    const nn::Var loss = nn::weighted_sum(batch.log_probs, weights);
    if (grads != nullptr) t.backward(loss);
    return loss.item();
  };
  nn::GradBuffer grads(p.params());
  loss_of(&grads);
  double diff_sq = 0.0, ref_sq = 0.0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < p.params().size(); ++i) {
    auto& vals = p.params()[i].value.values;
    const std::size_t stride = std::max<std::size_t>(1, vals.size() / 6);
    for (std::size_t e = 0; e < vals.size(); e += stride) {
      const double orig = vals[e];
      vals[e] = orig + 1e-5;
      const double up = loss_of(nullptr);
      vals[e] = orig - 1e-5;
      const double down = loss_of(nullptr);
      vals[e] = orig;
      const double numeric = (up - down) / 2e-5;
      diff_sq += (grads[i][e] - numeric) * (grads[i][e] - numeric);
      ref_sq += numeric * numeric;
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(std::sqrt(diff_sq / ref_sq) < 1e-4);
}

TEST_CASE("checkpointed policies reproduce their tours") {
  const Policy p(small_config(), 15);
  const auto path = std::filesystem::temp_directory_path() / "gtsp_test_policy.ckpt";
  save_policy(path, p, 0);
  const Policy back = load_policy(path);
  CHECK(back.config() == p.config());
  const auto inst = generate_instance({30, 6, Family::hybrid, 1, {}});
  CHECK(greedy_solve(back, inst).nodes == greedy_solve(p, inst).nodes);
  std::filesystem::remove(path);
}
