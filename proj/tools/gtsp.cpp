// gtsp: dataset generation, training, evaluation, solving, ILP export and
// route rendering. Exit codes: 0 success, 1 runtime or I/O failure, 2 usage.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gtsp/baselines.hpp"
#include "gtsp/errors.hpp"
#include "gtsp/ilp.hpp"
#include "gtsp/io.hpp"
#include "gtsp/render.hpp"
#include "gtsp/report.hpp"
#include "gtsp/rng.hpp"
#include "gtsp/training.hpp"

namespace {

using namespace gtsp;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Usage problem detected after parsing (bad combination of flags).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const CLI::Validator kAtLeastOne(
    [](std::string& v) -> std::string {
      try {
        if (std::stoll(v) >= 1) return {};
      } catch (const std::exception&) {
      }
      return "must be an integer >= 1, got " + v;
    },
    "INT>=1");

const std::vector<std::string> kMethods = {"random", "nn", "local_search", "exact", "mmfl"};

std::string short_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0e", v);
  std::string s = buf;
  // 1e-04 -> 1e-4
  const auto e = s.find('e');
  if (e != std::string::npos) {
    std::string mant = s.substr(0, e);
    std::string exp = s.substr(e + 1);
    const char sign = exp[0] == '-' ? '-' : '\0';
    std::size_t i = (exp[0] == '-' || exp[0] == '+') ? 1 : 0;
    while (i + 1 < exp.size() && exp[i] == '0') ++i;
    s = mant + "e" + (sign ? std::string(1, sign) : "") + exp.substr(i);
  }
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

Family family_flag(const std::string& name) {
  try {
    return parse_family(name);
  } catch (const ValidationError& e) {
    throw UsageError(std::string("--family: ") + e.what());
  }
}

GtspInstance pick_instance(const std::string& path, std::size_t index) {
  auto all = load_instances(path);
  if (index >= all.size()) {
    throw UsageError("--index " + std::to_string(index) + " out of range: " + path + " holds " +
                     std::to_string(all.size()) + " instance(s)");
  }
  return std::move(all[index]);
}

struct SolveContext {
  SearchBudget budget;
  const Policy* policy = nullptr;
};

Tour solve_with(const std::string& method, const GtspInstance& inst, std::size_t index, const SolveContext& ctx) {
  if (method == "random") return random_tour(inst, derive_seed(ctx.budget.seed, {index}));
  if (method == "nn") return nearest_neighbor_solve(inst);
  if (method == "local_search") {
    SearchBudget b = ctx.budget;
    b.seed = derive_seed(ctx.budget.seed, {index});
    return local_search(inst, nearest_neighbor_solve(inst), b);
  }
  if (method == "exact") return exact_solve(inst, ctx.budget);
  if (method == "mmfl") return greedy_solve(*ctx.policy, inst);
  throw UsageError("unknown method '" + method + "'");
}

// ---- generate ----

struct GenerateFlags {
  std::string family = "random";
  int n = 20;
  int m = 4;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_generate(const GenerateFlags& f) {
  GeneratorSpec spec{f.n, f.m, family_flag(f.family), f.seed, {}};
  try {
    validate_spec(spec);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  std::ostringstream out;
  write_dataset(out, generate_dataset(spec, f.count));
  emit(f.out, out.str());
  return kExitOk;
}

// ---- train ----

struct TrainFlags {
  std::string preset = "desk";
  std::string out_dir;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, instances, batch_size, rollouts, n, m, threads, validation_count;
  std::optional<double> lr, weight_decay, clip;
  std::optional<std::string> family;
  std::optional<std::uint64_t> validation_seed;
  std::optional<int> embed_dim, heads, graph_layers, image_layers, fusion_layers, bottleneck_tokens, patch_size;
  std::optional<double> alpha;
  bool disable_image = false;
  bool disable_fusion = false;
};

TrainConfig train_config(const TrainFlags& f) {
  TrainConfig c = f.preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
  if (f.seed) c.seed = *f.seed;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.instances) c.instances_per_epoch = *f.instances;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.rollouts) c.rollouts = *f.rollouts;
  if (f.lr) c.base_lr = *f.lr;
  if (f.weight_decay) c.weight_decay = *f.weight_decay;
  if (f.clip) c.clip_norm = *f.clip;
  if (f.n) c.instances.n = c.validation.n = *f.n;
  if (f.m) c.instances.m = c.validation.m = *f.m;
  if (f.family) c.instances.family = c.validation.family = family_flag(*f.family);
  if (f.validation_count) c.validation_count = *f.validation_count;
  if (f.validation_seed) c.validation.seed = *f.validation_seed;
  if (f.threads) c.threads = *f.threads;
  if (f.embed_dim) c.policy.embed_dim = *f.embed_dim;
  if (f.heads) c.policy.heads = *f.heads;
  if (f.graph_layers) c.policy.graph_layers = *f.graph_layers;
  if (f.image_layers) c.policy.image_layers = *f.image_layers;
  if (f.fusion_layers) c.policy.fusion_layers = *f.fusion_layers;
  if (f.bottleneck_tokens) c.policy.bottleneck_tokens = *f.bottleneck_tokens;
  if (f.patch_size) c.policy.patch_size = *f.patch_size;
  if (f.alpha) c.policy.ars_alpha = *f.alpha;
  c.policy.disable_image = f.disable_image;
  c.policy.disable_fusion = f.disable_fusion;
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return c;
}

int run_train(const TrainFlags& f) {
  const TrainConfig c = train_config(f);
  std::cout << "preset " << f.preset << ": lr=" << short_sci(c.base_lr) << " wd=" << short_sci(c.weight_decay)
            << " clip=" << format_real(c.clip_norm, 6) << (c.clip_norm == 1.0 ? ".0" : "") << " epochs=" << c.epochs
            << " instances=" << c.instances_per_epoch << " batch=" << c.batch_size << " k=" << c.effective_rollouts()
            << " d=" << c.policy.embed_dim << " n=" << c.instances.n << " m=" << c.instances.m
            << " family=" << to_string(c.instances.family) << " seed=" << c.seed << '\n';
  if (f.preset == "paper") {
    std::cout << "warning: the paper preset runs " << c.epochs << " epochs x " << c.instances_per_epoch
              << " instances with d=" << c.policy.embed_dim
              << "; expect weeks of CPU time. Use --preset desk for a run that finishes in minutes.\n";
  }
  std::cout.flush();
  Policy policy(c.policy, c.seed);
  TrainOptions opts;
  opts.out_dir = f.out_dir;
  opts.resume = f.resume;
  opts.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %3d  val_cost %.4f  train_reward %.4f  lr %.3e  %.1fs\n", r.epoch, r.val_cost, r.train_reward,
                r.lr, r.seconds);
    std::fflush(stdout);
  };
  const TrainLog log = train(policy, c, opts);
  if (log.initial_val_cost) std::printf("untrained val_cost %.4f\n", *log.initial_val_cost);
  std::cout << "wrote " << (std::filesystem::path(f.out_dir) / "train_log.csv").string() << " and "
            << (std::filesystem::path(f.out_dir) / "last.ckpt").string() << '\n';
  return kExitOk;
}

// ---- init ----

int run_init(const TrainFlags& f, const std::string& out) {
  const TrainConfig c = train_config(f);
  const Policy policy(c.policy, c.seed);
  save_policy(out, policy, 0);
  std::cout << "wrote untrained checkpoint " << out << " (" << policy.params().element_count() << " parameters)\n";
  return kExitOk;
}

// ---- eval ----

struct EvalFlags {
  std::string dataset;
  std::vector<std::string> methods = {"nn", "local_search"};
  std::string checkpoint;
  std::string out;
  std::string detail;
  std::string timing;
  std::string name;
  int restarts = 20;
  std::uint64_t seed = 0;
  std::uint64_t budget = SearchBudget{}.max_enumerated;
};

int run_eval(const EvalFlags& f) {
  bool need_policy = false;
  for (const auto& m : f.methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw UsageError("--methods: unknown method '" + m + "'");
    }
    need_policy = need_policy || m == "mmfl";
  }
  if (need_policy && f.checkpoint.empty()) throw UsageError("--checkpoint is required when --methods includes mmfl");
  const auto data = load_instances(f.dataset);
  EvalReport report;
  report.dataset = f.name.empty() ? std::filesystem::path(f.dataset).stem().string() : f.name;
  SolveContext ctx;
  ctx.budget.restarts = f.restarts;
  ctx.budget.seed = f.seed;
  ctx.budget.max_enumerated = f.budget;
  for (const auto& method : f.methods) {
    const auto t0 = Clock::now();
    std::unique_ptr<Policy> policy;
    if (method == "mmfl") {
      policy = std::make_unique<Policy>(load_policy(f.checkpoint));
      ctx.policy = policy.get();
    }
    MethodResult r;
    r.method = method;
    const auto t1 = Clock::now();
    for (std::size_t i = 0; i < data.size(); ++i) {
      Tour t = solve_with(method, data[i], i, ctx);
      const TourReport check = validate_tour(data[i], t.nodes);
      if (!check.ok()) throw FeasibilityError(method + " produced an infeasible tour: " + check.summary());
      r.seeds.push_back(data[i].seed);
      r.costs.push_back(t.cost);
      r.tours.push_back(std::move(t));
    }
    r.inference_seconds = std::chrono::duration<double>(Clock::now() - t1).count();
    r.end_to_end_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.methods.push_back(std::move(r));
  }
  std::cout << format_table(report);
  if (!f.out.empty()) {
    std::ostringstream s;
    write_summary_csv(s, report);
    emit(f.out, s.str());
  }
  if (!f.detail.empty()) {
    std::ostringstream s;
    write_detail_csv(s, report);
    emit(f.detail, s.str());
  }
  if (!f.timing.empty()) {
    std::ostringstream s;
    write_timing_csv(s, report);
    emit(f.timing, s.str());
  }
  return kExitOk;
}

// ---- solve ----

struct SolveFlags {
  std::string instance;
  std::size_t index = 0;
  std::string method = "nn";
  std::string checkpoint;
  std::string render;
  std::string tour_out;
  int restarts = 20;
  std::uint64_t seed = 0;
  std::uint64_t budget = SearchBudget{}.max_enumerated;
};

int run_solve(const SolveFlags& f) {
  if (std::find(kMethods.begin(), kMethods.end(), f.method) == kMethods.end()) {
    throw UsageError("--method: unknown method '" + f.method + "'");
  }
  if (f.method == "mmfl" && f.checkpoint.empty()) throw UsageError("--checkpoint is required for --method mmfl");
  const GtspInstance inst = pick_instance(f.instance, f.index);
  SolveContext ctx;
  ctx.budget.restarts = f.restarts;
  ctx.budget.seed = f.seed;
  ctx.budget.max_enumerated = f.budget;
  std::unique_ptr<Policy> policy;
  if (f.method == "mmfl") {
    policy = std::make_unique<Policy>(load_policy(f.checkpoint));
    ctx.policy = policy.get();
  }
  const Tour tour = solve_with(f.method, inst, f.index, ctx);
  std::cout << "tour:";
  for (int v : tour.nodes) std::cout << ' ' << v;
  char cost[64];
  std::snprintf(cost, sizeof cost, "%.6f", tour.cost);
  std::cout << "\ncost: " << cost << '\n';
  if (!f.render.empty()) emit(f.render, render_route(inst, tour.nodes));
  if (!f.tour_out.empty()) {
    std::ostringstream s;
    write_tour(s, TourDocument{inst.seed, inst.family, tour.nodes, tour.cost});
    emit(f.tour_out, s.str());
  }
  return kExitOk;
}

// ---- render ----

int run_render(const std::string& instance, std::size_t index, const std::string& tour_path, const std::string& out) {
  const GtspInstance inst = pick_instance(instance, index);
  const TourDocument doc = read_tour(read_file(tour_path));
  emit(out, render_route(inst, doc.nodes));
  return kExitOk;
}

// ---- export-ilp ----

int run_export(const std::string& instance, std::size_t index, const std::string& out) {
  const GtspInstance inst = pick_instance(instance, index);
  std::ostringstream s;
  export_ilp(s, inst);
  emit(out, s.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GTSP toolkit: instance generation, policy training, baselines, evaluation, ILP export"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gtsp 1.0.0");

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "Write a dataset of generated instances");
  g->add_option("--family", gen.family, "Instance family")->check(CLI::IsMember(
      std::vector<std::string>{"random", "proximity", "density", "hybrid", "scale", "uniform", "small", "large", "mixed"}));
  g->add_option("--n", gen.n, "Node count")->check(kAtLeastOne);
  g->add_option("--m", gen.m, "Cluster count")->check(kAtLeastOne);
  g->add_option("--count", gen.count, "Number of instances")->check(kAtLeastOne);
  g->add_option("--seed", gen.seed, "Seed of instance 0 (instance i uses seed + i)");
  g->add_option("--out", gen.out, "Output path, - for stdout");

  TrainFlags tr;
  std::string init_out;
  auto add_train_flags = [&tr](CLI::App* s) {
    s->add_option("--preset", tr.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    s->add_option("--seed", tr.seed, "Training seed (also seeds the weights)");
    s->add_option("--epochs", tr.epochs, "Epochs")->check(kAtLeastOne);
    s->add_option("--instances", tr.instances, "Instances per epoch")->check(kAtLeastOne);
    s->add_option("--batch-size", tr.batch_size, "Instances per update")->check(kAtLeastOne);
    s->add_option("--rollouts", tr.rollouts, "Rollouts k per instance")->check(kAtLeastOne);
    s->add_option("--lr", tr.lr, "Base learning rate")->check(CLI::PositiveNumber);
    s->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
    s->add_option("--clip", tr.clip, "Gradient norm clip")->check(CLI::PositiveNumber);
    s->add_option("--n", tr.n, "Nodes per training instance")->check(kAtLeastOne);
    s->add_option("--m", tr.m, "Clusters per training instance")->check(kAtLeastOne);
    s->add_option("--family", tr.family, "Training family");
    s->add_option("--validation-count", tr.validation_count, "Validation instances")->check(kAtLeastOne);
    s->add_option("--validation-seed", tr.validation_seed, "Seed of validation instance 0");
    s->add_option("--threads", tr.threads, "Worker threads (default: GTSP_THREADS or 1)")->check(kAtLeastOne);
    s->add_option("--embed-dim", tr.embed_dim, "Embedding width d")->check(kAtLeastOne);
    s->add_option("--heads", tr.heads, "Attention heads")->check(kAtLeastOne);
    s->add_option("--graph-layers", tr.graph_layers, "Graph encoder layers")->check(CLI::NonNegativeNumber);
    s->add_option("--image-layers", tr.image_layers, "Image encoder layers")->check(CLI::NonNegativeNumber);
    s->add_option("--fusion-layers", tr.fusion_layers, "Fusion layers")->check(CLI::NonNegativeNumber);
    s->add_option("--bottleneck-tokens", tr.bottleneck_tokens, "Bottleneck tokens per modality")
        ->check(kAtLeastOne);
    s->add_option("--patch-size", tr.patch_size, "Image patch side w")->check(kAtLeastOne);
    s->add_option("--alpha", tr.alpha, "Resolution scaling factor")->check(CLI::PositiveNumber);
    s->add_flag("--disable-image", tr.disable_image, "Ablation: no image encoder");
    s->add_flag("--disable-fusion", tr.disable_fusion, "Ablation: no fusion module");
  };
  auto* t = app.add_subcommand("train", "Train the policy with REINFORCE");
  add_train_flags(t);
  t->add_option("--out-dir", tr.out_dir, "Directory for checkpoints and train_log.csv")->required();
  t->add_flag("--resume", tr.resume, "Continue from <out-dir>/last.ckpt");
  auto* in = app.add_subcommand("init", "Write an untrained checkpoint");
  add_train_flags(in);
  in->add_option("--out", init_out, "Checkpoint path")->required();

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Evaluate methods on a dataset");
  e->add_option("--dataset", ev.dataset, "Dataset document")->required()->check(CLI::ExistingFile);
  e->add_option("--methods", ev.methods, "Comma-separated: random,nn,local_search,exact,mmfl")->delimiter(',');
  e->add_option("--checkpoint", ev.checkpoint, "Policy checkpoint (required for mmfl)")->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Summary CSV");
  e->add_option("--detail", ev.detail, "Per-instance CSV");
  e->add_option("--timing", ev.timing, "Timing CSV");
  e->add_option("--name", ev.name, "Dataset label (default: file stem)");
  e->add_option("--restarts", ev.restarts, "Local search restarts")->check(kAtLeastOne);
  e->add_option("--seed", ev.seed, "Seed for random and local_search");
  e->add_option("--budget", ev.budget, "Exact enumeration budget (tours)");

  SolveFlags so;
  auto* s = app.add_subcommand("solve", "Solve one instance");
  s->add_option("--instance", so.instance, "Instance or dataset document")->required()->check(CLI::ExistingFile);
  s->add_option("--index", so.index, "Instance index within a dataset");
  s->add_option("--method", so.method, "random, nn, local_search, exact or mmfl");
  s->add_option("--checkpoint", so.checkpoint, "Policy checkpoint (required for mmfl)")->check(CLI::ExistingFile);
  s->add_option("--render", so.render, "Write the route as SVG");
  s->add_option("--tour-out", so.tour_out, "Write the tour document");
  s->add_option("--restarts", so.restarts, "Local search restarts")->check(kAtLeastOne);
  s->add_option("--seed", so.seed, "Seed for random and local_search");
  s->add_option("--budget", so.budget, "Exact enumeration budget (tours)");

  std::string r_instance, r_tour, r_out = "-";
  std::size_t r_index = 0;
  auto* r = app.add_subcommand("render", "Render a tour document as SVG");
  r->add_option("--instance", r_instance, "Instance or dataset document")->required()->check(CLI::ExistingFile);
  r->add_option("--index", r_index, "Instance index within a dataset");
  r->add_option("--tour", r_tour, "Tour document")->required()->check(CLI::ExistingFile);
  r->add_option("--out", r_out, "SVG path, - for stdout");

  std::string x_instance, x_out = "-";
  std::size_t x_index = 0;
  auto* x = app.add_subcommand("export-ilp", "Write the integer model in LP format");
  x->add_option("--instance", x_instance, "Instance or dataset document")->required()->check(CLI::ExistingFile);
  x->add_option("--index", x_index, "Instance index within a dataset");
  x->add_option("--out", x_out, "LP path, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*in) return run_init(tr, init_out);
    if (*e) return run_eval(ev);
    if (*s) return run_solve(so);
    if (*r) return run_render(r_instance, r_index, r_tour, r_out);
    if (*x) return run_export(x_instance, x_index, x_out);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
