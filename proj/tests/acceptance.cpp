// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: dmicf_acceptance WORKDIR
//
// Criteria 5, 8 and 10 drive the dmicf binary end to end; the rest call the
// library directly and compare against the oracles in test_util.hpp.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmicf/config.hpp"
#include "dmicf/eval.hpp"
#include "dmicf/graph.hpp"
#include "dmicf/model.hpp"
#include "dmicf/synthetic.hpp"
#include "dmicf/trainer.hpp"
#include "test_util.hpp"

using namespace dmicf;
using namespace dmicf::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DMICF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---- 1 -----------------------------------------------------------------------

double batch_objective(const ModelConfig& cfg, const InteractionGraph& g,
                       const ModelParameters& p, const TrainingBatch& batch, double tau) {
  ad::Tape tape(false);
  const BoundModel bound = bind_model(tape, cfg, p);
  return batch_loss(tape, cfg, g, bound, batch, tau).loss.value()(0, 0);
}

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const InteractionGraph g = InteractionGraph::from_edges(
      4, 5, {{0, 0}, {0, 2}, {1, 1}, {1, 4}, {2, 0}, {2, 3}, {3, 2}, {3, 4}});
  TrainingBatch batch;
  batch.positives = {{0, 2}, {1, 4}, {2, 0}, {3, 4}};
  batch.negatives_per_positive = 2;
  std::uniform_int_distribution<std::size_t> item(0, 4);
  for (std::size_t k = 0; k < 8; ++k) batch.negatives.push_back(item(rng));
  const double tau = 0.2, h = 1e-4;

  std::size_t checked = 0, failures = 0;
  // For failing coordinates: largest |g|, and the best error over steps 1e-3
  // and 1e-5 (separates truncation from roundoff in the loss).
  double worst = 0.0, failing_max_grad = 0.0, failing_wide_err = 0.0;
  std::string worst_where;
  for (auto a : {AlignmentVariant::kConcatMlp, AlignmentVariant::kGmfMlp,
                 AlignmentVariant::kCrossAttention}) {
    for (auto f : {FusionVariant::kSequential, FusionVariant::kFlat}) {
      const ModelConfig cfg = tiny_config(a, f);
      ModelParameters p = init_parameters(cfg, 4, 5, 77);
      for (auto& [name, t] : p.named())
        if (name.ends_with(".bias")) *t = random_tensor(t->rows(), t->cols(), rng, -0.5, 0.5);

      ad::Tape tape;
      const BoundModel bound = bind_model(tape, cfg, p);
      tape.backward(batch_loss(tape, cfg, g, bound, batch, tau).loss);
      const auto vars = parameter_vars(cfg, bound);
      auto named = p.named();
      for (std::size_t k = 0; k < named.size(); ++k) {
        const Tensor2 grad = tape.grad(vars[k]);
        Tensor2& t = *named[k].second;
        for (std::size_t j = 0; j < t.size(); ++j) {
          const double orig = t.data()[j];
          t.data()[j] = orig + h;
          const double up = batch_objective(cfg, g, p, batch, tau);
          t.data()[j] = orig - h;
          const double down = batch_objective(cfg, g, p, batch, tau);
          t.data()[j] = orig;
          const double fd = (up - down) / (2 * h);
          const double an = grad.data()[j];
          const double scale = std::max(std::abs(an), std::abs(fd));
          double err = 0.0;
          bool ok = true;
          if (std::abs(an) < 1e-8) {
            err = std::abs(an - fd);
            ok = err < 1e-8;
          } else {
            err = std::abs(an - fd) / scale;
            ok = err < 1e-5;
            if (err > worst) {
              worst = err;
              worst_where = std::string(to_string(a)) + "/" + std::string(to_string(f)) + " " +
                            named[k].first + "[" + std::to_string(j) + "]";
            }
          }
          ++checked;
          failures += !ok;
          if (!ok) {
            failing_max_grad = std::max(failing_max_grad, std::abs(an));
            double best = err;
            for (const double step : {10 * h, h / 10}) {
              t.data()[j] = orig + step;
              const double su = batch_objective(cfg, g, p, batch, tau);
              t.data()[j] = orig - step;
              const double sd = batch_objective(cfg, g, p, batch, tau);
              t.data()[j] = orig;
              const double other = (su - sd) / (2 * step);
              best = std::min(best, std::abs(an - other) / std::max(std::abs(an), std::abs(other)));
            }
            failing_wide_err = std::max(failing_wide_err, best);
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 60.0,
          std::to_string(checked) + " coordinates over 6 variants, " + std::to_string(failures) +
              " failures, max relative error " + fmt(worst) + " (" + worst_where + "), " +
              fmt(secs) + " s" +
              (failures ? "; failing |g| <= " + fmt(failing_max_grad) +
                              ", their worst best-of-steps {1e-3,1e-5} relative error " + fmt(failing_wide_err)
                        : std::string())};
}

// ---- 2 -----------------------------------------------------------------------

Verdict probability_invariants() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> negs(1, 60);
  std::uniform_real_distribution<double> raw(-1.0, 1.0), temp(0.1, 2.0);
  double worst_sum = 0.0, worst_limit = 0.0;
  std::size_t non_monotone = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t s = negs(rng);
    std::vector<double> n(s);
    for (double& v : n) v = raw(rng);
    const double pos = raw(rng), tau = temp(rng);
    const NormalizedScores a = normalize_scores(pos, n, tau);
    double total = a.pos_prob;
    for (double q : a.neg_probs) total += q;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    if (!(normalize_scores(pos + 0.01, n, tau).pos_prob > a.pos_prob)) ++non_monotone;
    const double limit = normalize_scores(pos, n, 1e6).pos_prob;
    worst_limit = std::max(worst_limit, std::abs(limit - 1.0 / static_cast<double>(s + 1)));
  }
  return {worst_sum <= 1e-9 && non_monotone == 0 && worst_limit <= 1e-6,
          "10000 sets: max |sum-1| " + fmt(worst_sum) + ", non-monotone " +
              std::to_string(non_monotone) + ", max |p-1/(S+1)| at tau=1e6 " + fmt(worst_limit)};
}

// ---- 3 -----------------------------------------------------------------------

Verdict simplex_invariant() {
  std::mt19937_64 rng(5);
  auto g = std::make_shared<const InteractionGraph>(random_graph(1000, 60, 0.05, rng));
  const DmicfModel model(ModelConfig{}, g, 99);
  const EntityEncodings enc = model.encode_all();
  double worst = 0.0, min_entry = 1.0;
  for (const Tensor2* h : {&enc.h_user, &enc.h_user_x}) {
    for (std::size_t u = 0; u < h->rows(); ++u) {
      double s = 0.0;
      for (double v : h->row(u)) {
        s += v;
        min_entry = std::min(min_entry, v);
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return {worst <= 1e-6 && min_entry >= 0.0,
          "1000 users: max |row sum-1| " + fmt(worst) + ", min entry " + fmt(min_entry)};
}

// ---- 4 -----------------------------------------------------------------------

Verdict dense_equivalence() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> side(1, 25);
  std::uniform_real_distribution<double> density(0.05, 0.6);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const InteractionGraph g = random_graph(side(rng), side(rng), density(rng), rng);
    const Tensor2 eu = random_tensor(g.num_users(), 6, rng), ev = random_tensor(g.num_items(), 6, rng);
    const auto [zu, zv] = propagate(g, eu, ev);
    const Mat abar = dense_normalized_adjacency(g);
    const Mat ru = matmul_loop(abar, to_mat(ev)), rv = matmul_loop(transpose(abar), to_mat(eu));
    for (std::size_t u = 0; u < g.num_users(); ++u)
      for (std::size_t c = 0; c < 6; ++c) worst = std::max(worst, std::abs(zu(u, c) - ru[u][c]));
    for (std::size_t i = 0; i < g.num_items(); ++i)
      for (std::size_t c = 0; c < 6; ++c) worst = std::max(worst, std::abs(zv(i, c) - rv[i][c]));
  }
  return {worst <= 1e-12, "20 graphs: max abs deviation " + fmt(worst)};
}

// ---- 5, 8, 10 ---------------------------------------------------------------

/// Scaled-down run configuration for the planted-block data. The architecture
/// keeps the default hidden widths; the optimiser settings are the ones that
/// make the tiny dataset trainable in a few epochs.
std::string planted_config(const fs::path& data, AlignmentVariant alignment) {
  std::ostringstream c;
  c << "data.train = " << (data / "train.txt").string() << "\n"
    << "data.test = " << (data / "test.txt").string() << "\n"
    << "model.embed_dim = 16\nmodel.prototypes = 8\nmodel.intent_dim = 16\nmodel.align_dim = 8\n"
    << "model.alignment = " << to_string(alignment) << "\nmodel.fusion = flat\n"
    << "train.negatives = 10\ntrain.learning_rate = 0.01\ntrain.batch_size = 64\n"
    << "train.max_epochs = 200\ntrain.early_stop_cutoff = 10\n"
    << "eval.cutoffs = 10,20,40\nruntime.threads = 1\n";
  return c.str();
}

struct PlantedRun {
  int code = -1;
  double seconds = 0.0;
  std::size_t epochs = 0;
  double recall10 = 0.0;
  fs::path dir;
};

PlantedRun train_planted(const fs::path& work, const std::string& name, AlignmentVariant a) {
  PlantedRun r;
  r.dir = work / name;
  fs::create_directories(r.dir);
  const fs::path cfg = work / (name + ".cfg");
  std::ofstream(cfg) << planted_config(work / "data", a);
  const auto t0 = Clock::now();
  r.code = run_cli("train --config " + cfg.string() + " --out " + r.dir.string(), work / (name + ".log"));
  r.seconds = seconds_since(t0);
  if (r.code != 0) return r;
  const std::string log = slurp(r.dir / "epochs.jsonl");
  r.epochs = static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n'));
  r.recall10 = nlohmann::json::parse(slurp(r.dir / "metrics.json")).at("recall@10").get<double>();
  return r;
}

Verdict planted_overfit(const fs::path& work, PlantedRun& gmf) {
  if (run_cli("gen-synthetic --seed 7 --out " + (work / "data").string(), work / "gen.log") != 0) {
    return {false, "gen-synthetic failed, see " + (work / "gen.log").string()};
  }
  gmf = train_planted(work, "gmf_flat", AlignmentVariant::kGmfMlp);
  const PlantedRun concat = train_planted(work, "concat_flat", AlignmentVariant::kConcatMlp);
  auto ok = [](const PlantedRun& r) {
    return r.code == 0 && r.recall10 >= 0.95 && r.epochs <= 200 && r.seconds < 300.0;
  };
  auto describe = [](const std::string& label, const PlantedRun& r) {
    if (r.code != 0) return label + ": exit " + std::to_string(r.code);
    return label + ": test Recall@10 " + fmt(r.recall10) + " after " + std::to_string(r.epochs) +
           " epochs in " + fmt(r.seconds) + " s";
  };
  return {ok(gmf) && ok(concat), describe("gmf_mlp/flat", gmf) + "; " + describe("concat_mlp/flat", concat)};
}

/// epochs.jsonl with the wall-clock field removed from every record.
std::string masked_log(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("seconds");
    out += j.dump() + "\n";
  }
  return out;
}

Verdict determinism(const fs::path& work, const PlantedRun& first) {
  if (first.code != 0) return {false, "criterion 5 run unavailable"};
  const PlantedRun second = train_planted(work, "gmf_flat_repeat", AlignmentVariant::kGmfMlp);
  if (second.code != 0) return {false, "repeat run failed"};
  const bool logs = masked_log(first.dir / "epochs.jsonl") == masked_log(second.dir / "epochs.jsonl");
  const bool best = slurp(first.dir / "checkpoint_best.ckpt") == slurp(second.dir / "checkpoint_best.ckpt");
  const bool final = slurp(first.dir / "checkpoint_final.ckpt") == slurp(second.dir / "checkpoint_final.ckpt");
  const bool metrics = slurp(first.dir / "metrics.json") == slurp(second.dir / "metrics.json");
  return {logs && best && final && metrics,
          std::string("epoch logs (wall-clock field excluded) ") + (logs ? "equal" : "DIFFER") +
              ", best checkpoint " + (best ? "equal" : "DIFFERS") + ", final checkpoint " +
              (final ? "equal" : "DIFFERS") + ", metrics " + (metrics ? "equal" : "DIFFER")};
}

Verdict disentanglement(const fs::path& work, const PlantedRun& run) {
  if (run.code != 0) return {false, "criterion 5 run unavailable"};
  const RunConfig cfg = load_config(run.dir / "config.resolved");
  const DatasetSplit data = load_dataset(cfg.data_train, cfg.data_test);
  const ValidationSplit split =
      split_validation(data.train, cfg.train.validation_fraction, cfg.train.seed);
  const ModelParameters init = init_parameters(cfg.model, data.train.num_users(),
                                               data.train.num_items(), cfg.train.seed);
  const DmicfModel before(cfg.model, split.fit, init);
  export_intent_stats(before, "epoch0", work / "intents_epoch0.txt");
  const IntentStats s0 = compute_intent_stats(before, "epoch0");

  auto stats_of = [&](const std::string& tag) {
    ModelParameters trained = init;
    trained.load_checkpoint(load_checkpoint(run.dir / ("checkpoint_" + tag + ".ckpt")));
    const DmicfModel after(cfg.model, split.fit, trained);
    export_intent_stats(after, tag, work / ("intents_" + tag + ".txt"));
    return compute_intent_stats(after, tag);
  };
  auto grew = [&](const IntentStats& s) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < s0.h_user.variance.size(); ++k)
      n += s.h_user.variance[k] > s0.h_user.variance[k];
    return n;
  };
  // The judged model is the one criterion 5 scored on the test split.
  const IntentStats best = stats_of("best");
  const IntentStats last = stats_of("final");
  const double du = frobenius_distance(s0.user_prototypes, best.user_prototypes);
  const double dv = frobenius_distance(s0.item_prototypes, best.item_prototypes);
  const std::size_t dims = s0.h_user.variance.size();
  return {2 * grew(best) >= dims && du > 0.0 && dv > 0.0,
          std::to_string(grew(best)) + "/" + std::to_string(dims) +
              " user intent dimensions gained variance (final checkpoint " +
              std::to_string(grew(last)) + "/" + std::to_string(dims) +
              "); prototype drift user " + fmt(du) + ", item " + fmt(dv)};
}

// ---- 6 -----------------------------------------------------------------------

Verdict configuration_consistency() {
  const ModelConfig cfg;
  const auto predict = cfg.predict_mlp_spec().layer_widths;
  const bool widths = cfg.fused_width() == 34 && predict == std::vector<std::size_t>{34, 32, 1} &&
                      cfg.intent_mlp_spec().layer_widths == std::vector<std::size_t>{32, 48, 80} &&
                      cfg.align_mlp_spec().layer_widths == std::vector<std::size_t>{80, 128, 64, 16};
  auto g = std::make_shared<const InteractionGraph>(InteractionGraph::from_edges(2, 2, {{0, 0}, {1, 1}}));
  bool constructs = false, rejects = false;
  try {
    const DmicfModel ok(cfg, g, 1);
    constructs = true;
    ModelConfig seq = cfg;
    seq.fusion = FusionVariant::kSequential;
    const DmicfModel bad(seq, g, ok.parameters());
  } catch (const std::invalid_argument&) {
    rejects = true;
  }
  return {widths && constructs && rejects,
          "fused width " + std::to_string(cfg.fused_width()) + ", predict " +
              cfg.predict_mlp_spec().to_string() + ", mismatched head " +
              (rejects ? "rejected" : "ACCEPTED") + " at construction"};
}

// ---- 7 -----------------------------------------------------------------------

Verdict metric_oracles() {
  auto list = [](std::vector<std::size_t> items) {
    RankedList r;
    r.items = std::move(items);
    r.scores.assign(r.items.size(), 0.0);
    return r;
  };
  const std::size_t a = 1, b = 2, c = 3, x = 9;
  const std::size_t ab[] = {a, b}, abc[] = {a, b, c};
  const bool recall = recall_at(list({a, x, 5}), ab, 3) == 0.5 &&
                      recall_at(list({b, a, x}), ab, 3) == 1.0 &&
                      recall_at(list({a, c, b}), abc, 2) == 2.0 / 3.0;
  const double expected = (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
  const double got = ndcg_at(list({a, x, b}), ab, 3);
  const bool ndcg = std::abs(got - expected) <= 1e-6 &&
                    std::abs(ndcg_at(list({a, b, x}), ab, 3) - 1.0) <= 1e-6 &&
                    ndcg_at(list({x, 5, 6}), ab, 3) == 0.0;
  return {recall && ndcg, std::string("recall examples ") + (recall ? "exact" : "WRONG") +
                              ", ndcg([a,x,b]) = " + fmt(got) + " vs " + fmt(expected)};
}

// ---- 9 -----------------------------------------------------------------------

Verdict complexity() {
  const PlantedBlocks data = make_planted_blocks({});
  auto g = std::make_shared<const InteractionGraph>(
      InteractionGraph::from_edges(data.num_users, data.num_items, data.train));
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.num_prototypes = 8;
  cfg.intent_dim = 16;
  cfg.align_dim = 8;
  auto median_step = [&](std::size_t s) {
    DmicfModel model(cfg, g, 1);
    TrainConfig t;
    t.negatives = s;
    Trainer trainer(model, t);
    // One batch holds the whole training set (the default batch size exceeds it).
    const auto batch = trainer.make_batch(data.train);
    std::vector<double> times;
    for (int rep = 0; rep < 9; ++rep) {
      const auto t0 = Clock::now();
      trainer.step(batch);
      if (rep >= 2) times.push_back(seconds_since(t0));
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };
  const double t10 = median_step(10), t20 = median_step(20), t40 = median_step(40);
  const double r1 = t20 / t10, r2 = t40 / t20;
  return {r1 <= 2.5 && r2 <= 2.5, "median batch time S=10 " + fmt(t10) + " s, S=20 " + fmt(t20) +
                                      " s, S=40 " + fmt(t40) + " s; ratios " + fmt(r1) + ", " + fmt(r2)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dmicf_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  set_num_threads(1);

  PlantedRun planted;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"probability invariants", probability_invariants},
      {"simplex invariant", simplex_invariant},
      {"dense-oracle equivalence", dense_equivalence},
      {"planted-structure overfit", [&] { return planted_overfit(work, planted); }},
      {"configuration consistency", configuration_consistency},
      {"metric oracles", metric_oracles},
      {"determinism", [&] { return determinism(work, planted); }},
      {"complexity in S", complexity},
      {"disentanglement analog", [&] { return disentanglement(work, planted); }},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << k + 1 << ". " << criteria[k].first << ": "
              << v.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
