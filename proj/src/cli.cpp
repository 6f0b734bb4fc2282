#include "hyp/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hyp/bench.hpp"
#include "hyp/checkpoint.hpp"
#include "hyp/errors.hpp"
#include "hyp/grad_cases.hpp"
#include "hyp/model.hpp"
#include "json.hpp"

#ifndef HYP_VERSION
#define HYP_VERSION "unknown"
#endif

namespace hyp {

namespace {

using ojson = nlohmann::ordered_json;

bool env_flag(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && std::string(v) == "1";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

ojson record_json(const EpochRecord& r) {
  ojson j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_metric"] = r.val_metric;
  j["test_metric"] = r.test_metric;
  j["kappa_hidden"] = r.kappa_hidden;
  return j;
}

// Maps library exceptions to exit codes with a diagnostic on `err`.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

struct TrainArgs {
  std::string config, data, out, checkpoint, manifest;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& err) {
  return guarded(err, [&] {
    HypformerConfig cfg = load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    const GraphDataset data = load_dataset(a.data);
    cfg = resolve_config(cfg, data);

    std::ofstream metrics(a.out);
    if (!metrics) throw DataError(DataErrc::io, "cannot write metrics file " + a.out);

    ojson manifest;
    manifest["config"] = ojson::parse(to_json_text(cfg));
    manifest["seed"] = cfg.seed;
    manifest["version"] = HYP_VERSION;
    manifest["start"] = utc_now();
    manifest["epochs"] = ojson::array();

    Rng rng(cfg.seed);
    Hypformer model = make_hypformer(cfg, rng);
    TrainOptions opt;
    opt.check_constraints = env_flag("HYPF_DEBUG_CONSTRAINTS");
    opt.on_epoch = [&](const EpochRecord& r) {
      const ojson j = record_json(r);
      metrics << j.dump() << '\n';
      metrics.flush();
      manifest["epochs"].push_back(j);
    };
    const TrainResult result = train(model, data, opt);
    if (!metrics) throw DataError(DataErrc::io, "failed writing metrics file " + a.out);
    if (!a.checkpoint.empty()) save_checkpoint(model, a.checkpoint);

    manifest["end"] = utc_now();
    if (!a.manifest.empty()) {
      std::ofstream mf(a.manifest);
      if (!mf) throw DataError(DataErrc::io, "cannot write manifest " + a.manifest);
      mf << manifest.dump(2) << '\n';
    }
    err << "trained " << result.history.size() << " epochs; best val " << result.best_val << " at epoch "
        << result.best_epoch << '\n';
    return int{kExitOk};
  });
}

struct EvalArgs {
  std::string checkpoint, data, split = "test";
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Split split = a.split == "train" ? Split::train : a.split == "val" ? Split::val : Split::test;
    const Hypformer model = load_checkpoint(a.checkpoint);
    const GraphDataset data = load_dataset(a.data);
    const double value = evaluate(model, data, split);
    ojson j;
    j["split"] = a.split;
    j["metric_name"] = to_string(model.config.eval_metric);
    j["value"] = value;
    out << j.dump() << '\n';
    return int{kExitOk};
  });
}

struct BenchArgs {
  std::string attention = "both";
  std::vector<std::size_t> n_list{1024, 2048, 4096, 8192};
  std::size_t d = 64;
  std::size_t reps = 5;
  std::string out;
  std::uint64_t seed = 0;
  double mem_cap_mb = 3072.0;
};

int cmd_bench(const BenchArgs& a, std::ostream& err) {
  return guarded(err, [&] {
    BenchOptions opt;
    if (a.attention == "linear") opt.kinds = {AttentionKind::linear};
    if (a.attention == "softmax") opt.kinds = {AttentionKind::softmax};
    if (a.n_list.empty()) throw ConfigError("--n-list is empty");
    for (std::size_t i = 1; i < a.n_list.size(); ++i) {
      if (a.n_list[i] <= a.n_list[i - 1]) throw ConfigError("--n-list must be strictly ascending");
    }
    if (a.reps < 1 || a.d < 1) throw ConfigError("--reps and --d must be >= 1");
    opt.n_list = a.n_list;
    opt.dim = a.d;
    opt.reps = a.reps;
    opt.seed = a.seed;
    opt.mem_cap_mb = a.mem_cap_mb;

    const double resolution = timer_resolution_ms();
    err << "bench: 1 thread, timer resolution " << resolution << " ms\n";
    const auto rows = run_bench(opt);
    std::ofstream csv(a.out);
    if (!csv) throw DataError(DataErrc::io, "cannot write " + a.out);
    csv << bench_csv(rows);
    for (const auto& r : rows) {
      if (r.n == opt.n_list.front() && r.median_ms && *r.median_ms < 100.0 * resolution) {
        err << "bench: median " << *r.median_ms << " ms at n=" << r.n << " is below 100 timer ticks\n";
        return int{kExitTimer};
      }
    }
    return int{kExitOk};
  });
}

struct CheckgradArgs {
  std::uint64_t seed = 0;
  std::string cases = "all";
  double inject = 0.0;
};

int cmd_checkgrad(const CheckgradArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    GradCheckOptions opt;
    opt.inject_error = a.inject;
    bool ok = true;
    for (const GradCase& c : grad_cases(a.seed)) {
      if (a.cases != "all" && a.cases != c.group) continue;
      const double e = c.run(opt);
      const bool pass = e < 1e-4;
      ok = ok && pass;
      ojson j;
      j["case"] = c.group + "/" + c.name;
      j["max_rel_error"] = e;
      j["pass"] = pass;
      out << j.dump() << '\n';
    }
    return ok ? int{kExitOk} : int{kExitFailure};
  });
}

int cmd_gen_tree(const TreeSpec& spec, const std::string& dir, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<std::string> warnings;
    GraphDataset d;
    try {
      d = gen_tree(spec, &warnings);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    save_dataset(d, dir);
    return int{kExitOk};
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyperbolic transformer training and diagnostics"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and stream per-epoch metrics");
  train_cmd->add_option("--config", ta.config, "JSON config file")->required();
  train_cmd->add_option("--data", ta.data, "Dataset directory")->required();
  train_cmd->add_option("--out", ta.out, "Metrics output (JSON lines)")->required();
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Where to write the best checkpoint");
  train_cmd->add_option("--manifest", ta.manifest, "Where to write a run manifest");
  train_cmd->add_option("--seed", ta.seed, "Override the config seed");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--split", ea.split)->check(CLI::IsMember({"train", "val", "test"}));

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Time one attention block forward+backward");
  bench_cmd->add_option("--attention", ba.attention)->check(CLI::IsMember({"linear", "softmax", "both"}));
  bench_cmd->add_option("--n-list", ba.n_list)->delimiter(',');
  bench_cmd->add_option("--d", ba.d);
  bench_cmd->add_option("--reps", ba.reps);
  bench_cmd->add_option("--out", ba.out)->required();
  bench_cmd->add_option("--seed", ba.seed);
  bench_cmd->add_option("--mem-cap-mb", ba.mem_cap_mb, "Skip softmax sizes needing more than this");

  CheckgradArgs ca;
  auto* grad_cmd = app.add_subcommand("checkgrad", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--seed", ca.seed);
  grad_cmd->add_option("--cases", ca.cases)
      ->check(CLI::IsMember({"all", "geometry", "blocks", "attention", "model"}));
  grad_cmd->add_option("--inject-grad-error", ca.inject)->group("");

  TreeSpec ts;
  std::string tree_dir;
  auto* tree_cmd = app.add_subcommand("gen-tree", "Write a synthetic tree dataset");
  tree_cmd->add_option("--depth", ts.depth);
  tree_cmd->add_option("--branching", ts.branching);
  tree_cmd->add_option("--dim", ts.dim);
  tree_cmd->add_option("--noise", ts.noise);
  tree_cmd->add_option("--seed", ts.seed);
  tree_cmd->add_option("--out", tree_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  }

  if (*train_cmd) return cmd_train(ta, err);
  if (*eval_cmd) return cmd_eval(ea, out, err);
  if (*bench_cmd) return cmd_bench(ba, err);
  if (*grad_cmd) return cmd_checkgrad(ca, out, err);
  if (*tree_cmd) return cmd_gen_tree(ts, tree_dir, err);
  return kExitFailure;
}

}  // namespace hyp
