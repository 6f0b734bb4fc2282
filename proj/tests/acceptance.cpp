// Acceptance run: prints one PASS/FAIL line per criterion, exits 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hyp/attention.hpp"
#include "hyp/cli.hpp"
#include "hyp/model.hpp"
#include "json.hpp"

using namespace hyp;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  failures += pass ? 0 : 1;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Tensor gaussian(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.mutable_values()) v = g(rng);
  return t;
}

LorentzBatch points(std::size_t n, std::size_t d, const Curvature& k, Rng& rng, double sd = 1.0) {
  return project_to_manifold(gaussian(n, d, rng, sd), k);
}

LorentzBatch row(const LorentzBatch& x, std::size_t i) {
  return {gather_rows(x.data, std::vector<std::size_t>{i}), x.curvature};
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "hypformer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  std::cerr << e.str();
  return code;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

// 1. Every Lorentz-producing operation lands on the hyperboloid.
void manifold_closure() {
  const auto t0 = Clock::now();
  Rng rng(1);
  using Op = std::function<LorentzBatch(std::size_t, std::size_t, const Curvature&, const Curvature&)>;
  std::vector<std::pair<std::string, Op>> ops;
  auto reg = [&](std::string name, Op op) { ops.emplace_back(std::move(name), std::move(op)); };

  reg("project", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return points(n, d, k, rng, 2.0);
  });
  reg("lift", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    // Unit-scale features; far larger norms put x_t^2 beyond what the residual can resolve in double.
    return lift_euclidean(gaussian(n, d, rng, 1.0 / std::sqrt(static_cast<double>(d))), k);
  });
  reg("origin", [&](std::size_t, std::size_t d, const Curvature& k, const Curvature&) { return origin(d, k); });
  reg("exp_map", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    LorentzBatch x = points(n, d, k, rng);
    return exp_map(x, log_map(x, points(n, d, k, rng)).data);
  });
  reg("exp_log", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return exp_map(log_map(points(n, d, k, rng), points(n, d, k, rng)));
  });
  reg("normalize", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return lorentz_normalize(add(points(n, d, k, rng).data, points(n, d, k, rng).data), k);
  });
  reg("midpoint", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    Tensor w = gaussian(n, 1, rng);
    for (double& v : w.mutable_values()) v = std::abs(v) + 1e-3;
    return lorentz_midpoint(points(n, d, k, rng), w);
  });
  reg("calibrate", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    return calibrate_time(gaussian(n, d, rng), k, k2);
  });
  reg("htc", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    HtcParams p = make_htc(d, 1 + rng() % 64, k, k2, rng);
    return htc_forward(points(n, d, k, rng), p);
  });
  reg("layernorm", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_layernorm(points(n, d, k, rng), make_layernorm(d));
  });
  reg("batchnorm", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    ForwardMode mode{true, &rng};
    return hyp_batchnorm(points(n, d, k, rng), make_batchnorm(d), mode);
  });
  reg("dropout", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    ForwardMode mode{true, &rng};
    return hyp_dropout(points(n, d, k, rng), 0.3, mode);
  });
  reg("relu", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_activation(points(n, d, k, rng), Activation::relu);
  });
  reg("sigmoid", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_activation(points(n, d, k, rng), Activation::sigmoid);
  });
  reg("hrc_compose", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    HrcSpec inner{{make_layernorm(d)}, k, k};
    HrcSpec outer{{ActivationFn{Activation::relu}}, k, k2};
    return hrc_forward(points(n, d, k, rng), compose(outer, inner));
  });
  reg("change_curvature", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    return change_curvature(points(n, d, k, rng), k2);
  });
  reg("concat", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_concat(points(n, d, k, rng), points(n, 1 + rng() % 64, k, rng));
  });
  reg("positional", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_positional_encoding(points(n, d, k, rng), make_positional(d, k, rng));
  });
  reg("residual", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature&) {
    return hyp_residual(points(n, d, k, rng), points(n, d, k, rng));
  });
  reg("linear_attention", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    AttentionParams p = make_attention(d, d, k, k2, k, AttentionKind::linear, 2.0, rng);
    return linear_attention(points(n, d, k, rng), p);
  });
  reg("softmax_attention", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    AttentionParams p = make_attention(d, d, k, k2, k2, AttentionKind::softmax, 2.0, rng);
    return softmax_attention(points(n, d, k, rng), p);
  });
  reg("multi_head", [&](std::size_t n, std::size_t d, const Curvature& k, const Curvature& k2) {
    MultiHeadAttention m = make_multi_head(2, d, d, k, k2, k, AttentionKind::linear, 3.0, rng);
    return multi_head(points(n, d, k, rng), m);
  });

  const std::vector<Curvature> ks{Curvature::from_value(-1.0), Curvature::from_value(-2.0),
                                  Curvature::from_value(-3.0)};
  double worst = 0.0;
  std::string worst_op;
  NoGradScope off;
  for (std::size_t i = 0; i < 10000; ++i) {
    const auto& [name, op] = ops[i % ops.size()];
    const std::size_t d = 2 + rng() % 63;
    const std::size_t n = 1 + rng() % 16;
    LorentzBatch y = op(n, d, ks[rng() % 3], ks[rng() % 3]);
    const double r = constraint_residual(y);
    if (!(r <= worst)) {
      worst = r;
      worst_op = name;
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-8 && secs < 30.0,
         "10000 invocations over " + std::to_string(ops.size()) + " ops, max residual " + fmt(worst) + " (" +
             worst_op + "), " + fmt(secs) + " s");
}

// 2. Pure curvature change scales distances by sqrt(ka/kb) and keeps their order.
void curvature_scaling() {
  const auto t0 = Clock::now();
  Rng rng(2);
  const std::vector<double> values{-0.5, -1.0, -2.0, -4.0};
  double worst = 0.0;
  std::size_t flips = 0;
  NoGradScope off;
  for (std::size_t t = 0; t < 1000; ++t) {
    const double ka = values[rng() % 4];
    const double kb = values[rng() % 4];
    const Curvature ca = Curvature::from_value(ka);
    const Curvature cb = Curvature::from_value(kb);
    const std::size_t d = 1 + rng() % 16;
    LorentzBatch z = points(3, d, ca, rng);
    LorentzBatch zb = change_curvature(z, cb);
    const std::size_t pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    double da[3], db[3];
    for (int p = 0; p < 3; ++p) {
      da[p] = distance(row(z, pairs[p][0]), row(z, pairs[p][1])).item();
      db[p] = distance(row(zb, pairs[p][0]), row(zb, pairs[p][1])).item();
      const double expected = std::sqrt(ka / kb) * da[p];
      worst = std::max(worst, std::abs(db[p] - expected) / expected);
    }
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        if ((da[p] < da[q]) != (db[p] < db[q])) ++flips;
  }
  const double secs = seconds_since(t0);
  report(2, worst <= 1e-8 && flips == 0 && secs < 10.0,
         "1000 triples, max rel error " + fmt(worst) + ", order flips " + std::to_string(flips) + ", " + fmt(secs) +
             " s");
}

// 3. Gradient suite through the CLI.
void gradients() {
  const auto t0 = Clock::now();
  std::string out;
  const int code = cli({"checkgrad", "--seed", "0", "--cases", "all"}, &out);
  double worst = 0.0;
  std::size_t cases = 0;
  for (const json& j : json_lines(out)) {
    worst = std::max(worst, j["max_rel_error"].get<double>());
    ++cases;
  }
  const double secs = seconds_since(t0);
  report(3, code == 0 && cases > 0 && worst < 1e-4 && secs < 120.0,
         std::to_string(cases) + " cases, max rel error " + fmt(worst) + ", exit " + std::to_string(code) + ", " +
             fmt(secs) + " s");
}

// 4. Reordered linear attention equals the explicit N x N form.
void linear_exactness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  NoGradScope off;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Curvature k1 = Curvature::from_value(-1.0);
    const Curvature k2 = Curvature::from_value(-2.0);
    const Curvature k3 = Curvature::from_value(-3.0);
    AttentionParams p = make_attention(8, 8, k1, k2, k3, AttentionKind::linear, 2.0, rng);
    for (double& b : p.query.bias.mutable_values()) b = 0.3;
    for (double& b : p.key.bias.mutable_values()) b = 0.3;
    LorentzBatch x = points(16, 8, k1, rng);
    Tensor a = focus_map(htc_forward(x, p.query).space(), p.focus);
    Tensor b = focus_map(htc_forward(x, p.key).space(), p.focus);
    Tensor v = htc_forward(x, p.value).space();
    Tensor expected = Tensor::zeros(16, 8);
    for (std::size_t i = 0; i < 16; ++i) {
      double s[16];
      double total = 0.0;
      for (std::size_t j = 0; j < 16; ++j) {
        s[j] = 0.0;
        for (std::size_t c = 0; c < 8; ++c) s[j] += a(i, c) * b(j, c);
        total += s[j];
      }
      for (std::size_t c = 0; c < 8; ++c) {
        double z = 0.0;
        for (std::size_t j = 0; j < 16; ++j) z += s[j] * v(j, c);
        double res = 0.0;
        for (std::size_t m = 0; m < 8; ++m) res += v(i, m) * p.psi(m, c);
        expected(i, c) = std::sqrt(2.0 / 3.0) * (z / (total + p.focus.den_eps) + res);
      }
    }
    Tensor got = linear_attention(x, p).space();
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got.values()[i] - expected.values()[i]));
  }
  const double secs = seconds_since(t0);
  report(4, worst < 1e-10 && secs < 10.0, "100 seeds, max abs diff " + fmt(worst) + ", " + fmt(secs) + " s");
}

// 5 and 6. Scaling shape and relative speed from one benchmark run.
void scaling(const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  const auto csv = dir / "bench.csv";
  const int code = cli({"bench", "--attention", "both", "--n-list", "1024,2048,4096,8192", "--d", "64", "--reps",
                        "5", "--out", csv.string()});
  struct Row {
    std::size_t n;
    std::string kind;
    bool skipped;
    double ms;
    double bytes;
  };
  std::vector<Row> rows;
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string n, kind, ms, bytes;
    std::getline(ls, n, ',');
    std::getline(ls, kind, ',');
    std::getline(ls, ms, ',');
    std::getline(ls, bytes, ',');
    const bool skipped = ms == "skipped";
    rows.push_back({std::stoul(n), kind, skipped, skipped ? 0.0 : std::stod(ms), skipped ? 0.0 : std::stod(bytes)});
  }
  const double secs = seconds_since(t0);
  std::cerr << slurp(csv);

  auto series = [&](const std::string& kind) {
    std::vector<Row> out;
    for (const auto& r : rows)
      if (r.kind == kind) out.push_back(r);
    return out;
  };
  const auto lin = series("linear");
  const auto soft = series("softmax");
  bool ok = code == 0 && lin.size() == 4 && soft.size() == 4 && secs < 300.0;
  std::string detail;
  if (ok) {
    std::string lt = "linear time x", st = "softmax time x", lm = "linear mem x", sm = "softmax mem x";
    for (std::size_t i = 1; i < 4; ++i) {
      const double r = lin[i].ms / lin[i - 1].ms;
      ok = ok && r >= 1.6 && r <= 2.6;
      lt += " " + fmt(r);
      const double m = lin[i].bytes / lin[i - 1].bytes;
      ok = ok && m <= 2.3;
      lm += " " + fmt(m);
      if (soft[i].skipped || soft[i - 1].skipped) {
        st += " skipped";
        sm += " skipped";
        continue;
      }
      const double s = soft[i].ms / soft[i - 1].ms;
      ok = ok && s >= 3.0 && s <= 5.0;
      st += " " + fmt(s);
      const double sb = soft[i].bytes / soft[i - 1].bytes;
      ok = ok && sb >= 3.2;
      sm += " " + fmt(sb);
    }
    detail = lt + "; " + st + "; " + lm + "; " + sm + "; " + fmt(secs) + " s";
  } else {
    detail = "bench exit " + std::to_string(code) + ", " + std::to_string(rows.size()) + " rows, " + fmt(secs) + " s";
  }
  report(5, ok, detail);

  if (lin.size() == 4 && soft.size() == 4 && !soft[3].skipped) {
    const double ratio = lin[3].ms / soft[3].ms;
    report(6, ratio <= 0.6,
           "N=8192 linear " + fmt(lin[3].ms) + " ms vs softmax " + fmt(soft[3].ms) + " ms, ratio " + fmt(ratio));
  } else {
    report(6, false, "no N=8192 timings for both kinds");
  }
}

HypformerConfig default_config() {
  HypformerConfig c;
  c.curvature_trainable = true;
  return c;
}

// 7 and 9. Default-config learning on the synthetic tree, with curvature checks.
void learning(const GraphDataset& tree) {
  const auto t0 = Clock::now();
  const HypformerConfig cfg = resolve_config(default_config(), tree);
  Rng rng(cfg.seed);
  Hypformer model = make_hypformer(cfg, rng);
  std::size_t bad_kappa = 0;
  std::size_t checked = 0;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochRecord& r) {
    ++checked;
    if (!(r.kappa_hidden < 0.0 && std::isfinite(r.kappa_hidden))) ++bad_kappa;
    for (const auto& [name, k] : model.curvatures()) {
      ++checked;
      if (!(k.value() < 0.0 && std::isfinite(k.value()))) ++bad_kappa;
    }
  };
  const TrainResult r = train(model, tree, opt);
  const double secs = seconds_since(t0);
  double max_val = 0.0;
  for (const auto& e : r.history) max_val = std::max(max_val, e.val_metric);
  const double first = r.history.front().train_loss;
  const double last = r.history.back().train_loss;
  report(7, max_val >= 0.9 && r.history.size() <= 200 && last < 0.5 * first && secs < 180.0,
         "best val " + fmt(max_val) + " at epoch " + std::to_string(r.best_epoch) + ", loss " + fmt(first) + " -> " +
             fmt(last) + ", " + std::to_string(r.history.size()) + " epochs, " + fmt(secs) + " s");
  report(9, bad_kappa == 0 && checked > 0,
         std::to_string(checked) + " curvature values checked, " + std::to_string(bad_kappa) + " invalid; final " +
             "kappa_hidden " + fmt(r.history.back().kappa_hidden));
}

// 8. Graph branch helps at matched seeds.
void ablation(const GraphDataset& tree) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    HypformerConfig c = default_config();
    c.seed = seed;
    const double full = run_variant(c, tree, Variant::full).best_val;
    const double no_graph = run_variant(c, tree, Variant::no_graph).best_val;
    wins += full >= no_graph ? 1 : 0;
    detail += "seed " + std::to_string(seed) + ": " + fmt(full) + " vs " + fmt(no_graph) + "; ";
  }
  report(8, wins == 3, detail + std::to_string(wins) + "/3 full >= no_graph");
}

// 10. Same seed, same bytes.
void determinism(const std::filesystem::path& dir, const GraphDataset& tree) {
  save_dataset(tree, dir / "tree");
  save_config(default_config(), dir / "config.json");
  const auto run = [&](const std::string& name) {
    return cli({"train", "--config", (dir / "config.json").string(), "--data", (dir / "tree").string(), "--out",
                (dir / name).string()});
  };
  const int a = run("a.jsonl");
  const int b = run("b.jsonl");
  const std::string ta = slurp(dir / "a.jsonl");
  const std::string tb = slurp(dir / "b.jsonl");
  report(10, a == 0 && b == 0 && !ta.empty() && ta == tb,
         "exit " + std::to_string(a) + "/" + std::to_string(b) + ", " + std::to_string(ta.size()) + " bytes, " +
             (ta == tb ? "identical" : "different"));
}

}  // namespace

int main() {
  const auto dir = std::filesystem::temp_directory_path() / ("hyp_acceptance_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  const GraphDataset tree = gen_tree({6, 3, 16, 0.5, 0});

  const auto guard = [](std::vector<int> ids, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      for (int id : ids) report(id, false, std::string("threw: ") + e.what());
    }
  };
  guard({1}, manifold_closure);
  guard({2}, curvature_scaling);
  guard({3}, gradients);
  guard({4}, linear_exactness);
  guard({5, 6}, [&] { scaling(dir); });
  guard({7, 9}, [&] { learning(tree); });
  guard({8}, [&] { ablation(tree); });
  guard({10}, [&] { determinism(dir, tree); });

  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
