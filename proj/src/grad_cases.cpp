#include "hyp/grad_cases.hpp"

#include <cmath>

#include "hyp/model.hpp"

namespace hyp {

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.mutable_values()) v = g(rng);
  return t;
}

// Scalar read-out sum(w * y) with fixed random weights, so that every output
// coordinate influences the loss differently.
Tensor readout(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

std::vector<Tensor> htc_params(const HtcParams& p) { return {p.weight, p.bias}; }

void append(std::vector<Tensor>& a, const std::vector<Tensor>& b) { a.insert(a.end(), b.begin(), b.end()); }

// Space-like coordinates of moderate size for N points in d dimensions.
Tensor space_features(std::size_t n, std::size_t d, Rng& rng) { return random_tensor(n, d, rng, 0.7); }

}  // namespace

std::vector<GradCase> grad_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  auto reg = [&](const char* group, const char* name, std::function<double(Rng&, const GradCheckOptions&)> fn) {
    const std::uint64_t case_seed = seed * 1000003u + cases.size();
    cases.push_back({group, name, [fn, case_seed](const GradCheckOptions& o) {
                       Rng rng(case_seed);
                       return fn(rng, o);
                     }});
  };

  reg("geometry", "lift_euclidean", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.7, true);
    Tensor v = space_features(4, 3, rng);
    Tensor w = random_tensor(4, 4, rng);
    return grad_check([&] { return readout(lift_euclidean(v, k).data, w); }, {v, k.raw()}, o);
  });
  reg("geometry", "exp_map", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-0.8, true);
    Tensor base = space_features(4, 3, rng);
    Tensor raw_u = space_features(4, 3, rng);
    Tensor w = random_tensor(4, 4, rng);
    return grad_check(
        [&] {
          LorentzBatch x = project_to_manifold(base, k);
          // Project an ambient vector onto the tangent space at x.
          Tensor amb = concat_cols({Tensor::zeros(4, 1), raw_u});
          Tensor u = add(amb, mul(x.data, mul(k.tensor(), lorentz_inner(x.data, amb))));
          return readout(exp_map(x, u).data, w);
        },
        {base, raw_u, k.raw()}, o);
  });
  reg("geometry", "log_map", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-2.0, true);
    Tensor a = space_features(4, 3, rng);
    Tensor b = space_features(4, 3, rng);
    Tensor w = random_tensor(4, 4, rng);
    return grad_check(
        [&] { return readout(log_map(project_to_manifold(a, k), project_to_manifold(b, k)).data, w); },
        {a, b, k.raw()}, o);
  });
  reg("geometry", "distance", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.3, true);
    Tensor a = space_features(5, 3, rng);
    Tensor b = space_features(5, 3, rng);
    Tensor w = random_tensor(5, 1, rng);
    return grad_check(
        [&] { return readout(distance(project_to_manifold(a, k), project_to_manifold(b, k)), w); }, {a, b, k.raw()},
        o);
  });
  reg("geometry", "exp_log_round_trip", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.0, true);
    Tensor a = space_features(3, 2, rng);
    Tensor b = space_features(3, 2, rng);
    Tensor w = random_tensor(3, 3, rng);
    return grad_check(
        [&] {
          LorentzBatch x = project_to_manifold(a, k);
          return readout(exp_map(log_map(x, project_to_manifold(b, k))).data, w);
        },
        {a, b, k.raw()}, o);
  });
  reg("geometry", "midpoint", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.5, true);
    Tensor a = space_features(6, 3, rng);
    Tensor weights = Tensor::zeros(6, 1);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (double& v : weights.mutable_values()) v = u(rng);
    Tensor w = random_tensor(1, 4, rng);
    return grad_check([&] { return readout(lorentz_midpoint(project_to_manifold(a, k), weights).data, w); },
                      {a, weights, k.raw()}, o);
  });

  reg("blocks", "htc_curvature_change", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k1 = Curvature::from_value(-1.0, true);
    Curvature k2 = Curvature::from_value(-2.5, true);
    HtcParams p = make_htc(3, 4, k1, k2, rng);
    Tensor a = space_features(5, 3, rng);
    Tensor w = random_tensor(5, 5, rng);
    std::vector<Tensor> params{a, k1.raw(), k2.raw()};
    append(params, htc_params(p));
    return grad_check([&] { return readout(htc_forward(project_to_manifold(a, k1), p).data, w); }, params, o);
  });
  reg("blocks", "hrc_layernorm_relu", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k1 = Curvature::from_value(-1.0, true);
    Curvature k2 = Curvature::from_value(-3.0, true);
    LayerNormFn ln = make_layernorm(4);
    for (double& v : ln.gain.mutable_values()) v += 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
    for (double& v : ln.bias.mutable_values()) v += 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
    HrcSpec spec{{ln, ActivationFn{Activation::relu}}, k1, k2};
    Tensor a = space_features(5, 4, rng);
    Tensor w = random_tensor(5, 5, rng);
    return grad_check([&] { return readout(hrc_forward(project_to_manifold(a, k1), spec).data, w); },
                      {a, ln.gain, ln.bias, k1.raw(), k2.raw()}, o);
  });
  reg("blocks", "hrc_batchnorm_sigmoid", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.2, true);
    BatchNormFn bn = make_batchnorm(3);
    HrcSpec spec{{bn, ActivationFn{Activation::sigmoid}}, k, k};
    Tensor a = space_features(6, 3, rng);
    Tensor w = random_tensor(6, 4, rng);
    ForwardMode train_mode{true, nullptr};
    return grad_check([&] { return readout(hrc_forward(project_to_manifold(a, k), spec, train_mode).data, w); },
                      {a, bn.gain, bn.bias, k.raw()}, o);
  });
  reg("blocks", "positional_encoding", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.0, true);
    PositionalParams pe = make_positional(3, k, rng);
    Tensor a = space_features(5, 3, rng);
    Tensor w = random_tensor(5, 4, rng);
    std::vector<Tensor> params{a, k.raw()};
    append(params, htc_params(pe.htc));
    return grad_check([&] { return readout(hyp_positional_encoding(project_to_manifold(a, k), pe).data, w); },
                      params, o);
  });
  reg("blocks", "residual_concat", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-2.0, true);
    Tensor a = space_features(4, 3, rng);
    Tensor b = space_features(4, 3, rng);
    Tensor w = random_tensor(4, 7, rng);
    return grad_check(
        [&] {
          LorentzBatch x = project_to_manifold(a, k);
          LorentzBatch y = project_to_manifold(b, k);
          return readout(hyp_concat(hyp_residual(x, y), y).data, w);
        },
        {a, b, k.raw()}, o);
  });

  reg("attention", "focus_map", [](Rng& rng, const GradCheckOptions& o) {
    FocusParams f = make_focus(3.0);
    f.log_scale.mutable_values()[0] = 0.2;
    Tensor e = random_tensor(5, 4, rng);
    Tensor w = random_tensor(5, 4, rng);
    return grad_check([&] { return readout(focus_map(e, f), w); }, {e, f.log_scale}, o);
  });
  for (AttentionKind kind : {AttentionKind::linear, AttentionKind::softmax}) {
    const char* name = kind == AttentionKind::linear ? "linear_attention" : "softmax_attention";
    reg("attention", name, [kind](Rng& rng, const GradCheckOptions& o) {
      Curvature k1 = Curvature::from_value(-1.0, true);
      Curvature k2 = Curvature::from_value(-2.0, true);
      Curvature k3 = Curvature::from_value(-0.5, true);
      AttentionParams p = make_attention(3, 4, k1, k2, k3, kind, 2.0, rng);
      Tensor a = space_features(6, 3, rng);
      Tensor w = random_tensor(6, 5, rng);
      std::vector<Tensor> params{a, p.psi, p.focus.log_scale, k1.raw(), k2.raw(), k3.raw()};
      append(params, htc_params(p.query));
      append(params, htc_params(p.key));
      append(params, htc_params(p.value));
      return grad_check([&] { return readout(attention_forward(project_to_manifold(a, k1), p).data, w); }, params, o);
    });
  }
  reg("attention", "multi_head", [](Rng& rng, const GradCheckOptions& o) {
    Curvature k = Curvature::from_value(-1.0, true);
    Curvature k2 = Curvature::from_value(-1.5, true);
    MultiHeadAttention mh = make_multi_head(2, 3, 3, k, k2, k, AttentionKind::linear, 2.0, rng);
    Tensor a = space_features(5, 3, rng);
    Tensor w = random_tensor(5, 4, rng);
    std::vector<Tensor> params{a, k.raw(), k2.raw()};
    append(params, htc_params(*mh.combine));
    for (const auto& h : mh.heads) {
      append(params, htc_params(h.query));
      append(params, htc_params(h.key));
      append(params, htc_params(h.value));
      params.push_back(h.psi);
    }
    return grad_check([&] { return readout(multi_head(project_to_manifold(a, k), mh).data, w); }, params, o);
  });

  for (AttentionKind kind : {AttentionKind::linear, AttentionKind::softmax}) {
    const char* name = kind == AttentionKind::linear ? "one_layer_linear" : "one_layer_softmax";
    reg("model", name, [kind](Rng& rng, const GradCheckOptions& o) {
      HypformerConfig cfg;
      cfg.d_in = 4;
      cfg.d_hidden = 8;
      cfg.d_out = 3;
      cfg.layers = 1;
      cfg.gnn_layers = 1;
      cfg.attention = kind;
      cfg.kappa_hidden = 2.0;
      Hypformer m = make_hypformer(cfg, rng);
      // Nudge the zero-initialized vectors so that their gradients are generic.
      for (auto& [_, t] : m.named_parameters()) {
        if (t.rows() == 1 && t.impl() != m.fusion_logits.impl()) {
          for (double& v : t.mutable_values()) v += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
        }
      }
      const std::size_t n = 8;
      Tensor x = random_tensor(n, cfg.d_in, rng, 0.8);
      std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {0, 7}, {1, 5}};
      auto adj = normalized_adjacency(n, edges);
      std::vector<std::int64_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
      std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
      std::vector<Tensor> params{x};
      for (auto& [_, t] : m.named_parameters()) params.push_back(t);
      return grad_check([&] { return loss(forward(m, x, adj), labels, rows); }, params, o);
    });
  }
  return cases;
}

}  // namespace hyp
