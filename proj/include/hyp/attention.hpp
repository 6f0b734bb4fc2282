#pragma once

// Hyperbolic self-attention.
//
// Linear attention works on the space-like slices of Q, K, V (all at the
// attention curvature k2), reorders the product as phi(Q) (phi(K)^T V) so the
// cost is O(N d'^2), adds a psi(V) residual and recalibrates time at the output
// curvature k3. Softmax attention weights values by exp(-d^2(Q_i, K_j)/sqrt(d'))
// and aggregates with the Lorentzian midpoint; it is O(N^2 d').

#include <cstddef>
#include <optional>
#include <vector>

#include "hyp/blocks.hpp"

namespace hyp {

enum class AttentionKind { linear, softmax };

struct FocusParams {
  double power = 2.0;
  Tensor log_scale;  // t = exp(log_scale) > 0, trainable, init t = 1
  double den_eps = 1e-6;

  double scale() const;
};

FocusParams make_focus(double power);

// relu(e)/t raised elementwise to `power`, rescaled row-wise to the norm of
// relu(e)/t. All-zero rows stay zero.
Tensor focus_map(const Tensor& rows, const FocusParams& params);

struct AttentionParams {
  HtcParams query;
  HtcParams key;
  HtcParams value;
  Tensor psi;     // d' x d', bias-free
  Curvature out;  // k3
  FocusParams focus;
  AttentionKind kind = AttentionKind::linear;

  std::size_t dim() const { return query.out_dim(); }
  // Curvature of the attention output (k3 for linear, k2 for softmax).
  const Curvature& output_curvature() const { return kind == AttentionKind::linear ? out : value.out; }
};

AttentionParams make_attention(std::size_t in_dim, std::size_t dim, const Curvature& in, const Curvature& attn,
                               const Curvature& out, AttentionKind kind, double power, Rng& rng);

// Row-normalized kernel aggregation in O(N d'^2):
//   Z = A (B^T V) / (A (B^T 1) + den_eps).
Tensor linear_aggregate(const Tensor& query_features, const Tensor& key_features, const Tensor& values,
                        double den_eps);

LorentzBatch linear_attention(const LorentzBatch& x, const AttentionParams& params);

// Attention weights alpha_ij = softmax_j(-d^2(q_i, k_j) / sqrt(d')), forward only (N x N).
Tensor softmax_attention_weights(const LorentzBatch& q, const LorentzBatch& k);

// Unnormalized aggregation sum_j alpha_ij v_j (N x (d'+1)) as one fused
// primitive; differentiable in q, k, v and the curvature. Holds at most three
// N x N buffers at once.
Tensor softmax_aggregate(const LorentzBatch& q, const LorentzBatch& k, const LorentzBatch& v);

LorentzBatch softmax_attention(const LorentzBatch& x, const AttentionParams& params);

LorentzBatch attention_forward(const LorentzBatch& x, const AttentionParams& params);

// Full-width heads combined by hyperbolic concatenation and an HTC back to d'.
struct MultiHeadAttention {
  std::vector<AttentionParams> heads;
  std::optional<HtcParams> combine;  // present when heads.size() > 1
};

MultiHeadAttention make_multi_head(std::size_t heads, std::size_t in_dim, std::size_t dim, const Curvature& in,
                                   const Curvature& attn, const Curvature& out, AttentionKind kind, double power,
                                   Rng& rng);

LorentzBatch multi_head(const LorentzBatch& x, const MultiHeadAttention& attention);

}  // namespace hyp
