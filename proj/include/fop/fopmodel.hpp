#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fop/numcore.hpp"

namespace fop {

enum class Fusion { gated, linear };

std::string to_string(Fusion f);
Fusion parse_fusion(const std::string& token);

struct FopDims {
  Index face_dim = 0;
  Index voice_dim = 0;
  Index embed_dim = 128;
  Index n_classes = 0;
  int att_layers = 1;  // affine layers in the gate MLP; tanh between, sigmoid after the last
};

// Every trainable tensor of the fusion head: the two modality projections,
// the attention-gate MLP and the bias-free identity classifier.
struct FopParams {
  FopDims dims;
  Fusion fusion = Fusion::gated;
  Matrix w_face;               // F x d
  Vector b_face;               // d
  Matrix w_voice;              // V x d
  Vector b_voice;              // d
  std::vector<Matrix> w_att;   // layer 0: 2d x d, then d x d
  std::vector<Vector> b_att;   // d each
  Matrix w_cls;                // d x C, no bias

  void check_shapes() const;  // throws ContractError
};

// Glorot-uniform weights, a = sqrt(6/(fan_in+fan_out)) per weight matrix;
// biases start at zero. The gate layers are drawn from a widened band
// (att_init_gain * a): a gate that is effectively constant across instances
// degenerates to linear fusion, and the orthogonality constraint then has no
// way to couple the two modalities. Seed-deterministic via the caller's Rng.
FopParams init_params(const FopDims& dims, Fusion fusion, Rng& rng, double att_init_gain = 8.0);

// u = l2_normalize(W_face^T b + b_face), v likewise.
std::pair<Vector, Vector> project(const FopParams& p, const Vector& face_embedding,
                                  const Vector& voice_embedding);

// k = sigmoid(gate MLP([u; v])); l = k .* tanh(u) + (1-k) .* tanh(v).
// Returns (l, k).
std::pair<Vector, Vector> fuse_gated(const FopParams& p, const Vector& u, const Vector& v);

// Ablation baseline: l = 0.5 (tanh(u) + tanh(v)); the gate frozen at 0.5.
Vector fuse_linear(const Vector& u, const Vector& v);

// W_cls^T l.
Vector logits(const FopParams& p, const Vector& fused);

// All per-batch intermediates needed by the analytic backward pass.
// Instances are rows throughout.
struct ForwardCache {
  Matrix af, av;              // pre-normalization projections, B x d
  Vector rf, rv;              // raw row norms of af/av (pre-clamp), B
  Matrix u, v;                // normalized projections, B x d
  std::vector<Matrix> att_h;  // tanh outputs of hidden gate layers (att_layers-1 entries)
  Matrix gate;                // k in (0,1)^{B x d}; empty under linear fusion
  Matrix tu, tv;              // tanh(u), tanh(v)
  Matrix fused;               // l, B x d
  Matrix logits;              // B x C
};

ForwardCache forward(const FopParams& p, const Matrix& face_batch, const Matrix& voice_batch);

// Checkpoint: text format, one named section per tensor, bit-exact round trip.
//   FVPARAMS 1 <F> <V> <d> <C> <gated|linear> <att_layers>
//   tensor <name> <rows> <cols>
//   <rows lines of cols values>
void save_params(const FopParams& p, const std::string& path);
FopParams load_params(const std::string& path);

}  // namespace fop
