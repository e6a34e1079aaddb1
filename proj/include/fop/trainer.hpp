#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fop/dataio.hpp"
#include "fop/fopmodel.hpp"
#include "fop/losses.hpp"

namespace fop {

struct TrainConfig {
  Index embed_dim = 128;
  int att_layers = 1;
  double att_init_gain = 8.0;
  Fusion fusion = Fusion::gated;
  LossKind loss = LossKind::joint;
  double alpha = 1.0;
  OcReduction oc_reduction = OcReduction::mean;
  int batch_size = 128;
  int epochs = 50;
  double lr = 1e-3;
  double lr_decay = 0.95;  // multiplied in after every epoch
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double contrastive_margin = 0.5;
  double triplet_margin = 0.3;
  double lambda_c = 0.5;
  double lambda_g = 1.0;
  std::uint64_t seed = 42;
  int val_neg_per_pos = 1;

  void validate() const;  // throws ConfigError
};

struct FopGrads {
  Matrix w_face;
  Vector b_face;
  Matrix w_voice;
  Vector b_voice;
  std::vector<Matrix> w_att;
  std::vector<Vector> b_att;
  Matrix w_cls;
};

// Exact analytic gradients of the configured loss with respect to every
// parameter tensor, chained through logits, fusion gate, tanh, sigmoid, the
// L2 normalizations and the projections. The input embeddings receive no
// gradient (frozen encoders).
FopGrads backward(const FopParams& params, const Matrix& face_batch, const Matrix& voice_batch,
                  const ForwardCache& cache, const LossOutput& loss);

struct AdamState {
  std::vector<Matrix> m;  // first moments, one per tensor in declaration order
  std::vector<Matrix> v;  // second moments
  long step = 0;
};

AdamState init_adam(const FopParams& params);

// Standard bias-corrected Adam update.
void adam_step(FopParams& params, const FopGrads& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

// Loss dispatch for one forward pass. center/git need live center state and
// are combined with CE; contrastive/triplet act on the projected embeddings.
LossOutput compute_loss(const TrainConfig& cfg, const ForwardCache& cache, const Labels& labels,
                        CenterState* centers, bool update_centers);

struct EpochStats {
  int epoch = 0;       // 1-based
  double loss = 0.0;   // mean over batches
  double ce_term = 0.0;
  double oc_term = 0.0;
  double val_eer = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;     // learning rate used during this epoch
};

struct TrainResult {
  FopParams params;
  std::vector<EpochStats> history;
};

// Epoch loop: shuffle the train-split face instances, pair each with a
// uniformly drawn same-identity voice instance (fresh pairing per epoch),
// forward -> loss -> backward -> adam. The learning rate for epoch t (0-based)
// is lr * lr_decay^t. Any non-finite loss aborts with a NumericError naming
// the epoch, batch and loss terms.
TrainResult train(const EmbeddingBank& face, const EmbeddingBank& voice,
                  const LabelTable& labels, const TrainConfig& cfg);

// CSV: epoch,loss,ce_term,oc_term,val_eer,lr
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace fop
