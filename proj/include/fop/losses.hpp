#pragma once

#include <string>
#include <vector>

#include "fop/numcore.hpp"

namespace fop {

enum class LossKind { ce, oc, joint, center, git, contrastive, triplet };
enum class OcReduction { mean, sum };

std::string to_string(LossKind k);
std::string to_string(OcReduction r);
LossKind parse_loss_kind(const std::string& token);
OcReduction parse_oc_reduction(const std::string& token);

// Identity index per batch instance, values in [0, C).
using Labels = std::vector<int>;

// Scalar loss, gradients for whichever inputs the loss touches (empty
// otherwise), and decomposition diagnostics.
struct LossOutput {
  double loss = 0.0;
  double ce_term = 0.0;
  double oc_term = 0.0;
  double center_term = 0.0;
  double push_term = 0.0;
  long same_pairs = 0;
  long diff_pairs = 0;
  Matrix grad_logits;  // B x C
  Matrix grad_fused;   // B x d
  Matrix grad_u;       // B x d (or anchor rows for triplet_loss)
  Matrix grad_v;       // B x d
  Matrix grad_n;       // negative rows, triplet_loss only
};

// Mean over the batch of -log softmax(logits)[y_i]; gradient (p - onehot)/B.
LossOutput ce_loss(const Eigen::Ref<const Matrix>& logits, const Labels& labels);

// Orthogonality constraint over fused embeddings. With S the same-identity
// and D the different-identity unordered pairs (i<j, self-pairs excluded):
//   mean reduction: (1 - mean_S cos) + |mean_D cos|
//   sum  reduction: (1 - sum_S cos)  + |sum_D cos|
// A missing pair kind contributes 0. Cosine is evaluated on L2-normalized
// rows n_i as (1 - (q_i+q_j)/2) + G_ij with G = N N^T and q = diag(G); this
// is algebraically dot/(|a||b|) but keeps the degenerate identities exact
// (bitwise-equal rows give exactly 1, axis-orthogonal rows exactly 0).
LossOutput oc_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                   OcReduction reduction = OcReduction::mean);

// L = L_CE + alpha * L_OC; gradients are the weighted sums.
LossOutput joint_loss(const Eigen::Ref<const Matrix>& logits,
                      const Eigen::Ref<const Matrix>& fused, const Labels& labels, double alpha,
                      OcReduction reduction = OcReduction::mean);

// All (u_i, v_j) cross-modal pairs: same-identity pairs pull with squared
// Euclidean distance, different-identity pairs push below the margin with
// max(0, margin - d)^2. Mean over the B_u*B_v pairs. Covers both the
// within-batch training mode and the full-pair benchmark mode (pass the
// whole set).
LossOutput contrastive_loss(const Eigen::Ref<const Matrix>& u,
                            const Eigen::Ref<const Matrix>& v, const Labels& labels_u,
                            const Labels& labels_v, double margin);

// Mean over aligned rows of max(0, |a-p| - |a-n| + margin), Euclidean.
LossOutput triplet_loss(const Eigen::Ref<const Matrix>& anchors,
                        const Eigen::Ref<const Matrix>& positives,
                        const Eigen::Ref<const Matrix>& negatives, double margin);

// Training mode: anchors u_i with positive v_i and every v_j, y_j != y_i, as
// negatives.
LossOutput triplet_within_batch(const Eigen::Ref<const Matrix>& u,
                                const Eigen::Ref<const Matrix>& v, const Labels& labels,
                                double margin);

// Benchmark mode: every (anchor u_a, positive v_p, negative v_n) with
// y_a == y_p, y_a != y_n. The anchor-negative distance is evaluated per
// triple; this enumeration cost is what the complexity benchmark measures.
LossOutput triplet_full(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& v,
                        const Labels& labels, double margin);

struct CenterState {
  Matrix centers;  // C x d
};

// 0.5 * mean |l_i - c_{y_i}|^2. When update_centers is set the per-class
// delta sum(c_j - l_i)/(1 + count_j) is applied with learning rate lambda_c
// after the loss/gradient evaluation (single-writer step).
LossOutput center_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                       CenterState& state, double lambda_c, bool update_centers);

// Center loss plus lambda_g * mean over cross-class (instance, center) pairs
// of 1/(1 + |l_i - c_j|^2).
LossOutput git_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                    CenterState& state, double lambda_c, double lambda_g, bool update_centers);

}  // namespace fop
