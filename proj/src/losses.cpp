#include "fop/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fop/errors.hpp"

namespace fop {

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::oc: return "oc";
    case LossKind::joint: return "joint";
    case LossKind::center: return "center";
    case LossKind::git: return "git";
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
  }
  throw ContractError("to_string: bad LossKind");
}

std::string to_string(OcReduction r) {
  return r == OcReduction::mean ? "mean" : "sum";
}

LossKind parse_loss_kind(const std::string& token) {
  if (token == "ce") return LossKind::ce;
  if (token == "oc") return LossKind::oc;
  if (token == "joint") return LossKind::joint;
  if (token == "center") return LossKind::center;
  if (token == "git") return LossKind::git;
  if (token == "contrastive") return LossKind::contrastive;
  if (token == "triplet") return LossKind::triplet;
  throw ConfigError("unknown loss kind '" + token + "'");
}

OcReduction parse_oc_reduction(const std::string& token) {
  if (token == "mean") return OcReduction::mean;
  if (token == "sum") return OcReduction::sum;
  throw ConfigError("unknown oc reduction '" + token + "'");
}

namespace {

void check_labels(const Labels& labels, Index batch, Index n_classes, const char* who) {
  if (static_cast<Index>(labels.size()) != batch)
    throw ContractError(std::string(who) + ": " + std::to_string(labels.size()) +
                        " labels for batch of " + std::to_string(batch));
  for (int y : labels)
    if (y < 0 || (n_classes >= 0 && y >= n_classes))
      throw ContractError(std::string(who) + ": label " + std::to_string(y) + " out of range");
}

}  // namespace

LossOutput ce_loss(const Eigen::Ref<const Matrix>& logits, const Labels& labels) {
  const Index B = logits.rows();
  const Index C = logits.cols();
  if (B < 1) throw ContractError("ce_loss: empty batch");
  check_labels(labels, B, C, "ce_loss");

  const Vector row_max = logits.rowwise().maxCoeff();
  const Matrix shifted = logits.colwise() - row_max;
  const Matrix e = shifted.array().exp();
  const Vector sums = e.rowwise().sum();

  LossOutput out;
  double total = 0.0;
  for (Index i = 0; i < B; ++i) total -= shifted(i, labels[i]) - std::log(sums(i));
  out.loss = total / static_cast<double>(B);
  out.ce_term = out.loss;

  out.grad_logits = ((e.array().colwise() / sums.array()) / static_cast<double>(B)).matrix();
  for (Index i = 0; i < B; ++i) out.grad_logits(i, labels[i]) -= 1.0 / static_cast<double>(B);
  return out;
}

LossOutput oc_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                   OcReduction reduction) {
  const Index B = fused.rows();
  if (B < 2) throw ContractError("oc_loss: batch must hold at least 2 instances");
  check_labels(labels, B, -1, "oc_loss");

  const Vector raw_norms = fused.rowwise().norm();
  const Vector r = raw_norms.cwiseMax(kNormEps);
  const Matrix n = (fused.array().colwise() / r.array()).matrix();
  const Matrix gram = n * n.transpose();
  const Vector q = gram.diagonal();

  double sum_same = 0.0, sum_diff = 0.0;
  long n_same = 0, n_diff = 0;
  for (Index i = 0; i < B; ++i)
    for (Index j = i + 1; j < B; ++j) {
      const double c =
          std::clamp((1.0 - 0.5 * (q(i) + q(j))) + gram(i, j), -1.0, 1.0);
      if (labels[i] == labels[j]) {
        sum_same += c;
        ++n_same;
      } else {
        sum_diff += c;
        ++n_diff;
      }
    }

  const bool mean = reduction == OcReduction::mean;
  const double same_stat = mean && n_same > 0 ? sum_same / n_same : sum_same;
  const double diff_stat = mean && n_diff > 0 ? sum_diff / n_diff : sum_diff;
  const double same_term = n_same > 0 ? 1.0 - same_stat : 0.0;
  const double diff_term = n_diff > 0 ? std::abs(diff_stat) : 0.0;

  LossOutput out;
  out.loss = same_term + diff_term;
  out.oc_term = out.loss;
  out.same_pairs = n_same;
  out.diff_pairs = n_diff;

  // d cos / d n_i = n_j - n_i (from the 1 - |n_i - n_j|^2/2 form); the pair
  // weights fold into a symmetric zero-diagonal matrix W so the whole
  // accumulation is dn = W n - diag(W 1) n, then the normalization Jacobian
  // (I - n n^T)/r maps dn back to the fused embeddings.
  const double w_same = n_same > 0 ? -(mean ? 1.0 / n_same : 1.0) : 0.0;
  const double sgn = diff_stat > 0 ? 1.0 : (diff_stat < 0 ? -1.0 : 0.0);
  const double w_diff = n_diff > 0 ? sgn * (mean ? 1.0 / n_diff : 1.0) : 0.0;

  Matrix w = Matrix::Zero(B, B);
  for (Index i = 0; i < B; ++i)
    for (Index j = i + 1; j < B; ++j) {
      const double wij = labels[i] == labels[j] ? w_same : w_diff;
      w(i, j) = wij;
      w(j, i) = wij;
    }
  const Vector wsum = w.rowwise().sum();
  const Matrix dn = w * n - (n.array().colwise() * wsum.array()).matrix();

  out.grad_fused = Matrix(B, fused.cols());
  for (Index i = 0; i < B; ++i) {
    if (raw_norms(i) >= kNormEps) {
      const double along = dn.row(i).dot(n.row(i));
      out.grad_fused.row(i) = (dn.row(i) - along * n.row(i)) / raw_norms(i);
    } else {
      out.grad_fused.row(i) = dn.row(i) / kNormEps;
    }
  }
  return out;
}

LossOutput joint_loss(const Eigen::Ref<const Matrix>& logits,
                      const Eigen::Ref<const Matrix>& fused, const Labels& labels, double alpha,
                      OcReduction reduction) {
  if (alpha < 0) throw ContractError("joint_loss: alpha must be >= 0");
  LossOutput ce = ce_loss(logits, labels);
  LossOutput oc = oc_loss(fused, labels, reduction);
  LossOutput out;
  out.loss = ce.loss + alpha * oc.loss;
  out.ce_term = ce.loss;
  out.oc_term = oc.loss;
  out.same_pairs = oc.same_pairs;
  out.diff_pairs = oc.diff_pairs;
  out.grad_logits = std::move(ce.grad_logits);
  out.grad_fused = alpha * oc.grad_fused;
  return out;
}

LossOutput contrastive_loss(const Eigen::Ref<const Matrix>& u,
                            const Eigen::Ref<const Matrix>& v, const Labels& labels_u,
                            const Labels& labels_v, double margin) {
  const Index Bu = u.rows(), Bv = v.rows();
  if (Bu < 1 || Bv < 1) throw ContractError("contrastive_loss: empty side");
  if (u.cols() != v.cols()) throw ContractError("contrastive_loss: dim mismatch");
  check_labels(labels_u, Bu, -1, "contrastive_loss");
  check_labels(labels_v, Bv, -1, "contrastive_loss");

  LossOutput out;
  // The pair loop runs on transposed copies so every instance is one
  // contiguous column; row slices of a column-major matrix would thrash the
  // cache once n grows and distort the benchmark's scaling.
  const Matrix ut = u.transpose();
  const Matrix vt = v.transpose();
  Matrix gu = Matrix::Zero(u.cols(), Bu);
  Matrix gv = Matrix::Zero(v.cols(), Bv);
  const double inv = 1.0 / (static_cast<double>(Bu) * static_cast<double>(Bv));
  double total = 0.0;
  Vector diff(u.cols());
  for (Index i = 0; i < Bu; ++i)
    for (Index j = 0; j < Bv; ++j) {
      diff = ut.col(i) - vt.col(j);
      const double d2 = diff.squaredNorm();
      if (labels_u[i] == labels_v[j]) {
        total += d2;
        gu.col(i) += 2.0 * inv * diff;
        gv.col(j) -= 2.0 * inv * diff;
        ++out.same_pairs;
      } else {
        ++out.diff_pairs;
        const double dist = std::sqrt(d2);
        if (dist < margin) {
          const double t = margin - dist;
          total += t * t;
          if (dist > kNormEps) {
            const double coef = -2.0 * t / dist * inv;
            gu.col(i) += coef * diff;
            gv.col(j) -= coef * diff;
          }
        }
      }
    }
  out.grad_u = gu.transpose();
  out.grad_v = gv.transpose();
  out.loss = total * inv;
  return out;
}

namespace {

// One triplet term over preallocated difference buffers: returns
// max(0, |a-p| - |a-n| + margin) with gradients accumulated at `weight`.
// Operands are contiguous columns of transposed matrices and the buffers are
// reused, so the enumeration loops stay allocation-free and cache-friendly.
// Zero-distance directions get a zero subgradient.
struct TripletScratch {
  Vector ap, an;
  explicit TripletScratch(Index d) : ap(d), an(d) {}
};

template <typename ColA, typename ColP, typename ColN, typename GradA, typename GradP,
          typename GradN>
inline double triplet_term(const ColA& a, const ColP& p, const ColN& n, double margin,
                           double weight, TripletScratch& s, GradA&& ga, GradP&& gp,
                           GradN&& gn) {
  s.ap = a - p;
  s.an = a - n;
  const double dap = s.ap.norm();
  const double dan = s.an.norm();
  const double viol = dap - dan + margin;
  if (viol <= 0) return 0.0;
  if (dap > kNormEps) {
    ga += weight / dap * s.ap;
    gp -= weight / dap * s.ap;
  }
  if (dan > kNormEps) {
    ga -= weight / dan * s.an;
    gn += weight / dan * s.an;
  }
  return viol;
}

}  // namespace

LossOutput triplet_loss(const Eigen::Ref<const Matrix>& anchors,
                        const Eigen::Ref<const Matrix>& positives,
                        const Eigen::Ref<const Matrix>& negatives, double margin) {
  const Index B = anchors.rows();
  if (B < 1) throw ContractError("triplet_loss: empty batch");
  if (positives.rows() != B || negatives.rows() != B || anchors.cols() != positives.cols() ||
      anchors.cols() != negatives.cols())
    throw ContractError("triplet_loss: misaligned triplet rows");

  LossOutput out;
  const Matrix at = anchors.transpose();
  const Matrix pt = positives.transpose();
  const Matrix nt = negatives.transpose();
  Matrix ga = Matrix::Zero(anchors.cols(), B);
  Matrix gp = Matrix::Zero(anchors.cols(), B);
  Matrix gn = Matrix::Zero(anchors.cols(), B);
  const double inv = 1.0 / static_cast<double>(B);
  double total = 0.0;
  TripletScratch scratch(anchors.cols());
  for (Index i = 0; i < B; ++i) {
    total += triplet_term(at.col(i), pt.col(i), nt.col(i), margin, inv, scratch, ga.col(i),
                          gp.col(i), gn.col(i));
  }
  out.grad_u = ga.transpose();
  out.grad_v = gp.transpose();
  out.grad_n = gn.transpose();
  out.loss = total * inv;
  return out;
}

LossOutput triplet_within_batch(const Eigen::Ref<const Matrix>& u,
                                const Eigen::Ref<const Matrix>& v, const Labels& labels,
                                double margin) {
  const Index B = u.rows();
  if (B < 2) throw ContractError("triplet_within_batch: need at least 2 instances");
  if (v.rows() != B || u.cols() != v.cols())
    throw ContractError("triplet_within_batch: shape mismatch");
  check_labels(labels, B, -1, "triplet_within_batch");

  long count = 0;
  for (Index i = 0; i < B; ++i)
    for (Index j = 0; j < B; ++j)
      if (labels[i] != labels[j]) ++count;
  LossOutput out;
  out.grad_u = Matrix::Zero(B, u.cols());
  out.grad_v = Matrix::Zero(B, u.cols());
  if (count == 0) return out;

  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  const Matrix ut = u.transpose();
  const Matrix vt = v.transpose();
  Matrix gu = Matrix::Zero(u.cols(), B);
  Matrix gv = Matrix::Zero(u.cols(), B);
  TripletScratch scratch(u.cols());
  for (Index i = 0; i < B; ++i) {
    for (Index j = 0; j < B; ++j) {
      if (labels[i] == labels[j]) continue;
      total += triplet_term(ut.col(i), vt.col(i), vt.col(j), margin, inv, scratch, gu.col(i),
                            gv.col(i), gv.col(j));
    }
  }
  out.grad_u = gu.transpose();
  out.grad_v = gv.transpose();
  out.loss = total * inv;
  return out;
}

LossOutput triplet_full(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Matrix>& v,
                        const Labels& labels, double margin) {
  const Index B = u.rows();
  if (B < 2) throw ContractError("triplet_full: need at least 2 instances");
  if (v.rows() != B || u.cols() != v.cols()) throw ContractError("triplet_full: shape mismatch");
  check_labels(labels, B, -1, "triplet_full");

  long count = 0;
  {
    std::vector<long> class_count;
    for (int y : labels) {
      if (y >= static_cast<int>(class_count.size())) class_count.resize(y + 1, 0);
      ++class_count[y];
    }
    for (Index a = 0; a < B; ++a) {
      const long same = class_count[labels[a]];
      count += same * (B - same);
    }
  }
  LossOutput out;
  out.grad_u = Matrix::Zero(B, u.cols());
  out.grad_v = Matrix::Zero(B, u.cols());
  if (count == 0) return out;

  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  const Matrix ut = u.transpose();
  const Matrix vt = v.transpose();
  Matrix gu = Matrix::Zero(u.cols(), B);
  Matrix gv = Matrix::Zero(u.cols(), B);
  TripletScratch scratch(u.cols());
  for (Index a = 0; a < B; ++a) {
    for (Index p = 0; p < B; ++p) {
      if (labels[p] != labels[a]) continue;
      for (Index nidx = 0; nidx < B; ++nidx) {
        if (labels[nidx] == labels[a]) continue;
        total += triplet_term(ut.col(a), vt.col(p), vt.col(nidx), margin, inv, scratch,
                              gu.col(a), gv.col(p), gv.col(nidx));
      }
    }
  }
  out.grad_u = gu.transpose();
  out.grad_v = gv.transpose();
  out.loss = total * inv;
  return out;
}

namespace {

void apply_center_update(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                         Matrix& centers, double lambda_c) {
  const Index B = fused.rows();
  std::vector<long> count(centers.rows(), 0);
  Matrix delta_num = Matrix::Zero(centers.rows(), centers.cols());
  for (Index i = 0; i < B; ++i) {
    delta_num.row(labels[i]) += centers.row(labels[i]) - fused.row(i);
    ++count[labels[i]];
  }
  for (Index j = 0; j < centers.rows(); ++j)
    if (count[j] > 0)
      centers.row(j) -= lambda_c / (1.0 + static_cast<double>(count[j])) * delta_num.row(j);
}

}  // namespace

LossOutput center_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                       CenterState& state, double lambda_c, bool update_centers) {
  const Index B = fused.rows();
  if (B < 1) throw ContractError("center_loss: empty batch");
  if (state.centers.cols() != fused.cols())
    throw ContractError("center_loss: center dim mismatch");
  check_labels(labels, B, state.centers.rows(), "center_loss");

  LossOutput out;
  out.grad_fused = Matrix(B, fused.cols());
  double total = 0.0;
  for (Index i = 0; i < B; ++i) {
    const RowVector diff = fused.row(i) - state.centers.row(labels[i]);
    total += diff.squaredNorm();
    out.grad_fused.row(i) = diff / static_cast<double>(B);
  }
  out.loss = 0.5 * total / static_cast<double>(B);
  out.center_term = out.loss;
  if (update_centers) apply_center_update(fused, labels, state.centers, lambda_c);
  return out;
}

LossOutput git_loss(const Eigen::Ref<const Matrix>& fused, const Labels& labels,
                    CenterState& state, double lambda_c, double lambda_g, bool update_centers) {
  LossOutput out = center_loss(fused, labels, state, lambda_c, /*update_centers=*/false);

  const Index B = fused.rows();
  const Index C = state.centers.rows();
  const long n_pairs = static_cast<long>(B) * (C - 1);
  if (n_pairs > 0) {
    const double inv = 1.0 / static_cast<double>(n_pairs);
    double push = 0.0;
    for (Index i = 0; i < B; ++i)
      for (Index j = 0; j < C; ++j) {
        if (j == labels[i]) continue;
        const RowVector diff = fused.row(i) - state.centers.row(j);
        const double denom = 1.0 + diff.squaredNorm();
        push += 1.0 / denom;
        out.grad_fused.row(i) -= lambda_g * inv * 2.0 / (denom * denom) * diff;
      }
    out.push_term = push * inv;
    out.loss += lambda_g * out.push_term;
  }
  if (update_centers) apply_center_update(fused, labels, state.centers, lambda_c);
  return out;
}

}  // namespace fop
