#include "fop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "fop/evalsuite.hpp"

namespace fop {

void TrainConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (att_layers < 1) throw ConfigError("att_layers must be >= 1");
  if (att_init_gain <= 0) throw ConfigError("att_init_gain must be > 0");
  if (alpha < 0) throw ConfigError("alpha must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must be in (0, 1]");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("adam betas must be in [0, 1)");
  if (adam_eps <= 0) throw ConfigError("adam_eps must be > 0");
  if (contrastive_margin < 0 || triplet_margin < 0) throw ConfigError("margins must be >= 0");
  if (lambda_c < 0 || lambda_g < 0) throw ConfigError("lambda_c/lambda_g must be >= 0");
  if (val_neg_per_pos < 1) throw ConfigError("val_neg_per_pos must be >= 1");
}

namespace {

FopGrads zero_like(const FopParams& p) {
  FopGrads g;
  g.w_face = Matrix::Zero(p.w_face.rows(), p.w_face.cols());
  g.b_face = Vector::Zero(p.b_face.size());
  g.w_voice = Matrix::Zero(p.w_voice.rows(), p.w_voice.cols());
  g.b_voice = Vector::Zero(p.b_voice.size());
  for (const auto& w : p.w_att) g.w_att.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : p.b_att) g.b_att.push_back(Vector::Zero(b.size()));
  g.w_cls = Matrix::Zero(p.w_cls.rows(), p.w_cls.cols());
  return g;
}

// Backward through u = a / max(|a|, eps) row-wise: inside the guard the
// Jacobian is (I - u u^T)/|a|, below it the map is linear with slope 1/eps.
Matrix normalization_backward(const Matrix& du, const Matrix& u, const Vector& raw_norms) {
  Matrix da(du.rows(), du.cols());
  for (Index i = 0; i < du.rows(); ++i) {
    if (raw_norms(i) >= kNormEps) {
      const double along = du.row(i).dot(u.row(i));
      da.row(i) = (du.row(i) - along * u.row(i)) / raw_norms(i);
    } else {
      da.row(i) = du.row(i) / kNormEps;
    }
  }
  return da;
}

}  // namespace

FopGrads backward(const FopParams& params, const Matrix& face_batch, const Matrix& voice_batch,
                  const ForwardCache& cache, const LossOutput& loss) {
  const Index B = face_batch.rows();
  const Index d = params.dims.embed_dim;
  if (cache.fused.rows() != B || voice_batch.rows() != B)
    throw ContractError("backward: cache/batch size mismatch");

  FopGrads g = zero_like(params);

  const bool has_dz = loss.grad_logits.size() > 0;
  const bool has_dl = loss.grad_fused.size() > 0;

  Matrix dfused = has_dl ? loss.grad_fused : Matrix::Zero(B, d);
  if (has_dz) {
    g.w_cls = cache.fused.transpose() * loss.grad_logits;
    dfused += loss.grad_logits * params.w_cls.transpose();
  }

  Matrix du(B, d), dv(B, d);
  if (params.fusion == Fusion::gated) {
    const Matrix dtu = dfused.cwiseProduct(cache.gate);
    const Matrix dtv = (dfused.array() * (1.0 - cache.gate.array())).matrix();
    const Matrix dk = dfused.cwiseProduct(cache.tu - cache.tv);

    // Sigmoid backward on the last gate layer, then down the tanh stack.
    Matrix da = (dk.array() * cache.gate.array() * (1.0 - cache.gate.array())).matrix();
    Matrix dh;  // gradient w.r.t. [u, v] once the loop hits layer 0
    for (int i = static_cast<int>(params.w_att.size()) - 1; i >= 0; --i) {
      Matrix input;
      if (i == 0) {
        input.resize(B, 2 * d);
        input.leftCols(d) = cache.u;
        input.rightCols(d) = cache.v;
      } else {
        input = cache.att_h[i - 1];
      }
      g.w_att[i] = input.transpose() * da;
      g.b_att[i] = da.colwise().sum().transpose();
      const Matrix dinput = da * params.w_att[i].transpose();
      if (i > 0)
        da = (dinput.array() * (1.0 - cache.att_h[i - 1].array().square())).matrix();
      else
        dh = dinput;
    }
    du = dh.leftCols(d) + (dtu.array() * (1.0 - cache.tu.array().square())).matrix();
    dv = dh.rightCols(d) + (dtv.array() * (1.0 - cache.tv.array().square())).matrix();
  } else {
    du = (0.5 * dfused.array() * (1.0 - cache.tu.array().square())).matrix();
    dv = (0.5 * dfused.array() * (1.0 - cache.tv.array().square())).matrix();
  }

  if (loss.grad_u.size() > 0) du += loss.grad_u;
  if (loss.grad_v.size() > 0) dv += loss.grad_v;

  const Matrix daf = normalization_backward(du, cache.u, cache.rf);
  const Matrix dav = normalization_backward(dv, cache.v, cache.rv);

  g.w_face = face_batch.transpose() * daf;
  g.b_face = daf.colwise().sum().transpose();
  g.w_voice = voice_batch.transpose() * dav;
  g.b_voice = dav.colwise().sum().transpose();
  return g;
}

AdamState init_adam(const FopParams& params) {
  AdamState s;
  auto add = [&s](Index rows, Index cols) {
    s.m.push_back(Matrix::Zero(rows, cols));
    s.v.push_back(Matrix::Zero(rows, cols));
  };
  add(params.w_face.rows(), params.w_face.cols());
  add(params.b_face.size(), 1);
  add(params.w_voice.rows(), params.w_voice.cols());
  add(params.b_voice.size(), 1);
  for (const auto& w : params.w_att) add(w.rows(), w.cols());
  for (std::size_t i = 0; i < params.b_att.size(); ++i) add(params.b_att[i].size(), 1);
  add(params.w_cls.rows(), params.w_cls.cols());
  return s;
}

void adam_step(FopParams& params, const FopGrads& grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  std::size_t idx = 0;
  auto update = [&](auto& theta, const auto& grad) {
    if (idx >= state.m.size()) throw ContractError("adam_step: state/tensor count mismatch");
    Matrix& m = state.m[idx];
    Matrix& v = state.v[idx];
    ++idx;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * Matrix(grad);
    v = (cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * Matrix(grad).array().square())
            .matrix();
    theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
  };
  update(params.w_face, grads.w_face);
  update(params.b_face, grads.b_face);
  update(params.w_voice, grads.w_voice);
  update(params.b_voice, grads.b_voice);
  for (std::size_t i = 0; i < params.w_att.size(); ++i) update(params.w_att[i], grads.w_att[i]);
  for (std::size_t i = 0; i < params.b_att.size(); ++i) update(params.b_att[i], grads.b_att[i]);
  update(params.w_cls, grads.w_cls);
}

LossOutput compute_loss(const TrainConfig& cfg, const ForwardCache& cache, const Labels& labels,
                        CenterState* centers, bool update_centers) {
  switch (cfg.loss) {
    case LossKind::ce:
      return ce_loss(cache.logits, labels);
    case LossKind::oc:
      return oc_loss(cache.fused, labels, cfg.oc_reduction);
    case LossKind::joint:
      return joint_loss(cache.logits, cache.fused, labels, cfg.alpha, cfg.oc_reduction);
    case LossKind::center:
    case LossKind::git: {
      if (!centers) throw ContractError("compute_loss: center state required");
      LossOutput ce = ce_loss(cache.logits, labels);
      LossOutput aux = cfg.loss == LossKind::center
                           ? center_loss(cache.fused, labels, *centers, cfg.lambda_c,
                                         update_centers)
                           : git_loss(cache.fused, labels, *centers, cfg.lambda_c, cfg.lambda_g,
                                      update_centers);
      aux.ce_term = ce.loss;
      aux.loss += ce.loss;
      aux.grad_logits = std::move(ce.grad_logits);
      return aux;
    }
    case LossKind::contrastive:
      return contrastive_loss(cache.u, cache.v, labels, labels, cfg.contrastive_margin);
    case LossKind::triplet:
      return triplet_within_batch(cache.u, cache.v, labels, cfg.triplet_margin);
  }
  throw ContractError("compute_loss: bad LossKind");
}

TrainResult train(const EmbeddingBank& face, const EmbeddingBank& voice,
                  const LabelTable& labels, const TrainConfig& cfg) {
  cfg.validate();

  // Train classes: identities assigned to the train split with at least one
  // instance in each modality, class indices in sorted identity order.
  std::map<std::string, std::vector<Index>> face_rows, voice_rows;
  for (Index r = 0; r < face.size(); ++r)
    face_rows[labels.identity_of(face.ids[r])].push_back(r);
  for (Index r = 0; r < voice.size(); ++r)
    voice_rows[labels.identity_of(voice.ids[r])].push_back(r);

  std::map<std::string, int> class_of;
  for (const auto& [identity, split] : labels.split_of) {
    if (split != Split::train) continue;
    auto f = face_rows.find(identity);
    auto v = voice_rows.find(identity);
    if (f == face_rows.end() || v == voice_rows.end()) continue;
    const int c = static_cast<int>(class_of.size());
    class_of.emplace(identity, c);
  }
  const int n_classes = static_cast<int>(class_of.size());
  if (n_classes < 1) throw DataError("train: no trainable identities in the train split");

  std::vector<Index> pool;
  std::vector<int> pool_class;
  for (Index r = 0; r < face.size(); ++r) {
    auto it = class_of.find(labels.identity_of(face.ids[r]));
    if (it == class_of.end()) continue;
    pool.push_back(r);
    pool_class.push_back(it->second);
  }
  std::vector<const std::vector<Index>*> class_voice(n_classes);
  for (const auto& [identity, c] : class_of) class_voice[c] = &voice_rows[identity];

  Rng rng(cfg.seed);
  FopDims dims{face.dim(), voice.dim(), cfg.embed_dim, n_classes, cfg.att_layers};
  FopParams params = init_params(dims, cfg.fusion, rng, cfg.att_init_gain);
  AdamState adam = init_adam(params);
  CenterState centers{Matrix::Zero(n_classes, cfg.embed_dim)};
  const bool uses_centers = cfg.loss == LossKind::center || cfg.loss == LossKind::git;

  // Validation trials are drawn once, from a derived stream, so their
  // construction never perturbs the training draw sequence.
  EmbeddingBank val_face = filter_by_split(face, labels, Split::val);
  EmbeddingBank val_voice = filter_by_split(voice, labels, Split::val);
  TrialSet val_trials;
  bool has_val = false;
  if (val_face.size() > 0 && val_voice.size() > 0) {
    try {
      Rng val_rng(Rng::mix(cfg.seed, 0x7641));
      val_trials = make_trials(val_face, val_voice, labels, Stratify::none, cfg.val_neg_per_pos,
                               val_rng);
      has_val = true;
    } catch (const DataError&) {
      has_val = false;
    }
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_t = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    rng.shuffle(order);

    double sum_loss = 0.0, sum_ce = 0.0, sum_oc = 0.0;
    long n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      if (bsz < 2) break;  // a 1-instance tail cannot form pairs

      Matrix xf(static_cast<Index>(bsz), face.dim());
      Matrix xv(static_cast<Index>(bsz), voice.dim());
      Labels y(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t k = order[start + b];
        xf.row(static_cast<Index>(b)) = face.embeddings.row(pool[k]);
        y[b] = pool_class[k];
        const auto& vrows = *class_voice[y[b]];
        xv.row(static_cast<Index>(b)) = voice.embeddings.row(vrows[rng.below(vrows.size())]);
      }

      const ForwardCache cache = forward(params, xf, xv);
      const LossOutput loss =
          compute_loss(cfg, cache, y, uses_centers ? &centers : nullptr, uses_centers);
      if (!std::isfinite(loss.loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                           " batch " + std::to_string(n_batches + 1) + " (ce=" +
                           std::to_string(loss.ce_term) + ", oc=" + std::to_string(loss.oc_term) +
                           ")");
      const FopGrads grads = backward(params, xf, xv, cache, loss);
      adam_step(params, grads, adam, lr_t, cfg);

      sum_loss += loss.loss;
      sum_ce += loss.ce_term;
      sum_oc += loss.oc_term;
      ++n_batches;
    }
    if (n_batches == 0) throw DataError("train: no usable batches (train split too small)");

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = sum_loss / n_batches;
    stats.ce_term = sum_ce / n_batches;
    stats.oc_term = sum_oc / n_batches;
    stats.lr = lr_t;
    if (has_val) {
      const std::vector<double> scores =
          score_trials(params, val_face, val_voice, val_trials.trials);
      stats.val_eer = eer(to_scored(val_trials.trials, scores)).eer;
    }
    result.history.push_back(stats);
  }

  result.params = std::move(params);
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "epoch,loss,ce_term,oc_term,val_eer,lr\n";
  for (const auto& h : history)
    out << h.epoch << ',' << format_double(h.loss) << ',' << format_double(h.ce_term) << ','
        << format_double(h.oc_term) << ',' << format_double(h.val_eer) << ','
        << format_double(h.lr) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace fop
