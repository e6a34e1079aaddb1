#include "fop/gradcheck.hpp"

#include <cmath>
#include <fstream>

#include "fop/dataio.hpp"

namespace fop {

double GradcheckReport::overall() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

bool GradcheckReport::passed(double tol) const {
  for (const auto& e : entries)
    if (!(e.max_rel_err <= tol)) return false;
  return !entries.empty();
}

namespace {

template <typename F>
void for_each_tensor(FopParams& p, FopGrads& g, F&& f) {
  f(p.w_face, g.w_face);
  f(p.b_face, g.b_face);
  f(p.w_voice, g.w_voice);
  f(p.b_voice, g.b_voice);
  for (std::size_t i = 0; i < p.w_att.size(); ++i) f(p.w_att[i], g.w_att[i]);
  for (std::size_t i = 0; i < p.b_att.size(); ++i) f(p.b_att[i], g.b_att[i]);
  f(p.w_cls, g.w_cls);
}

double eval_loss(const TrainConfig& cfg, const FopParams& params, const Matrix& xf,
                 const Matrix& xv, const Labels& y, CenterState& centers) {
  const ForwardCache cache = forward(params, xf, xv);
  CenterState frozen = centers;  // FD must never mutate shared state
  return compute_loss(cfg, cache, y, &frozen, /*update_centers=*/false).loss;
}

}  // namespace

GradcheckReport run_gradcheck(int n_seeds, Index face_dim, Index voice_dim, Index embed_dim,
                              int batch, int n_classes, int att_layers) {
  const LossKind kinds[] = {LossKind::ce,  LossKind::oc,          LossKind::joint,
                            LossKind::center, LossKind::git,       LossKind::contrastive,
                            LossKind::triplet};
  GradcheckReport report;
  for (LossKind kind : kinds) {
    TrainConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.att_layers = att_layers;
    cfg.loss = kind;
    cfg.alpha = 1.0;

    double worst = 0.0;
    for (int seed = 1; seed <= n_seeds; ++seed) {
      Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(kind)));
      FopDims dims{face_dim, voice_dim, embed_dim, n_classes, att_layers};
      FopParams params = init_params(dims, Fusion::gated, rng);

      Matrix xf(batch, face_dim), xv(batch, voice_dim);
      for (Index i = 0; i < xf.size(); ++i) xf.data()[i] = rng.normal();
      for (Index i = 0; i < xv.size(); ++i) xv.data()[i] = rng.normal();
      Labels y(batch);
      for (int i = 0; i < batch; ++i) y[i] = i % n_classes;
      CenterState centers{Matrix(n_classes, embed_dim)};
      for (Index i = 0; i < centers.centers.size(); ++i)
        centers.centers.data()[i] = 0.5 * rng.normal();

      const ForwardCache cache = forward(params, xf, xv);
      CenterState scratch = centers;
      const LossOutput loss = compute_loss(cfg, cache, y, &scratch, false);
      FopGrads analytic = backward(params, xf, xv, cache, loss);

      for_each_tensor(params, analytic, [&](auto& theta, auto& grad) {
        for (Index k = 0; k < theta.size(); ++k) {
          double& entry = theta.data()[k];
          const double saved = entry;
          const double h = 1e-5 * std::max(1.0, std::abs(saved));
          entry = saved + h;
          const double up = eval_loss(cfg, params, xf, xv, y, centers);
          entry = saved - h;
          const double down = eval_loss(cfg, params, xf, xv, y, centers);
          entry = saved;
          const double fd = (up - down) / (2.0 * h);
          const double a = grad.data()[k];
          const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
          worst = std::max(worst, err);
        }
      });
    }
    report.entries.push_back({kind, worst});
  }
  return report;
}

void write_gradcheck_csv(const GradcheckReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "loss,max_rel_err\n";
  for (const auto& e : report.entries)
    out << to_string(e.kind) << ',' << format_double(e.max_rel_err) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace fop
