#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fop/gradcheck.hpp"
#include "fop/synthgen.hpp"
#include "fop/trainer.hpp"
#include "testutil.hpp"

using namespace fop;

namespace {

SynthConfig small_corpus_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_identities = 16;
  cfg.samples_per_identity = 6;
  cfg.latent_dim = 6;
  cfg.face_dim = 20;
  cfg.voice_dim = 14;
  cfg.frac_train = 0.5;
  cfg.frac_val = 0.25;
  cfg.frac_test_seen = 0.0;
  cfg.frac_test_unseen = 0.25;
  cfg.seed = seed;
  return cfg;
}

TrainConfig quick_train_config() {
  TrainConfig cfg;
  cfg.embed_dim = 12;
  cfg.batch_size = 16;
  cfg.epochs = 6;
  cfg.lr = 3e-3;
  cfg.seed = 5;
  return cfg;
}

std::string params_fingerprint(const FopParams& p) {
  testutil::TempDir tmp("fp");
  save_params(p, tmp.file("p.ckpt"));
  return testutil::read_file(tmp.file("p.ckpt"));
}

}  // namespace

TEST_CASE("whole-model gradcheck passes for every loss kind") {
  GradcheckReport report = run_gradcheck(/*n_seeds=*/3);
  REQUIRE(report.entries.size() == 7);
  for (const auto& e : report.entries) {
    INFO(to_string(e.kind));
    CHECK(e.max_rel_err <= 1e-4);
  }
  CHECK(report.passed());
}

TEST_CASE("gradcheck covers a two-layer gate as well") {
  GradcheckReport report = run_gradcheck(2, 7, 9, 8, 6, 3, /*att_layers=*/2);
  CHECK(report.passed());
}

TEST_CASE("backward: zero loss gradients give zero parameter gradients") {
  FopDims dims{7, 6, 5, 3, 1};
  Rng rng(1);
  FopParams p = init_params(dims, Fusion::gated, rng);
  Matrix xf = testutil::random_matrix(4, 7, rng);
  Matrix xv = testutil::random_matrix(4, 6, rng);
  ForwardCache cache = forward(p, xf, xv);
  LossOutput zero;
  zero.grad_logits = Matrix::Zero(4, 3);
  zero.grad_fused = Matrix::Zero(4, 5);
  FopGrads g = backward(p, xf, xv, cache, zero);
  CHECK(g.w_face.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.w_voice.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.w_att[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.w_cls.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward is exactly linear in the orthogonality weight") {
  FopDims dims{7, 6, 5, 3, 1};
  Rng rng(2);
  FopParams p = init_params(dims, Fusion::gated, rng);
  Matrix xf = testutil::random_matrix(6, 7, rng);
  Matrix xv = testutil::random_matrix(6, 6, rng);
  ForwardCache cache = forward(p, xf, xv);
  Labels y{0, 1, 2, 0, 1, 2};

  // isolate the orthogonality path: doubling alpha doubles its gradient
  LossOutput oc = oc_loss(cache.fused, y);
  LossOutput only_oc;
  only_oc.grad_fused = 1.0 * oc.grad_fused;
  FopGrads g1 = backward(p, xf, xv, cache, only_oc);
  only_oc.grad_fused = 2.0 * oc.grad_fused;
  FopGrads g2 = backward(p, xf, xv, cache, only_oc);
  CHECK((g2.w_face - 2.0 * g1.w_face).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g2.w_voice - 2.0 * g1.w_voice).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g2.w_att[0] - 2.0 * g1.w_att[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g2.b_att[0] - 2.0 * g1.b_att[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first-step magnitude, zero-gradient fixpoint") {
  FopDims dims{3, 3, 2, 2, 1};
  Rng rng(3);
  FopParams p = init_params(dims, Fusion::gated, rng);
  FopParams before = p;
  AdamState state = init_adam(p);
  TrainConfig cfg;

  FopGrads g;
  g.w_face = Matrix::Constant(3, 2, 0.37);
  g.b_face = Vector::Constant(2, -1.4);
  g.w_voice = Matrix::Constant(3, 2, 2.0);
  g.b_voice = Vector::Constant(2, 0.1);
  g.w_att.push_back(Matrix::Constant(4, 2, -0.9));
  g.b_att.push_back(Vector::Constant(2, 0.5));
  g.w_cls = Matrix::Constant(2, 2, 5.0);

  adam_step(p, g, state, 1e-3, cfg);
  // bias correction makes the first update ~ lr * sign(g)
  Matrix step = before.w_face - p.w_face;
  for (Index i = 0; i < step.size(); ++i)
    CHECK(step.data()[i] == doctest::Approx(1e-3).epsilon(1e-4));
  Vector bstep = before.b_face - p.b_face;
  CHECK(bstep(0) == doctest::Approx(-1e-3).epsilon(1e-4));

  // zero gradient leaves parameters bit-identical
  FopParams q = init_params(dims, Fusion::gated, rng);
  FopParams qbefore = q;
  AdamState s2 = init_adam(q);
  FopGrads zg;
  zg.w_face = Matrix::Zero(3, 2);
  zg.b_face = Vector::Zero(2);
  zg.w_voice = Matrix::Zero(3, 2);
  zg.b_voice = Vector::Zero(2);
  zg.w_att.push_back(Matrix::Zero(4, 2));
  zg.b_att.push_back(Vector::Zero(2));
  zg.w_cls = Matrix::Zero(2, 2);
  adam_step(q, zg, s2, 1e-3, cfg);
  CHECK((q.w_face - qbefore.w_face).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.w_cls - qbefore.w_cls).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam drives a quadratic bowl monotonically after warm-up") {
  // min 0.5|theta|^2 via the same update rule, scalar per-tensor path
  FopDims dims{2, 2, 2, 2, 1};
  Rng rng(4);
  FopParams p = init_params(dims, Fusion::gated, rng);
  p.w_face << 50.0, -30.0, 20.0, -10.0;
  AdamState state = init_adam(p);
  TrainConfig cfg;
  FopGrads g;
  g.w_face = Matrix::Zero(2, 2);
  g.b_face = Vector::Zero(2);
  g.w_voice = Matrix::Zero(2, 2);
  g.b_voice = Vector::Zero(2);
  g.w_att.push_back(Matrix::Zero(4, 2));
  g.b_att.push_back(Vector::Zero(2));
  g.w_cls = Matrix::Zero(2, 2);

  std::vector<double> losses;
  for (int t = 0; t < 100; ++t) {
    losses.push_back(0.5 * p.w_face.squaredNorm());
    g.w_face = p.w_face;  // gradient of the bowl
    adam_step(p, g, state, 0.1, cfg);
  }
  bool monotone = true;
  for (std::size_t t = 5; t + 1 < losses.size(); ++t)
    monotone = monotone && losses[t + 1] <= losses[t] + 1e-12;
  CHECK(monotone);
  CHECK(losses.back() < losses[5]);
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  SynthCorpus corpus = generate(small_corpus_config(9));
  TrainConfig cfg = quick_train_config();
  TrainResult a = train(corpus.face, corpus.voice, corpus.labels, cfg);
  TrainResult b = train(corpus.face, corpus.voice, corpus.labels, cfg);
  CHECK(params_fingerprint(a.params) == params_fingerprint(b.params));
  REQUIRE(a.history.size() == b.history.size());
  bool same = true;
  for (std::size_t i = 0; i < a.history.size(); ++i)
    same = same && a.history[i].loss == b.history[i].loss &&
           a.history[i].val_eer == b.history[i].val_eer;
  CHECK(same);
}

TEST_CASE("training leaves the input banks untouched and learns on a small corpus") {
  SynthCorpus corpus = generate(small_corpus_config(10));
  const Matrix face_before = corpus.face.embeddings;
  const Matrix voice_before = corpus.voice.embeddings;

  TrainConfig cfg = quick_train_config();
  cfg.epochs = 12;
  TrainResult r = train(corpus.face, corpus.voice, corpus.labels, cfg);

  CHECK((corpus.face.embeddings - face_before).cwiseAbs().maxCoeff() == 0.0);
  CHECK((corpus.voice.embeddings - voice_before).cwiseAbs().maxCoeff() == 0.0);

  // 8 train identities: initial CE is ln 8, training must go below it
  CHECK(r.history.front().ce_term < std::log(8.0) * 1.05);
  CHECK(r.history.back().ce_term < r.history.front().ce_term);
  CHECK(r.history.back().loss < r.history.front().loss);
}

TEST_CASE("learning-rate schedule is exactly lr * decay^epoch") {
  SynthCorpus corpus = generate(small_corpus_config(11));
  TrainConfig cfg = quick_train_config();
  cfg.epochs = 5;
  cfg.lr = 0.02;
  cfg.lr_decay = 0.9;
  TrainResult r = train(corpus.face, corpus.voice, corpus.labels, cfg);
  REQUIRE(r.history.size() == 5);
  bool exact = true;
  for (int t = 0; t < 5; ++t)
    exact = exact && r.history[t].lr == 0.02 * std::pow(0.9, static_cast<double>(t));
  CHECK(exact);
}

TEST_CASE("every loss kind trains end to end") {
  SynthCorpus corpus = generate(small_corpus_config(12));
  for (LossKind kind : {LossKind::ce, LossKind::oc, LossKind::joint, LossKind::center,
                        LossKind::git, LossKind::contrastive, LossKind::triplet}) {
    TrainConfig cfg = quick_train_config();
    cfg.loss = kind;
    cfg.epochs = 2;
    TrainResult r = train(corpus.face, corpus.voice, corpus.labels, cfg);
    INFO(to_string(kind));
    CHECK(std::isfinite(r.history.back().loss));
  }
  // linear fusion path as well
  TrainConfig cfg = quick_train_config();
  cfg.fusion = Fusion::linear;
  cfg.epochs = 2;
  CHECK(std::isfinite(train(corpus.face, corpus.voice, corpus.labels, cfg).history.back().loss));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  SynthCorpus corpus = generate(small_corpus_config(13));
  // poison one embedding; banks are built validated, so go through the matrix
  corpus.face.embeddings(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = quick_train_config();
  try {
    train(corpus.face, corpus.voice, corpus.labels, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay = 1.0;  // no decay is allowed
  cfg.validate();
  cfg.alpha = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("history csv uses the expected header and row count") {
  SynthCorpus corpus = generate(small_corpus_config(14));
  TrainConfig cfg = quick_train_config();
  cfg.epochs = 3;
  TrainResult r = train(corpus.face, corpus.voice, corpus.labels, cfg);
  testutil::TempDir tmp("hist");
  write_history_csv(r.history, tmp.file("h.csv"));
  std::istringstream in(testutil::read_file(tmp.file("h.csv")));
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,loss,ce_term,oc_term,val_eer,lr");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}
