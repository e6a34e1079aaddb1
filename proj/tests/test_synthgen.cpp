#include <doctest.h>

#include <cmath>
#include <map>

#include "fop/synthgen.hpp"
#include "testutil.hpp"

using namespace fop;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.n_identities = 20;
  cfg.samples_per_identity = 5;
  cfg.latent_dim = 8;
  cfg.face_dim = 16;
  cfg.voice_dim = 12;
  cfg.seed = 321;
  return cfg;
}

}  // namespace

TEST_CASE("zero noise collapses each identity to one point per modality") {
  SynthConfig cfg = tiny_config();
  cfg.noise_std_face = 0.0;
  cfg.noise_std_voice = 0.0;
  SynthCorpus corpus = generate(cfg);
  bool collapsed = true;
  for (int c = 0; c < cfg.n_identities; ++c) {
    const Index base = static_cast<Index>(c) * cfg.samples_per_identity;
    for (int s = 1; s < cfg.samples_per_identity; ++s) {
      collapsed = collapsed &&
                  (corpus.face.embeddings.row(base) - corpus.face.embeddings.row(base + s))
                          .cwiseAbs()
                          .maxCoeff() == 0.0 &&
                  (corpus.voice.embeddings.row(base) - corpus.voice.embeddings.row(base + s))
                          .cwiseAbs()
                          .maxCoeff() == 0.0;
    }
  }
  CHECK(collapsed);
}

TEST_CASE("same seed produces a bit-identical corpus") {
  SynthConfig cfg = tiny_config();
  SynthCorpus a = generate(cfg);
  SynthCorpus b = generate(cfg);
  CHECK(a.face.ids == b.face.ids);
  CHECK((a.face.embeddings - b.face.embeddings).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.voice.embeddings - b.voice.embeddings).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.labels.rows.size() == b.labels.rows.size());
  bool rows_same = true;
  for (std::size_t i = 0; i < a.labels.rows.size(); ++i)
    rows_same = rows_same && a.labels.rows[i].instance_id == b.labels.rows[i].instance_id &&
                a.labels.rows[i].gender == b.labels.rows[i].gender;
  CHECK(rows_same);
  CHECK(a.labels.split_of == b.labels.split_of);

  cfg.seed = 322;
  SynthCorpus c = generate(cfg);
  CHECK((a.face.embeddings - c.face.embeddings).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("within-identity cross-modal latent correlation exceeds across-identity") {
  SynthConfig cfg;
  cfg.n_identities = 30;
  cfg.samples_per_identity = 6;
  cfg.latent_dim = 16;
  cfg.face_dim = 48;
  cfg.voice_dim = 40;
  cfg.noise_std_face = 0.05;
  cfg.noise_std_voice = 0.05;
  cfg.signal_scale = 1.0;
  cfg.seed = 11;
  SynthCorpus corpus = generate(cfg);

  // Estimate each sample's latent by least squares against the emitted maps,
  // then compare cross-modal cosine within vs across identities.
  const auto qr_f = corpus.map_face.colPivHouseholderQr();
  const auto qr_v = corpus.map_voice.colPivHouseholderQr();
  Matrix zf(corpus.face.size(), cfg.latent_dim), zv(corpus.voice.size(), cfg.latent_dim);
  for (Index i = 0; i < corpus.face.size(); ++i) {
    zf.row(i) = qr_f.solve(corpus.face.embeddings.row(i).transpose()).transpose();
    zv.row(i) = qr_v.solve(corpus.voice.embeddings.row(i).transpose()).transpose();
  }

  double within = 0, across = 0;
  long nw = 0, na = 0;
  for (int c = 0; c < cfg.n_identities; ++c)
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      const Index i = static_cast<Index>(c) * cfg.samples_per_identity + s;
      const Index j =
          (static_cast<Index>((c + 1) % cfg.n_identities)) * cfg.samples_per_identity + s;
      within += cosine(zf.row(i).transpose(), zv.row(i).transpose());
      ++nw;
      across += cosine(zf.row(i).transpose(), zv.row(j).transpose());
      ++na;
    }
  CHECK(within / nw > across / na + 0.5);  // near 1 vs near 0 at this noise level
}

TEST_CASE("split fractions are respected and unseen identities stay out of train") {
  SynthConfig cfg;
  cfg.n_identities = 100;
  cfg.samples_per_identity = 2;
  cfg.latent_dim = 4;
  cfg.face_dim = 6;
  cfg.voice_dim = 6;
  cfg.seed = 77;
  SynthCorpus corpus = generate(cfg);
  std::map<Split, int> counts;
  for (const auto& [identity, s] : corpus.labels.split_of) counts[s]++;
  CHECK(counts[Split::train] == 64);
  CHECK(counts[Split::val] == 10);
  CHECK(counts[Split::test_seen] == 10);
  CHECK(counts[Split::test_unseen] == 16);

  EmbeddingBank train_face = filter_by_split(corpus.face, corpus.labels, Split::train);
  bool disjoint = true;
  for (const auto& id : train_face.ids)
    disjoint = disjoint &&
               corpus.labels.split(corpus.labels.identity_of(id)) != Split::test_unseen;
  CHECK(disjoint);
}

TEST_CASE("demographics come from the configured vocabularies, constant per identity") {
  SynthConfig cfg = tiny_config();
  cfg.genders = {"x", "y", "z"};
  SynthCorpus corpus = generate(cfg);
  bool ok = true;
  std::map<std::string, std::string> seen;
  for (const auto& rec : corpus.labels.rows) {
    ok = ok && (rec.gender == "x" || rec.gender == "y" || rec.gender == "z");
    auto [it, inserted] = seen.emplace(rec.identity, rec.gender);
    if (!inserted) ok = ok && it->second == rec.gender;
  }
  CHECK(ok);
}

TEST_CASE("config validation rejects bad values") {
  SynthConfig cfg = tiny_config();
  cfg.n_identities = 0;
  CHECK_THROWS_AS((void)generate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.noise_std_face = -0.1;
  CHECK_THROWS_AS((void)generate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.frac_train = 0.9;  // fractions no longer sum to 1
  CHECK_THROWS_AS((void)generate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.genders.clear();
  CHECK_THROWS_AS((void)generate(cfg), ConfigError);
}
