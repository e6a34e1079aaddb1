#include "fop/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace fop {

void SynthConfig::validate() const {
  if (n_identities < 1) throw ConfigError("n_identities must be >= 1");
  if (samples_per_identity < 1) throw ConfigError("samples_per_identity must be >= 1");
  if (latent_dim < 2 || face_dim < 2 || voice_dim < 2)
    throw ConfigError("latent/face/voice dims must be >= 2");
  if (noise_std_face < 0 || noise_std_voice < 0) throw ConfigError("noise std must be >= 0");
  if (signal_scale <= 0) throw ConfigError("signal_scale must be > 0");
  const double fsum = frac_train + frac_val + frac_test_seen + frac_test_unseen;
  if (frac_train < 0 || frac_val < 0 || frac_test_seen < 0 || frac_test_unseen < 0 ||
      std::abs(fsum - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (genders.empty() || nationalities.empty() || age_buckets.empty())
    throw ConfigError("attribute vocabularies must be non-empty");
}

namespace {

std::string identity_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "id%04d", c);
  return buf;
}

void fill_normal(Matrix& m, Rng& rng, double scale) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
}

// Largest-remainder apportionment of n identities over the four splits;
// leftover rounding mass goes to the largest remainders, ties by split order.
std::array<int, 4> split_counts(const SynthConfig& cfg) {
  const double fr[4] = {cfg.frac_train, cfg.frac_val, cfg.frac_test_seen, cfg.frac_test_unseen};
  std::array<int, 4> counts{};
  double rem[4];
  int assigned = 0;
  for (int i = 0; i < 4; ++i) {
    const double exact = fr[i] * cfg.n_identities;
    counts[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - counts[i];
    assigned += counts[i];
  }
  int leftover = cfg.n_identities - assigned;
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; k < leftover; ++k) counts[order[k % 4]]++;
  return counts;
}

}  // namespace

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  SynthCorpus corpus;
  // Map entries scaled by 1/sqrt(m) so signal components have unit variance
  // and the noise std reads directly as a noise-to-signal ratio.
  const double map_scale = cfg.signal_scale / std::sqrt(static_cast<double>(cfg.latent_dim));
  corpus.map_face = Matrix(cfg.face_dim, cfg.latent_dim);
  corpus.map_voice = Matrix(cfg.voice_dim, cfg.latent_dim);
  fill_normal(corpus.map_face, rng, map_scale);
  fill_normal(corpus.map_voice, rng, map_scale);

  corpus.latents = Matrix(cfg.n_identities, cfg.latent_dim);
  std::vector<InstanceRecord> attr(cfg.n_identities);
  for (int c = 0; c < cfg.n_identities; ++c) {
    for (Index j = 0; j < cfg.latent_dim; ++j) corpus.latents(c, j) = rng.normal();
    attr[c].identity = identity_name(c);
    attr[c].gender = cfg.genders[rng.below(cfg.genders.size())];
    attr[c].nationality = cfg.nationalities[rng.below(cfg.nationalities.size())];
    attr[c].age_bucket = cfg.age_buckets[rng.below(cfg.age_buckets.size())];
  }

  const Index n_samples = static_cast<Index>(cfg.n_identities) * cfg.samples_per_identity;
  Matrix face(n_samples, cfg.face_dim);
  Matrix voice(n_samples, cfg.voice_dim);
  std::vector<std::string> face_ids, voice_ids;
  face_ids.reserve(n_samples);
  voice_ids.reserve(n_samples);

  for (int c = 0; c < cfg.n_identities; ++c) {
    const Vector z = corpus.latents.row(c).transpose();
    const Vector face_mean = corpus.map_face * z;
    const Vector voice_mean = corpus.map_voice * z;
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      const Index r = static_cast<Index>(c) * cfg.samples_per_identity + s;
      char buf[16];
      std::snprintf(buf, sizeof buf, "_f%02d", s);
      face_ids.push_back(attr[c].identity + buf);
      std::snprintf(buf, sizeof buf, "_v%02d", s);
      voice_ids.push_back(attr[c].identity + buf);
      for (Index j = 0; j < cfg.face_dim; ++j)
        face(r, j) = face_mean(j) + cfg.noise_std_face * rng.normal();
      for (Index j = 0; j < cfg.voice_dim; ++j)
        voice(r, j) = voice_mean(j) + cfg.noise_std_voice * rng.normal();
    }
  }

  std::vector<int> perm(cfg.n_identities);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  const auto counts = split_counts(cfg);
  const Split split_order[4] = {Split::train, Split::val, Split::test_seen, Split::test_unseen};
  std::vector<Split> split_of(cfg.n_identities);
  int at = 0;
  for (int s = 0; s < 4; ++s)
    for (int k = 0; k < counts[s]; ++k) split_of[perm[at++]] = split_order[s];

  for (int c = 0; c < cfg.n_identities; ++c)
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      InstanceRecord rec = attr[c];
      rec.instance_id = face_ids[static_cast<std::size_t>(c) * cfg.samples_per_identity + s];
      corpus.labels.add_row(std::move(rec));
    }
  for (int c = 0; c < cfg.n_identities; ++c)
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      InstanceRecord rec = attr[c];
      rec.instance_id = voice_ids[static_cast<std::size_t>(c) * cfg.samples_per_identity + s];
      corpus.labels.add_row(std::move(rec));
    }
  for (int c = 0; c < cfg.n_identities; ++c)
    corpus.labels.split_of[attr[c].identity] = split_of[c];

  corpus.face = EmbeddingBank::build(Modality::face, std::move(face_ids), std::move(face));
  corpus.voice = EmbeddingBank::build(Modality::voice, std::move(voice_ids), std::move(voice));
  return corpus;
}

}  // namespace fop
