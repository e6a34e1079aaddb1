#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fop/dataio.hpp"
#include "fop/numcore.hpp"

namespace fop {

// Identity-conditioned linear-Gaussian corpus: per identity a shared latent
// z_c ~ N(0, I_m); face samples A_f z_c + eps, voice samples A_v z_c + eps.
// Both modalities carry the same latent, so cross-modal association is
// learnable and its strength is a single knob per modality (the noise std).
struct SynthConfig {
  int n_identities = 100;
  int samples_per_identity = 10;  // per modality
  Index latent_dim = 16;
  Index face_dim = 128;
  Index voice_dim = 96;
  double noise_std_face = 0.05;
  double noise_std_voice = 0.05;
  // Per-component signal standard deviation; noise stds read against it.
  double signal_scale = 0.15;
  double frac_train = 0.64;
  double frac_val = 0.10;
  double frac_test_seen = 0.10;
  double frac_test_unseen = 0.16;
  std::vector<std::string> genders = {"m", "f"};
  std::vector<std::string> nationalities = {"us", "uk", "in", "de", "cn"};
  std::vector<std::string> age_buckets = {"20s", "30s", "40s", "50s"};
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
};

struct SynthCorpus {
  EmbeddingBank face;
  EmbeddingBank voice;
  LabelTable labels;
  // Generator internals, kept for diagnostics and statistical tests; never
  // serialized with the corpus.
  Matrix map_face;   // F x m
  Matrix map_voice;  // V x m
  Matrix latents;    // n_identities x m
};

SynthCorpus generate(const SynthConfig& cfg);

}  // namespace fop
