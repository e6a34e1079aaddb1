#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fop/benchlosses.hpp"
#include "fop/dataio.hpp"
#include "fop/evalsuite.hpp"
#include "fop/synthgen.hpp"
#include "fop/trainer.hpp"

namespace fop {

// Flat key=value run configuration ('#' starts a comment). Unknown keys are
// rejected by name. Every command writes the fully resolved configuration
// (defaults included) beside its outputs, and re-loading that file
// reproduces the same state.
struct RunConfig {
  std::uint64_t seed = 42;

  // synth
  int n_identities = 100;
  int samples_per_identity = 10;
  long latent_dim = 16;
  long face_dim = 128;
  long voice_dim = 96;
  double noise_std_face = 0.05;
  double noise_std_voice = 0.05;
  double signal_scale = 0.15;
  double frac_train = 0.64;
  double frac_val = 0.10;
  double frac_test_seen = 0.10;
  double frac_test_unseen = 0.16;
  std::vector<std::string> genders = {"m", "f"};
  std::vector<std::string> nationalities = {"us", "uk", "in", "de", "cn"};
  std::vector<std::string> age_buckets = {"20s", "30s", "40s", "50s"};

  // model / training
  long embed_dim = 128;
  int att_layers = 1;
  double att_init_gain = 8.0;
  std::string fusion = "gated";
  std::string loss = "joint";
  double alpha = 1.0;
  std::string oc_reduction = "mean";
  int batch_size = 128;
  int epochs = 50;
  double lr = 1e-3;
  double lr_decay = 0.95;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double contrastive_margin = 0.5;
  double triplet_margin = 0.3;
  double lambda_c = 0.5;
  double lambda_g = 1.0;

  // evaluation
  std::string eval_split = "test_unseen";  // train|val|test_seen|test_unseen
  std::string stratify = "none";           // comma list of none|G|N|A|GNA
  int n_neg_per_pos = 1;
  std::vector<int> nc = {2, 4, 6, 8, 10};
  long match_trials = 10000;
  std::string match_direction = "voice_probe";
  long analytics_pair_cap = 200000;

  // benchmark
  int bench_batch = 32;
  long bench_dim = 64;
  int bench_classes = 32;
  int bench_reps = 5;
  std::vector<long> bench_n_linear = {128, 256, 512, 1024, 2048};
  std::vector<long> bench_n_contrastive = {64, 128, 256, 512};
  std::vector<long> bench_n_triplet = {64, 128, 256, 512};

  // file names, relative to the working directory
  std::string face_bank = "face.bank";
  std::string voice_bank = "voice.bank";
  std::string labels_file = "labels.txt";
  std::string split_file = "splits.txt";
  std::string checkpoint = "fop.ckpt";
  std::string history_file = "history.csv";
  std::string verify_csv = "verify.csv";
  std::string match_csv = "match.csv";
  std::string analytics_csv = "analytics.csv";
  std::string bench_csv = "bench.csv";
  std::string gradcheck_csv = "gradcheck.csv";
  std::string roc_prefix = "roc_";
  std::string scores_prefix = "scores_";

  // Applies one key=value pair; throws ConfigError naming an unknown key or
  // a bad value.
  void set(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::string& path);
  void merge_file(const std::string& path);  // applies every pair in file order

  std::string resolved_text() const;
  void write_resolved(const std::string& path) const;

  SynthConfig to_synth_config() const;
  TrainConfig to_train_config() const;
  BenchConfig to_bench_config() const;
  std::vector<Stratify> stratify_list() const;
  Split eval_split_value() const;
  MatchDirection match_direction_value() const;
};

}  // namespace fop
