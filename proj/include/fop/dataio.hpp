#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fop/numcore.hpp"

namespace fop {

enum class Modality { face, voice };
enum class Split { train, val, test_seen, test_unseen };
enum class Stratify { none, gender, nationality, age, gna };

std::string to_string(Modality m);
std::string to_string(Split s);
std::string to_string(Stratify s);
Modality parse_modality(const std::string& token);
Split parse_split(const std::string& token);
Stratify parse_stratify(const std::string& token);

// Shortest decimal representation that parses back to the identical 64-bit
// value; used by every text format so round trips are bit-exact.
std::string format_double(double v);

// A matrix of per-instance embeddings for one modality, one instance per row.
struct EmbeddingBank {
  Modality modality = Modality::face;
  std::vector<std::string> ids;  // row order
  Matrix embeddings;             // ids.size() x dim
  std::unordered_map<std::string, Index> row_of;

  Index size() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }
  Index row(const std::string& instance_id) const;  // DataError on unknown id

  // Validates id uniqueness, finiteness and shape agreement.
  static EmbeddingBank build(Modality modality, std::vector<std::string> ids, Matrix embeddings);
};

// Format:
//   FVBANK 1 <n> <dim> <face|voice>
//   <instance_id> <v1> ... <vdim>
EmbeddingBank read_bank(const std::string& path);
void write_bank(const EmbeddingBank& bank, const std::string& path);

struct InstanceRecord {
  std::string instance_id;
  std::string identity;
  std::string gender;
  std::string nationality;
  std::string age_bucket;
};

// Per-instance identity/demographics plus the per-identity split assignment.
struct LabelTable {
  std::vector<InstanceRecord> rows;  // file order
  std::unordered_map<std::string, std::size_t> row_of;
  std::map<std::string, Split> split_of;  // identity -> split, sorted for determinism

  const InstanceRecord& record(const std::string& instance_id) const;
  const std::string& identity_of(const std::string& instance_id) const;
  Split split(const std::string& identity) const;
  std::vector<std::string> identities_in_split(Split s) const;

  void add_row(InstanceRecord rec);  // DataError on duplicate instance_id
};

// Labels file : <instance_id> <identity> <gender> <nationality> <age_bucket>
// Split file  : <identity> <train|val|test_seen|test_unseen>
LabelTable read_labels(const std::string& labels_path, const std::string& split_path);
void write_labels(const LabelTable& table, const std::string& labels_path,
                  const std::string& split_path);

// Cross-checks a loaded corpus: every bank instance is labelled exactly once,
// every labelled identity has a split, per-identity attributes are consistent.
void validate_corpus(const LabelTable& table, const EmbeddingBank& face,
                     const EmbeddingBank& voice);

// Keeps the rows whose identity belongs to the given split; preserves order.
EmbeddingBank filter_by_split(const EmbeddingBank& bank, const LabelTable& table, Split s);

struct Trial {
  std::string face_id;
  std::string voice_id;
  bool same_identity = false;
};

struct TrialSet {
  std::vector<Trial> trials;
  int skipped_strata = 0;       // strata with fewer than two identities
  long skipped_instances = 0;   // face instances lacking a positive or negative pool
};

// Builds verification trials: one positive per usable face instance (a
// uniformly drawn same-identity voice instance) and n_neg_per_pos negatives
// drawn from other identities of the same stratum. Under Stratify::none all
// identities form a single stratum, so the none/G/N/A/GNA paths share one
// code path and one draw sequence.
TrialSet make_trials(const EmbeddingBank& face, const EmbeddingBank& voice,
                     const LabelTable& table, Stratify stratify, int n_neg_per_pos, Rng& rng);

// Trial file : <face_id> <voice_id> <0|1>
// Score file : <face_id> <voice_id> <0|1> <score>
void write_trials(const TrialSet& set, const std::string& path);
TrialSet read_trials(const std::string& path);
void write_scores(const std::vector<Trial>& trials, const std::vector<double>& scores,
                  const std::string& path);
std::pair<TrialSet, std::vector<double>> read_scores(const std::string& path);

// (score, same-identity?) pair consumed by the verification metrics.
struct ScoredTrial {
  double score = 0.0;
  bool target = false;
};

std::vector<ScoredTrial> to_scored(const std::vector<Trial>& trials,
                                   const std::vector<double>& scores);

}  // namespace fop
