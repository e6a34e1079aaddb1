#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fop/dataio.hpp"
#include "fop/fopmodel.hpp"

namespace fop {

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // false-accept rate at "accept iff score >= threshold"
  double frr = 0.0;  // false-reject rate
};

// Threshold sweep over every distinct score, ascending, plus one sentinel
// above the maximum so both endpoints (FAR=1,FRR=0) and (FAR=0,FRR=1) are
// present. FAR is non-increasing and FRR non-decreasing along the sweep.
struct RocCurve {
  std::vector<RocPoint> points;
};

RocCurve roc_curve(const std::vector<ScoredTrial>& trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate. The sweep rarely hits FAR == FRR exactly, so the value is
// linearly interpolated between the two adjacent sweep points that bracket
// the crossing (both rates treated as linear in the threshold over that
// segment); an exact tie on a sweep point is returned as-is.
EerResult eer(const std::vector<ScoredTrial>& trials);

// Probability that a random positive outscores a random negative, ties at
// half weight (rank-statistic form). Also computed as the trapezoidal area
// under the ROC curve; the two routes must agree within 1e-9 or a
// NumericError is thrown.
double auc(const std::vector<ScoredTrial>& trials);

// Verification score for a (face, voice) trial: cosine(u, v) between the two
// projected, L2-normalized modality embeddings.
std::vector<double> score_trials(const FopParams& params, const EmbeddingBank& face,
                                 const EmbeddingBank& voice, const std::vector<Trial>& trials);

struct MatchReport {
  int n_c = 0;
  long trials = 0;
  double accuracy = 0.0;
};

enum class MatchDirection { voice_probe, face_probe };

// 1:n_c matching: per trial a probe instance in one modality and a gallery of
// n_c instances in the other (one same-identity, n_c-1 from distinct other
// identities); correct iff the same-identity candidate scores strictly
// highest (ties are incorrect). Galleries are nested across the requested
// n_c values: the distractors for n_c are the first n_c-1 of the max-n_c
// sample, so accuracy is non-increasing in n_c on the shared trial ensemble.
std::vector<MatchReport> match_curve(const FopParams& params, const EmbeddingBank& face,
                                     const EmbeddingBank& voice, const LabelTable& labels,
                                     const std::vector<int>& nc_values, long trials, Rng& rng,
                                     MatchDirection direction = MatchDirection::voice_probe);

MatchReport match_1_to_n(const FopParams& params, const EmbeddingBank& face,
                         const EmbeddingBank& voice, const LabelTable& labels, int n_c,
                         long trials, Rng& rng,
                         MatchDirection direction = MatchDirection::voice_probe);

struct Analytics {
  double orthogonality = 0.0;  // mean |cos| over different-identity fused pairs
  double same_sim = 0.0;       // mean cos over same-identity fused pairs
  double diff_sim = 0.0;       // mean cos over different-identity fused pairs
  long same_pairs = 0;
  long diff_pairs = 0;
};

// Fused embeddings are formed per identity by pairing its face and voice
// instances positionally (bank order, up to the smaller count). Pair sets
// beyond pair_cap are subsampled with the seeded generator.
Analytics feature_analytics(const FopParams& params, const EmbeddingBank& face,
                            const EmbeddingBank& voice, const LabelTable& labels,
                            long pair_cap = 200000, std::uint64_t seed = 0);

struct VerifyRow {
  std::string stratum;
  double eer = 0.0;
  double auc = 0.0;
  long n_pos = 0;
  long n_neg = 0;
};

void write_verification_csv(const std::vector<VerifyRow>& rows, const std::string& path);
void write_match_csv(const std::vector<MatchReport>& rows, const std::string& path);
void write_analytics_csv(const Analytics& a, const std::string& path);
void write_roc_csv(const RocCurve& curve, const std::string& path);

}  // namespace fop
