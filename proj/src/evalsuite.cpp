#include "fop/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "fop/errors.hpp"

namespace fop {

namespace {

void check_trials(const std::vector<ScoredTrial>& trials) {
  long n_pos = 0, n_neg = 0;
  for (const auto& t : trials) (t.target ? n_pos : n_neg)++;
  if (n_pos < 1 || n_neg < 1)
    throw ContractError("verification metrics need at least one positive and one negative, got " +
                        std::to_string(n_pos) + "/" + std::to_string(n_neg));
  for (const auto& t : trials)
    if (!std::isfinite(t.score)) throw ContractError("non-finite trial score");
}

// Projects every bank row and L2-normalizes, one GEMM for the whole bank.
Matrix project_bank(const EmbeddingBank& bank, const Matrix& w, const Vector& b) {
  if (bank.dim() != w.rows())
    throw ContractError("project_bank: bank dim " + std::to_string(bank.dim()) +
                        " vs weight rows " + std::to_string(w.rows()));
  Matrix a = (bank.embeddings * w).rowwise() + b.transpose();
  const Vector r = a.rowwise().norm().cwiseMax(kNormEps);
  return (a.array().colwise() / r.array()).matrix();
}

}  // namespace

RocCurve roc_curve(const std::vector<ScoredTrial>& trials) {
  check_trials(trials);
  std::vector<double> pos, neg;
  for (const auto& t : trials) (t.target ? pos : neg).push_back(t.score);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  std::vector<double> thresholds;
  thresholds.reserve(trials.size() + 1);
  for (const auto& t : trials) thresholds.push_back(t.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // accepts nothing

  RocCurve curve;
  curve.points.reserve(thresholds.size());
  const double P = static_cast<double>(pos.size());
  const double N = static_cast<double>(neg.size());
  for (double t : thresholds) {
    const auto below_pos = std::lower_bound(pos.begin(), pos.end(), t) - pos.begin();
    const auto below_neg = std::lower_bound(neg.begin(), neg.end(), t) - neg.begin();
    RocPoint pt;
    pt.threshold = t;
    pt.frr = static_cast<double>(below_pos) / P;                  // pos < t rejected
    pt.far = static_cast<double>(neg.size() - below_neg) / N;     // neg >= t accepted
    curve.points.push_back(pt);
  }
  return curve;
}

EerResult eer(const std::vector<ScoredTrial>& trials) {
  const RocCurve curve = roc_curve(trials);
  const auto& pts = curve.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].far > pts[i].frr) continue;
    if (pts[i].far == pts[i].frr) return {pts[i].far, pts[i].threshold};
    // First point below the diagonal; interpolate against its predecessor
    // (i > 0 is guaranteed: the sweep starts at FAR=1, FRR=0).
    const RocPoint& a = pts[i - 1];
    const RocPoint& b = pts[i];
    const double gap_a = a.far - a.frr;               // > 0
    const double gap_b = (b.frr - b.far) + gap_a;     // total gap change, > 0
    const double s = gap_a / gap_b;
    EerResult r;
    r.eer = a.far + s * (b.far - a.far);
    r.threshold = a.threshold + s * (b.threshold - a.threshold);
    return r;
  }
  throw NumericError("eer: sweep never crossed the diagonal");
}

double auc(const std::vector<ScoredTrial>& trials) {
  check_trials(trials);

  // Rank route: midranks over tie groups, Mann-Whitney form.
  std::vector<ScoredTrial> sorted = trials;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredTrial& a, const ScoredTrial& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  long P = 0, N = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (sorted[k].target) rank_sum_pos += midrank;
    i = j;
  }
  for (const auto& t : sorted) (t.target ? P : N)++;
  const double rank_auc =
      (rank_sum_pos - 0.5 * static_cast<double>(P) * (P + 1)) /
      (static_cast<double>(P) * static_cast<double>(N));

  // Trapezoid route over the ROC polyline, descending threshold so FAR runs
  // 0 -> 1 and TPR 0 -> 1.
  const RocCurve curve = roc_curve(trials);
  double trap = 0.0;
  for (std::size_t k = curve.points.size() - 1; k > 0; --k) {
    const RocPoint& a = curve.points[k];
    const RocPoint& b = curve.points[k - 1];
    const double tpr_a = 1.0 - a.frr;
    const double tpr_b = 1.0 - b.frr;
    trap += (b.far - a.far) * 0.5 * (tpr_a + tpr_b);
  }

  if (std::abs(trap - rank_auc) > 1e-9)
    throw NumericError("auc: rank statistic " + std::to_string(rank_auc) +
                       " and ROC trapezoid " + std::to_string(trap) + " disagree");
  return rank_auc;
}

std::vector<double> score_trials(const FopParams& params, const EmbeddingBank& face,
                                 const EmbeddingBank& voice, const std::vector<Trial>& trials) {
  const Matrix u = project_bank(face, params.w_face, params.b_face);
  const Matrix v = project_bank(voice, params.w_voice, params.b_voice);
  std::vector<double> scores;
  scores.reserve(trials.size());
  for (const auto& t : trials) {
    const Index fi = face.row(t.face_id);
    const Index vi = voice.row(t.voice_id);
    scores.push_back(std::clamp(u.row(fi).dot(v.row(vi)), -1.0, 1.0));
  }
  return scores;
}

std::vector<MatchReport> match_curve(const FopParams& params, const EmbeddingBank& face,
                                     const EmbeddingBank& voice, const LabelTable& labels,
                                     const std::vector<int>& nc_values, long trials, Rng& rng,
                                     MatchDirection direction) {
  if (nc_values.empty()) throw ContractError("match_curve: no n_c values");
  for (int nc : nc_values)
    if (nc < 2) throw ContractError("match_curve: n_c must be >= 2");
  if (trials < 1) throw ContractError("match_curve: trials must be >= 1");

  const EmbeddingBank& probe_bank = direction == MatchDirection::voice_probe ? voice : face;
  const EmbeddingBank& gallery_bank = direction == MatchDirection::voice_probe ? face : voice;
  const Matrix probe_proj =
      direction == MatchDirection::voice_probe
          ? project_bank(voice, params.w_voice, params.b_voice)
          : project_bank(face, params.w_face, params.b_face);
  const Matrix gallery_proj =
      direction == MatchDirection::voice_probe
          ? project_bank(face, params.w_face, params.b_face)
          : project_bank(voice, params.w_voice, params.b_voice);

  std::map<std::string, std::vector<Index>> gallery_rows;
  for (Index r = 0; r < gallery_bank.size(); ++r)
    gallery_rows[labels.identity_of(gallery_bank.ids[r])].push_back(r);

  // Probes must have a same-identity gallery instance available.
  std::vector<Index> probe_pool;
  for (Index r = 0; r < probe_bank.size(); ++r)
    if (gallery_rows.count(labels.identity_of(probe_bank.ids[r]))) probe_pool.push_back(r);

  std::vector<std::string> gallery_identities;
  for (const auto& [identity, rows] : gallery_rows) gallery_identities.push_back(identity);

  const int nc_max = *std::max_element(nc_values.begin(), nc_values.end());
  if (static_cast<int>(gallery_identities.size()) < nc_max)
    throw DataError("match_curve: need at least " + std::to_string(nc_max) +
                    " identities with gallery instances, have " +
                    std::to_string(gallery_identities.size()));
  if (probe_pool.empty()) throw DataError("match_curve: no usable probe instances");

  std::map<std::string, std::size_t> identity_pos;
  for (std::size_t k = 0; k < gallery_identities.size(); ++k)
    identity_pos[gallery_identities[k]] = k;

  std::vector<int> nc_sorted = nc_values;
  std::sort(nc_sorted.begin(), nc_sorted.end());
  nc_sorted.erase(std::unique(nc_sorted.begin(), nc_sorted.end()), nc_sorted.end());

  std::vector<long> correct(nc_sorted.size(), 0);
  std::vector<std::size_t> scratch(gallery_identities.size());
  for (long t = 0; t < trials; ++t) {
    const Index probe = probe_pool[rng.below(probe_pool.size())];
    const std::string& identity = labels.identity_of(probe_bank.ids[probe]);
    const auto& own_rows = gallery_rows[identity];
    const Index positive = own_rows[rng.below(own_rows.size())];
    const double pos_score = probe_proj.row(probe).dot(gallery_proj.row(positive));

    // Partial Fisher-Yates over the identity list with the probe's own
    // identity swapped to the tail, giving nc_max-1 distinct distractors.
    std::iota(scratch.begin(), scratch.end(), std::size_t{0});
    std::size_t limit = scratch.size();
    const auto self = identity_pos.find(identity);
    if (self != identity_pos.end()) std::swap(scratch[self->second], scratch[--limit]);

    double best_so_far = -2.0;
    std::size_t nc_idx = 0;
    for (int k = 0; k < nc_max - 1; ++k) {
      const std::size_t pick = rng.below(limit - k) + k;
      std::swap(scratch[k], scratch[pick]);
      const auto& rows = gallery_rows[gallery_identities[scratch[k]]];
      const Index neg = rows[rng.below(rows.size())];
      best_so_far = std::max(best_so_far, probe_proj.row(probe).dot(gallery_proj.row(neg)));
      while (nc_idx < nc_sorted.size() && nc_sorted[nc_idx] == k + 2) {
        if (pos_score > best_so_far) ++correct[nc_idx];
        ++nc_idx;
      }
    }
  }

  std::vector<MatchReport> reports;
  for (std::size_t k = 0; k < nc_sorted.size(); ++k)
    reports.push_back({nc_sorted[k], trials,
                       static_cast<double>(correct[k]) / static_cast<double>(trials)});
  return reports;
}

MatchReport match_1_to_n(const FopParams& params, const EmbeddingBank& face,
                         const EmbeddingBank& voice, const LabelTable& labels, int n_c,
                         long trials, Rng& rng, MatchDirection direction) {
  return match_curve(params, face, voice, labels, {n_c}, trials, rng, direction)[0];
}

Analytics feature_analytics(const FopParams& params, const EmbeddingBank& face,
                            const EmbeddingBank& voice, const LabelTable& labels, long pair_cap,
                            std::uint64_t seed) {
  if (pair_cap < 1) throw ContractError("feature_analytics: pair_cap must be >= 1");

  std::map<std::string, std::vector<Index>> face_rows, voice_rows;
  for (Index r = 0; r < face.size(); ++r)
    face_rows[labels.identity_of(face.ids[r])].push_back(r);
  for (Index r = 0; r < voice.size(); ++r)
    voice_rows[labels.identity_of(voice.ids[r])].push_back(r);

  std::vector<Index> sel_face, sel_voice;
  std::vector<int> sel_class;
  int n_classes = 0;
  for (const auto& [identity, frows] : face_rows) {
    auto it = voice_rows.find(identity);
    if (it == voice_rows.end()) continue;
    const std::size_t n = std::min(frows.size(), it->second.size());
    if (n == 0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      sel_face.push_back(frows[k]);
      sel_voice.push_back(it->second[k]);
      sel_class.push_back(n_classes);
    }
    ++n_classes;
  }
  if (n_classes < 2) throw DataError("feature_analytics: need at least 2 identities");

  Matrix xf(static_cast<Index>(sel_face.size()), face.dim());
  Matrix xv(static_cast<Index>(sel_voice.size()), voice.dim());
  for (std::size_t k = 0; k < sel_face.size(); ++k) {
    xf.row(static_cast<Index>(k)) = face.embeddings.row(sel_face[k]);
    xv.row(static_cast<Index>(k)) = voice.embeddings.row(sel_voice[k]);
  }
  const ForwardCache cache = forward(params, xf, xv);
  const Vector r = cache.fused.rowwise().norm().cwiseMax(kNormEps);
  const Matrix n = (cache.fused.array().colwise() / r.array()).matrix();
  const Index total = n.rows();

  auto cos_of = [&](Index i, Index j) {
    return std::clamp(n.row(i).dot(n.row(j)), -1.0, 1.0);
  };

  long n_same_all = 0;
  for (int c = 0; c < n_classes; ++c) {
    long k = std::count(sel_class.begin(), sel_class.end(), c);
    n_same_all += k * (k - 1) / 2;
  }
  const long n_all = static_cast<long>(total) * (total - 1) / 2;
  const long n_diff_all = n_all - n_same_all;

  Analytics a;
  double sum_same = 0.0, sum_diff = 0.0, sum_abs_diff = 0.0;

  Rng rng(seed);
  if (n_all <= pair_cap) {
    for (Index i = 0; i < total; ++i)
      for (Index j = i + 1; j < total; ++j) {
        const double c = cos_of(i, j);
        if (sel_class[i] == sel_class[j]) {
          sum_same += c;
          ++a.same_pairs;
        } else {
          sum_diff += c;
          sum_abs_diff += std::abs(c);
          ++a.diff_pairs;
        }
      }
  } else {
    // Same pairs first (usually few); sampled only if they alone exceed the cap.
    if (n_same_all <= pair_cap) {
      for (Index i = 0; i < total; ++i)
        for (Index j = i + 1; j < total; ++j)
          if (sel_class[i] == sel_class[j]) {
            sum_same += cos_of(i, j);
            ++a.same_pairs;
          }
    } else {
      while (a.same_pairs < pair_cap) {
        const Index i = static_cast<Index>(rng.below(total));
        const Index j = static_cast<Index>(rng.below(total));
        if (i == j || sel_class[i] != sel_class[j]) continue;
        sum_same += cos_of(i, j);
        ++a.same_pairs;
      }
    }
    const long diff_target = std::min(n_diff_all, pair_cap);
    while (a.diff_pairs < diff_target) {
      const Index i = static_cast<Index>(rng.below(total));
      const Index j = static_cast<Index>(rng.below(total));
      if (i == j || sel_class[i] == sel_class[j]) continue;
      const double c = cos_of(i, j);
      sum_diff += c;
      sum_abs_diff += std::abs(c);
      ++a.diff_pairs;
    }
  }

  a.same_sim = a.same_pairs > 0 ? sum_same / a.same_pairs
                                : std::numeric_limits<double>::quiet_NaN();
  a.diff_sim = a.diff_pairs > 0 ? sum_diff / a.diff_pairs
                                : std::numeric_limits<double>::quiet_NaN();
  a.orthogonality = a.diff_pairs > 0 ? sum_abs_diff / a.diff_pairs
                                     : std::numeric_limits<double>::quiet_NaN();
  return a;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_verification_csv(const std::vector<VerifyRow>& rows, const std::string& path) {
  std::ofstream out = open_csv(path);
  out << "stratum,eer,auc,n_pos,n_neg\n";
  for (const auto& r : rows)
    out << r.stratum << ',' << format_double(r.eer) << ',' << format_double(r.auc) << ','
        << r.n_pos << ',' << r.n_neg << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_match_csv(const std::vector<MatchReport>& rows, const std::string& path) {
  std::ofstream out = open_csv(path);
  out << "n_c,accuracy,trials\n";
  for (const auto& r : rows)
    out << r.n_c << ',' << format_double(r.accuracy) << ',' << r.trials << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_analytics_csv(const Analytics& a, const std::string& path) {
  std::ofstream out = open_csv(path);
  out << "orthogonality,same_sim,diff_sim,same_pairs,diff_pairs\n";
  out << format_double(a.orthogonality) << ',' << format_double(a.same_sim) << ','
      << format_double(a.diff_sim) << ',' << a.same_pairs << ',' << a.diff_pairs << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out = open_csv(path);
  out << "threshold,far,frr\n";
  for (const auto& p : curve.points)
    out << format_double(p.threshold) << ',' << format_double(p.far) << ','
        << format_double(p.frr) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace fop
