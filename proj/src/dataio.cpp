#include "fop/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fop {

std::string to_string(Modality m) {
  return m == Modality::face ? "face" : "voice";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test_seen: return "test_seen";
    case Split::test_unseen: return "test_unseen";
  }
  throw ContractError("to_string: bad Split");
}

std::string to_string(Stratify s) {
  switch (s) {
    case Stratify::none: return "none";
    case Stratify::gender: return "G";
    case Stratify::nationality: return "N";
    case Stratify::age: return "A";
    case Stratify::gna: return "GNA";
  }
  throw ContractError("to_string: bad Stratify");
}

Modality parse_modality(const std::string& token) {
  if (token == "face") return Modality::face;
  if (token == "voice") return Modality::voice;
  throw DataError("unknown modality token '" + token + "'");
}

Split parse_split(const std::string& token) {
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test_seen") return Split::test_seen;
  if (token == "test_unseen") return Split::test_unseen;
  throw DataError("unknown split token '" + token + "'");
}

Stratify parse_stratify(const std::string& token) {
  if (token == "none") return Stratify::none;
  if (token == "G") return Stratify::gender;
  if (token == "N") return Stratify::nationality;
  if (token == "A") return Stratify::age;
  if (token == "GNA") return Stratify::gna;
  throw DataError("unknown stratify token '" + token + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void fail_at(const std::string& path, long line, const std::string& msg) {
  throw DataError(path + ":" + std::to_string(line) + ": " + msg);
}

double parse_double_strict(const std::string& tok, const std::string& path, long line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    fail_at(path, line, "bad numeric value '" + tok + "'");
  if (!std::isfinite(v)) fail_at(path, line, "non-finite value '" + tok + "'");
  return v;
}

long parse_long_strict(const std::string& tok, const std::string& path, long line) {
  long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    fail_at(path, line, "bad integer '" + tok + "'");
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

void check_token(const std::string& tok, const char* what) {
  if (tok.empty()) throw ContractError(std::string(what) + " must be non-empty");
  for (char c : tok)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
      throw ContractError(std::string(what) + " '" + tok + "' contains whitespace");
}

}  // namespace

Index EmbeddingBank::row(const std::string& instance_id) const {
  auto it = row_of.find(instance_id);
  if (it == row_of.end())
    throw DataError("unknown instance id '" + instance_id + "' in " + to_string(modality) +
                    " bank");
  return it->second;
}

EmbeddingBank EmbeddingBank::build(Modality modality, std::vector<std::string> ids,
                                   Matrix embeddings) {
  if (static_cast<Index>(ids.size()) != embeddings.rows())
    throw ContractError("EmbeddingBank::build: " + std::to_string(ids.size()) + " ids vs " +
                        std::to_string(embeddings.rows()) + " rows");
  if (!all_finite(embeddings)) throw ContractError("EmbeddingBank::build: non-finite embedding");
  EmbeddingBank bank;
  bank.modality = modality;
  bank.ids = std::move(ids);
  bank.embeddings = std::move(embeddings);
  for (Index i = 0; i < bank.size(); ++i) {
    check_token(bank.ids[i], "instance id");
    if (!bank.row_of.emplace(bank.ids[i], i).second)
      throw ContractError("EmbeddingBank::build: duplicate instance id '" + bank.ids[i] + "'");
  }
  return bank;
}

EmbeddingBank read_bank(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  long lineno = 0;

  if (!std::getline(in, line)) fail_at(path, 1, "missing header");
  ++lineno;
  auto head = split_ws(line);
  if (head.size() != 5 || head[0] != "FVBANK")
    fail_at(path, lineno, "bad header, expected 'FVBANK 1 <n> <dim> <face|voice>'");
  if (head[1] != "1") fail_at(path, lineno, "unsupported format version '" + head[1] + "'");
  const long n = parse_long_strict(head[2], path, lineno);
  const long dim = parse_long_strict(head[3], path, lineno);
  if (n < 0 || dim < 1) fail_at(path, lineno, "bad counts in header");
  Modality modality;
  try {
    modality = parse_modality(head[4]);
  } catch (const DataError& e) {
    fail_at(path, lineno, e.what());
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  Matrix emb(n, dim);
  std::unordered_map<std::string, Index> seen;
  for (long r = 0; r < n; ++r) {
    if (!std::getline(in, line)) fail_at(path, lineno + 1, "unexpected end of file");
    ++lineno;
    auto toks = split_ws(line);
    if (static_cast<long>(toks.size()) != dim + 1)
      fail_at(path, lineno, "expected " + std::to_string(dim + 1) + " fields, got " +
                                std::to_string(toks.size()));
    if (!seen.emplace(toks[0], r).second)
      fail_at(path, lineno, "duplicate instance id '" + toks[0] + "'");
    ids.push_back(toks[0]);
    for (long c = 0; c < dim; ++c) emb(r, c) = parse_double_strict(toks[c + 1], path, lineno);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!split_ws(line).empty() || !line.empty())
      fail_at(path, lineno, "trailing garbage after " + std::to_string(n) + " rows");
  }

  EmbeddingBank bank;
  bank.modality = modality;
  bank.ids = std::move(ids);
  bank.embeddings = std::move(emb);
  bank.row_of = std::move(seen);
  return bank;
}

void write_bank(const EmbeddingBank& bank, const std::string& path) {
  if (!all_finite(bank.embeddings)) throw ContractError("write_bank: non-finite embedding");
  std::ofstream out = open_out(path);
  out << "FVBANK 1 " << bank.size() << ' ' << bank.dim() << ' ' << to_string(bank.modality)
      << '\n';
  for (Index r = 0; r < bank.size(); ++r) {
    out << bank.ids[r];
    for (Index c = 0; c < bank.dim(); ++c) out << ' ' << format_double(bank.embeddings(r, c));
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

const InstanceRecord& LabelTable::record(const std::string& instance_id) const {
  auto it = row_of.find(instance_id);
  if (it == row_of.end()) throw DataError("instance '" + instance_id + "' missing from labels");
  return rows[it->second];
}

const std::string& LabelTable::identity_of(const std::string& instance_id) const {
  return record(instance_id).identity;
}

Split LabelTable::split(const std::string& identity) const {
  auto it = split_of.find(identity);
  if (it == split_of.end())
    throw DataError("identity '" + identity + "' has no split assignment");
  return it->second;
}

std::vector<std::string> LabelTable::identities_in_split(Split s) const {
  std::vector<std::string> out;
  for (const auto& [identity, sp] : split_of)
    if (sp == s) out.push_back(identity);
  return out;
}

void LabelTable::add_row(InstanceRecord rec) {
  if (!row_of.emplace(rec.instance_id, rows.size()).second)
    throw DataError("duplicate instance id '" + rec.instance_id + "' in label table");
  rows.push_back(std::move(rec));
}

LabelTable read_labels(const std::string& labels_path, const std::string& split_path) {
  LabelTable table;

  {
    std::ifstream in = open_in(labels_path);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) fail_at(labels_path, lineno, "blank line");
      if (toks.size() != 5)
        fail_at(labels_path, lineno,
                "expected 5 fields (instance identity gender nationality age), got " +
                    std::to_string(toks.size()));
      InstanceRecord rec{toks[0], toks[1], toks[2], toks[3], toks[4]};
      try {
        table.add_row(std::move(rec));
      } catch (const DataError& e) {
        fail_at(labels_path, lineno, e.what());
      }
    }
  }

  {
    std::ifstream in = open_in(split_path);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) fail_at(split_path, lineno, "blank line");
      if (toks.size() != 2) fail_at(split_path, lineno, "expected '<identity> <split>'");
      Split s;
      try {
        s = parse_split(toks[1]);
      } catch (const DataError& e) {
        fail_at(split_path, lineno, e.what());
      }
      auto [it, inserted] = table.split_of.emplace(toks[0], s);
      if (!inserted)
        fail_at(split_path, lineno,
                "identity '" + toks[0] + "' assigned to both '" + to_string(it->second) +
                    "' and '" + toks[1] + "'");
    }
  }

  // Every labelled identity must have a split; catches truncated split files.
  for (const auto& rec : table.rows)
    if (table.split_of.find(rec.identity) == table.split_of.end())
      throw DataError("identity '" + rec.identity + "' in '" + labels_path +
                      "' has no split assignment in '" + split_path + "'");
  return table;
}

void write_labels(const LabelTable& table, const std::string& labels_path,
                  const std::string& split_path) {
  std::ofstream lout = open_out(labels_path);
  for (const auto& r : table.rows)
    lout << r.instance_id << ' ' << r.identity << ' ' << r.gender << ' ' << r.nationality << ' '
         << r.age_bucket << '\n';
  if (!lout) throw DataError("write failed for '" + labels_path + "'");

  std::ofstream sout = open_out(split_path);
  for (const auto& [identity, s] : table.split_of) sout << identity << ' ' << to_string(s) << '\n';
  if (!sout) throw DataError("write failed for '" + split_path + "'");
}

namespace {

void validate_bank_against_labels(const LabelTable& table, const EmbeddingBank& bank) {
  for (const auto& id : bank.ids) {
    const auto& rec = table.record(id);  // throws if missing
    table.split(rec.identity);           // throws if no split
  }
}

}  // namespace

void validate_corpus(const LabelTable& table, const EmbeddingBank& face,
                     const EmbeddingBank& voice) {
  validate_bank_against_labels(table, face);
  validate_bank_against_labels(table, voice);
  // Attributes must be constant per identity; stratified sampling keys on them.
  std::unordered_map<std::string, const InstanceRecord*> attr_of;
  for (const auto& rec : table.rows) {
    auto [it, inserted] = attr_of.emplace(rec.identity, &rec);
    if (inserted) continue;
    const InstanceRecord& first = *it->second;
    if (first.gender != rec.gender || first.nationality != rec.nationality ||
        first.age_bucket != rec.age_bucket)
      throw DataError("identity '" + rec.identity + "' has inconsistent attributes across rows");
  }
}

EmbeddingBank filter_by_split(const EmbeddingBank& bank, const LabelTable& table, Split s) {
  std::vector<Index> keep;
  for (Index i = 0; i < bank.size(); ++i)
    if (table.split(table.identity_of(bank.ids[i])) == s) keep.push_back(i);
  std::vector<std::string> ids;
  ids.reserve(keep.size());
  Matrix emb(static_cast<Index>(keep.size()), bank.dim());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    ids.push_back(bank.ids[keep[k]]);
    emb.row(static_cast<Index>(k)) = bank.embeddings.row(keep[k]);
  }
  return EmbeddingBank::build(bank.modality, std::move(ids), std::move(emb));
}

TrialSet make_trials(const EmbeddingBank& face, const EmbeddingBank& voice,
                     const LabelTable& table, Stratify stratify, int n_neg_per_pos, Rng& rng) {
  if (n_neg_per_pos < 1) throw ContractError("make_trials: n_neg_per_pos must be >= 1");

  struct IdentityInfo {
    std::vector<Index> voice_rows;
    std::string key;
  };

  // Identity universe: everything present in either bank, sorted for a
  // deterministic stratum layout.
  std::map<std::string, IdentityInfo> info;
  for (const auto& id : face.ids) info[table.identity_of(id)];
  for (Index r = 0; r < voice.size(); ++r)
    info[table.identity_of(voice.ids[r])].voice_rows.push_back(r);

  std::unordered_map<std::string, const InstanceRecord*> first_record;
  for (const auto& row : table.rows) first_record.emplace(row.identity, &row);

  auto stratum_key = [&](const std::string& identity) -> std::string {
    auto it = first_record.find(identity);
    if (it == first_record.end())
      throw DataError("identity '" + identity + "' missing from labels");
    const InstanceRecord* rec = it->second;
    switch (stratify) {
      case Stratify::none: return "";
      case Stratify::gender: return rec->gender;
      case Stratify::nationality: return rec->nationality;
      case Stratify::age: return rec->age_bucket;
      case Stratify::gna: return rec->gender + "\x1f" + rec->nationality + "\x1f" + rec->age_bucket;
    }
    throw ContractError("make_trials: bad Stratify");
  };

  std::map<std::string, std::vector<std::string>> strata;  // key -> identities, sorted
  for (auto& [identity, inf] : info) {
    inf.key = stratum_key(identity);
    strata[inf.key].push_back(identity);
  }

  TrialSet out;
  std::set<std::string> viable;
  for (const auto& [key, members] : strata) {
    if (members.size() >= 2)
      viable.insert(key);
    else
      ++out.skipped_strata;
  }

  // Per stratum: members that can serve as negative voice sources, plus the
  // position of each member so self-exclusion stays O(1) at draw time.
  struct StratumPool {
    std::vector<const IdentityInfo*> candidates;
    std::vector<std::string> names;
    std::unordered_map<std::string, std::size_t> pos;
  };
  std::map<std::string, StratumPool> pools;
  for (const auto& key : viable) {
    StratumPool pool;
    for (const auto& identity : strata[key]) {
      const IdentityInfo& inf = info[identity];
      if (!inf.voice_rows.empty()) {
        pool.pos[identity] = pool.candidates.size();
        pool.candidates.push_back(&inf);
        pool.names.push_back(identity);
      }
    }
    pools[key] = std::move(pool);
  }

  for (Index fr = 0; fr < face.size(); ++fr) {
    const std::string& identity = table.identity_of(face.ids[fr]);
    const IdentityInfo& inf = info[identity];
    if (viable.find(inf.key) == viable.end()) continue;
    const StratumPool& pool = pools[inf.key];

    auto self = pool.pos.find(identity);
    const std::size_t n_others = pool.candidates.size() - (self != pool.pos.end() ? 1 : 0);
    if (inf.voice_rows.empty() || n_others == 0) {
      ++out.skipped_instances;
      continue;
    }

    const Index pv = inf.voice_rows[rng.below(inf.voice_rows.size())];
    out.trials.push_back({face.ids[fr], voice.ids[pv], true});

    for (int k = 0; k < n_neg_per_pos; ++k) {
      std::size_t j = rng.below(n_others);
      if (self != pool.pos.end() && j >= self->second) ++j;
      const IdentityInfo& other = *pool.candidates[j];
      const Index nv = other.voice_rows[rng.below(other.voice_rows.size())];
      out.trials.push_back({face.ids[fr], voice.ids[nv], false});
    }
  }

  long n_pos = 0, n_neg = 0;
  for (const auto& t : out.trials) (t.same_identity ? n_pos : n_neg)++;
  if (n_pos == 0) throw DataError("make_trials: no positive trials could be formed");
  if (n_neg == 0)
    throw DataError("make_trials: no negative trials could be formed (no stratum with two "
                    "identities under " +
                    to_string(stratify) + ")");
  return out;
}

void write_trials(const TrialSet& set, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& t : set.trials)
    out << t.face_id << ' ' << t.voice_id << ' ' << (t.same_identity ? 1 : 0) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

TrialSet read_trials(const std::string& path) {
  std::ifstream in = open_in(path);
  TrialSet set;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.size() != 3) fail_at(path, lineno, "expected '<face_id> <voice_id> <0|1>'");
    if (toks[2] != "0" && toks[2] != "1") fail_at(path, lineno, "bad label '" + toks[2] + "'");
    set.trials.push_back({toks[0], toks[1], toks[2] == "1"});
  }
  return set;
}

void write_scores(const std::vector<Trial>& trials, const std::vector<double>& scores,
                  const std::string& path) {
  if (trials.size() != scores.size())
    throw ContractError("write_scores: " + std::to_string(trials.size()) + " trials vs " +
                        std::to_string(scores.size()) + " scores");
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < trials.size(); ++i)
    out << trials[i].face_id << ' ' << trials[i].voice_id << ' '
        << (trials[i].same_identity ? 1 : 0) << ' ' << format_double(scores[i]) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::pair<TrialSet, std::vector<double>> read_scores(const std::string& path) {
  std::ifstream in = open_in(path);
  TrialSet set;
  std::vector<double> scores;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.size() != 4)
      fail_at(path, lineno, "expected '<face_id> <voice_id> <0|1> <score>'");
    if (toks[2] != "0" && toks[2] != "1") fail_at(path, lineno, "bad label '" + toks[2] + "'");
    set.trials.push_back({toks[0], toks[1], toks[2] == "1"});
    scores.push_back(parse_double_strict(toks[3], path, lineno));
  }
  return {std::move(set), std::move(scores)};
}

std::vector<ScoredTrial> to_scored(const std::vector<Trial>& trials,
                                   const std::vector<double>& scores) {
  if (trials.size() != scores.size())
    throw ContractError("to_scored: trial/score count mismatch");
  std::vector<ScoredTrial> out(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) out[i] = {scores[i], trials[i].same_identity};
  return out;
}

}  // namespace fop
