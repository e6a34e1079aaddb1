#include <doctest.h>

#include <fstream>

#include "fop/dataio.hpp"
#include "fop/synthgen.hpp"
#include "testutil.hpp"

using namespace fop;

namespace {

EmbeddingBank small_bank(Modality m, Index n, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i)
    ids.push_back((m == Modality::face ? "f" : "v") + std::to_string(i));
  return EmbeddingBank::build(m, std::move(ids), testutil::random_matrix(n, dim, rng));
}

void write_lines(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("bank round trip is bit exact") {
  testutil::TempDir tmp("bank");
  EmbeddingBank bank = small_bank(Modality::face, 16, 8, 1);
  write_bank(bank, tmp.file("a.bank"));
  EmbeddingBank back = read_bank(tmp.file("a.bank"));
  CHECK(back.modality == Modality::face);
  CHECK(back.ids == bank.ids);
  REQUIRE(back.embeddings.rows() == bank.embeddings.rows());
  bool identical = true;
  for (Index i = 0; i < bank.embeddings.size(); ++i)
    identical = identical && bank.embeddings.data()[i] == back.embeddings.data()[i];
  CHECK(identical);

  write_bank(back, tmp.file("b.bank"));
  CHECK(testutil::read_file(tmp.file("a.bank")) == testutil::read_file(tmp.file("b.bank")));
}

TEST_CASE("bank parser rejects malformed input with line numbers") {
  testutil::TempDir tmp("badbank");

  write_lines(tmp.file("wrong_count.bank"), "FVBANK 1 1 4 face\nx 1.0 2.0 3.0\n");
  try {
    read_bank(tmp.file("wrong_count.bank"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  write_lines(tmp.file("dup.bank"), "FVBANK 1 2 2 face\nx 1 2\nx 3 4\n");
  try {
    read_bank(tmp.file("dup.bank"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("duplicate") != std::string::npos);
    CHECK(msg.find(":3:") != std::string::npos);
  }

  write_lines(tmp.file("nonfinite.bank"), "FVBANK 1 1 2 voice\nx inf 2\n");
  CHECK_THROWS_AS((void)read_bank(tmp.file("nonfinite.bank")), DataError);

  write_lines(tmp.file("trailing.bank"), "FVBANK 1 1 2 face\nx 1 2\ngarbage 1 2\n");
  try {
    read_bank(tmp.file("trailing.bank"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("trailing") != std::string::npos);
  }

  write_lines(tmp.file("badheader.bank"), "FVBANK 2 1 2 face\nx 1 2\n");
  CHECK_THROWS_AS((void)read_bank(tmp.file("badheader.bank")), DataError);
  write_lines(tmp.file("badmod.bank"), "FVBANK 1 1 2 audio\nx 1 2\n");
  CHECK_THROWS_AS((void)read_bank(tmp.file("badmod.bank")), DataError);
  write_lines(tmp.file("eof.bank"), "FVBANK 1 3 2 face\nx 1 2\n");
  CHECK_THROWS_AS((void)read_bank(tmp.file("eof.bank")), DataError);
}

TEST_CASE("labels parse, split conflicts, and round trip") {
  testutil::TempDir tmp("labels");
  write_lines(tmp.file("l.txt"), "i0 idA m us 20s\ni1 idB f uk 30s\n");
  write_lines(tmp.file("s.txt"), "idA train\nidB test_unseen\n");
  LabelTable t = read_labels(tmp.file("l.txt"), tmp.file("s.txt"));
  CHECK(t.rows.size() == 2);
  CHECK(t.record("i0").gender == "m");
  CHECK(t.record("i1").nationality == "uk");
  CHECK(t.split("idA") == Split::train);
  CHECK(t.split("idB") == Split::test_unseen);

  // conflicting split assignment
  write_lines(tmp.file("s2.txt"), "idA train\nidA test_unseen\nidB val\n");
  try {
    read_labels(tmp.file("l.txt"), tmp.file("s2.txt"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("idA") != std::string::npos);
    CHECK(msg.find(":2:") != std::string::npos);
  }

  write_lines(tmp.file("s3.txt"), "idA train\nidB holdout\n");
  CHECK_THROWS_AS((void)read_labels(tmp.file("l.txt"), tmp.file("s3.txt")), DataError);

  // identity with no split at all
  write_lines(tmp.file("s4.txt"), "idA train\n");
  CHECK_THROWS_AS((void)read_labels(tmp.file("l.txt"), tmp.file("s4.txt")), DataError);

  // instance in a bank but missing from the labels
  EmbeddingBank face = small_bank(Modality::face, 2, 3, 7);
  EmbeddingBank voice = small_bank(Modality::voice, 2, 3, 8);
  CHECK_THROWS_AS(validate_corpus(t, face, voice), DataError);
}

TEST_CASE("labels round trip on a generated corpus") {
  SynthConfig cfg;
  cfg.n_identities = 50;
  cfg.samples_per_identity = 10;  // 1000 label rows
  cfg.face_dim = 8;
  cfg.voice_dim = 8;
  cfg.latent_dim = 4;
  cfg.seed = 99;
  SynthCorpus corpus = generate(cfg);
  REQUIRE(corpus.labels.rows.size() == 1000);

  testutil::TempDir tmp("lrt");
  write_labels(corpus.labels, tmp.file("l.txt"), tmp.file("s.txt"));
  LabelTable back = read_labels(tmp.file("l.txt"), tmp.file("s.txt"));
  write_labels(back, tmp.file("l2.txt"), tmp.file("s2.txt"));
  CHECK(testutil::read_file(tmp.file("l.txt")) == testutil::read_file(tmp.file("l2.txt")));
  CHECK(testutil::read_file(tmp.file("s.txt")) == testutil::read_file(tmp.file("s2.txt")));
  validate_corpus(back, corpus.face, corpus.voice);
}

TEST_CASE("trial and score files round trip") {
  testutil::TempDir tmp("trials");
  TrialSet set;
  set.trials = {{"f0", "v1", true}, {"f1", "v0", false}, {"f2", "v2", true}};
  write_trials(set, tmp.file("t.txt"));
  TrialSet back = read_trials(tmp.file("t.txt"));
  REQUIRE(back.trials.size() == 3);
  CHECK(back.trials[1].face_id == "f1");
  CHECK(back.trials[1].same_identity == false);
  write_trials(back, tmp.file("t2.txt"));
  CHECK(testutil::read_file(tmp.file("t.txt")) == testutil::read_file(tmp.file("t2.txt")));

  std::vector<double> scores{0.25, -0.5, 1.0 / 3.0};
  write_scores(set.trials, scores, tmp.file("sc.txt"));
  auto [tset, sback] = read_scores(tmp.file("sc.txt"));
  CHECK(sback.size() == 3);
  bool identical = true;
  for (std::size_t i = 0; i < 3; ++i) identical = identical && sback[i] == scores[i];
  CHECK(identical);
  write_scores(tset.trials, sback, tmp.file("sc2.txt"));
  CHECK(testutil::read_file(tmp.file("sc.txt")) == testutil::read_file(tmp.file("sc2.txt")));
}

namespace {

// Two-identity corpus with hand-set attributes.
struct TinyCorpus {
  EmbeddingBank face;
  EmbeddingBank voice;
  LabelTable labels;
};

TinyCorpus tiny_corpus(const std::vector<std::string>& genders) {
  TinyCorpus c;
  const int n = static_cast<int>(genders.size());
  std::vector<std::string> fids, vids;
  Matrix femb(2 * n, 3), vemb(2 * n, 3);
  Rng rng(5);
  for (int i = 0; i < n; ++i) {
    const std::string identity = "id" + std::to_string(i);
    for (int s = 0; s < 2; ++s) {
      fids.push_back(identity + "_f" + std::to_string(s));
      vids.push_back(identity + "_v" + std::to_string(s));
      for (int j = 0; j < 3; ++j) {
        femb(2 * i + s, j) = rng.normal();
        vemb(2 * i + s, j) = rng.normal();
      }
      c.labels.add_row({fids.back(), identity, genders[i], "us", "20s"});
      c.labels.add_row({vids.back(), identity, genders[i], "us", "20s"});
    }
    c.labels.split_of[identity] = Split::test_unseen;
  }
  c.face = EmbeddingBank::build(Modality::face, fids, femb);
  c.voice = EmbeddingBank::build(Modality::voice, vids, vemb);
  return c;
}

}  // namespace

TEST_CASE("degenerate stratum: stratify=G equals stratify=none when all share gender") {
  TinyCorpus c = tiny_corpus({"m", "m"});
  Rng r1(77), r2(77);
  TrialSet a = make_trials(c.face, c.voice, c.labels, Stratify::none, 1, r1);
  TrialSet b = make_trials(c.face, c.voice, c.labels, Stratify::gender, 1, r2);
  REQUIRE(a.trials.size() == b.trials.size());
  bool same = true;
  for (std::size_t i = 0; i < a.trials.size(); ++i)
    same = same && a.trials[i].face_id == b.trials[i].face_id &&
           a.trials[i].voice_id == b.trials[i].voice_id &&
           a.trials[i].same_identity == b.trials[i].same_identity;
  CHECK(same);
}

TEST_CASE("gna with no shared attributes yields zero negatives and errors") {
  TinyCorpus c = tiny_corpus({"m", "f"});  // two singleton strata under G
  Rng rng(3);
  CHECK_THROWS_AS((void)make_trials(c.face, c.voice, c.labels, Stratify::gender, 1, rng),
                  DataError);
}

TEST_CASE("nationality stratification: every negative shares nationality") {
  SynthConfig cfg;
  cfg.n_identities = 20;
  cfg.samples_per_identity = 4;
  cfg.face_dim = 6;
  cfg.voice_dim = 6;
  cfg.latent_dim = 4;
  cfg.nationalities = {"us", "uk", "in"};
  cfg.seed = 31;
  SynthCorpus corpus = generate(cfg);
  Rng rng(8);
  TrialSet set =
      make_trials(corpus.face, corpus.voice, corpus.labels, Stratify::nationality, 2, rng);
  long neg = 0;
  bool all_share = true;
  for (const auto& t : set.trials) {
    if (t.same_identity) continue;
    ++neg;
    const auto& a = corpus.labels.record(t.face_id);
    const auto& b = corpus.labels.record(t.voice_id);
    all_share = all_share && a.nationality == b.nationality && a.identity != b.identity;
  }
  CHECK(neg > 0);
  CHECK(all_share);
}

TEST_CASE("make_trials is seed deterministic and balanced") {
  SynthConfig cfg;
  cfg.n_identities = 12;
  cfg.samples_per_identity = 3;
  cfg.face_dim = 5;
  cfg.voice_dim = 5;
  cfg.latent_dim = 4;
  cfg.seed = 17;
  SynthCorpus corpus = generate(cfg);
  Rng r1(4), r2(4);
  TrialSet a = make_trials(corpus.face, corpus.voice, corpus.labels, Stratify::none, 3, r1);
  TrialSet b = make_trials(corpus.face, corpus.voice, corpus.labels, Stratify::none, 3, r2);
  REQUIRE(a.trials.size() == b.trials.size());
  long pos = 0, neg = 0;
  bool same = true;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    same = same && a.trials[i].voice_id == b.trials[i].voice_id;
    (a.trials[i].same_identity ? pos : neg)++;
  }
  CHECK(same);
  CHECK(neg == 3 * pos);
  CHECK(pos == corpus.face.size());

  // positives really are same-identity, negatives cross-identity
  bool labels_ok = true;
  for (const auto& t : a.trials) {
    const bool same_id =
        corpus.labels.identity_of(t.face_id) == corpus.labels.identity_of(t.voice_id);
    labels_ok = labels_ok && same_id == t.same_identity;
  }
  CHECK(labels_ok);
}

TEST_CASE("filter_by_split keeps only matching identities in order") {
  TinyCorpus c = tiny_corpus({"m", "f"});
  c.labels.split_of["id0"] = Split::train;
  EmbeddingBank train = filter_by_split(c.face, c.labels, Split::train);
  REQUIRE(train.size() == 2);
  CHECK(train.ids[0] == "id0_f0");
  CHECK(train.ids[1] == "id0_f1");
  EmbeddingBank unseen = filter_by_split(c.face, c.labels, Split::test_unseen);
  CHECK(unseen.size() == 2);
  CHECK(unseen.ids[0] == "id1_f0");
}
