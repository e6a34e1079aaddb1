#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FOP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

bool exists(const testutil::TempDir& dir, const std::string& name) {
  return fs::exists(dir.path() / name);
}

}  // namespace

TEST_CASE("cli pipeline: synth, train, eval, analyze produce their artifacts") {
  testutil::TempDir dir("cli");
  const std::string w = "-w " + dir.path().string() + " ";

  REQUIRE(run_cli(w + "synth --n-identities 24 --samples 5 --seed 3") == 0);
  CHECK(exists(dir, "face.bank"));
  CHECK(exists(dir, "voice.bank"));
  CHECK(exists(dir, "labels.txt"));
  CHECK(exists(dir, "splits.txt"));
  CHECK(exists(dir, "synth.resolved.cfg"));

  REQUIRE(run_cli(w + "train --epochs 4 --embed-dim 24 --batch-size 32 --seed 3") == 0);
  CHECK(exists(dir, "fop.ckpt"));
  CHECK(exists(dir, "history.csv"));

  REQUIRE(run_cli(w + "eval-verify --stratify none,G --seed 3") == 0);
  CHECK(exists(dir, "verify.csv"));
  CHECK(exists(dir, "roc_none.csv"));
  CHECK(exists(dir, "roc_G.csv"));
  CHECK(exists(dir, "scores_none.txt"));

  REQUIRE(run_cli(w + "eval-match --nc 2,4 --trials 300 --seed 3") == 0);
  CHECK(exists(dir, "match.csv"));

  REQUIRE(run_cli(w + "analyze --seed 3") == 0);
  CHECK(exists(dir, "analytics.csv"));
}

TEST_CASE("cli exit codes: usage, data, and numeric failures") {
  testutil::TempDir dir("clierr");
  const std::string w = "-w " + dir.path().string() + " ";

  // unknown config key in a config file -> 1
  {
    std::ofstream out(dir.file("bad.cfg"));
    out << "not_a_key = 5\n";
  }
  CHECK(run_cli("-c " + dir.file("bad.cfg") + " " + w + "synth") == 1);
  CHECK(run_cli(w + "synth --set nope=1") == 1);
  CHECK(run_cli(w + "train --loss hinge") == 1);
  CHECK(run_cli(w + "nonexistent-command") == 1);

  // missing inputs -> 2
  CHECK(run_cli(w + "train") == 2);
  CHECK(run_cli(w + "eval-verify") == 2);

  // corrupt bank -> 2
  REQUIRE(run_cli(w + "synth --n-identities 8 --samples 3") == 0);
  {
    std::ofstream out(dir.file("face.bank"), std::ios::app);
    out << "trailing garbage\n";
  }
  CHECK(run_cli(w + "train --epochs 1 --embed-dim 8") == 2);
}

TEST_CASE("cli: unknown key error names the key") {
  testutil::TempDir dir("cliname");
  const std::string out_file = dir.file("stderr.txt");
  const std::string cmd = std::string(FOP_CLI_PATH) + " -w " + dir.path().string() +
                          " synth --set bogus_key=1 2>" + out_file + " >/dev/null";
  (void)std::system(cmd.c_str());
  CHECK(testutil::read_file(out_file).find("bogus_key") != std::string::npos);
}

TEST_CASE("cli: alpha=0 joint run equals a ce run bit for bit") {
  testutil::TempDir a("alpha0"), b("celoss");
  for (const auto* dir : {&a, &b}) {
    REQUIRE(run_cli("-w " + dir->path().string() +
                    " synth --n-identities 20 --samples 5 --seed 11") == 0);
  }
  REQUIRE(run_cli("-w " + a.path().string() +
                  " train --loss joint --alpha 0 --epochs 4 --embed-dim 16 --seed 11") == 0);
  REQUIRE(run_cli("-w " + b.path().string() +
                  " train --loss ce --epochs 4 --embed-dim 16 --seed 11") == 0);
  CHECK(testutil::read_file(a.file("fop.ckpt")) == testutil::read_file(b.file("fop.ckpt")));

  REQUIRE(run_cli("-w " + a.path().string() + " eval-verify --seed 11") == 0);
  REQUIRE(run_cli("-w " + b.path().string() + " eval-verify --seed 11") == 0);
  CHECK(testutil::read_file(a.file("verify.csv")) == testutil::read_file(b.file("verify.csv")));
}

TEST_CASE("cli: gradcheck runs clean") {
  testutil::TempDir dir("gc");
  CHECK(run_cli("-w " + dir.path().string() + " gradcheck") == 0);
  CHECK(exists(dir, "gradcheck.csv"));
}

TEST_CASE("cli: a run is reconstructible from its resolved config") {
  testutil::TempDir first("reso1"), second("reso2");
  REQUIRE(run_cli("-w " + first.path().string() +
                  " synth --n-identities 16 --samples 4 --seed 31") == 0);
  REQUIRE(run_cli("-w " + first.path().string() +
                  " train --epochs 3 --embed-dim 16 --lr 0.002 --seed 31") == 0);

  // replay: same inputs plus only the stored resolved config
  for (const char* name : {"face.bank", "voice.bank", "labels.txt", "splits.txt"})
    fs::copy_file(first.path() / name, second.path() / name);
  REQUIRE(run_cli("-w " + second.path().string() + " -c " +
                  (first.path() / "train.resolved.cfg").string() + " train") == 0);
  CHECK(testutil::read_file(first.file("fop.ckpt")) ==
        testutil::read_file(second.file("fop.ckpt")));
  CHECK(testutil::read_file(first.file("history.csv")) ==
        testutil::read_file(second.file("history.csv")));
}

TEST_CASE("cli: train leaves the input banks byte-identical") {
  testutil::TempDir dir("frozen");
  const std::string w = "-w " + dir.path().string() + " ";
  REQUIRE(run_cli(w + "synth --n-identities 12 --samples 4 --seed 21") == 0);
  const std::string face_before = testutil::read_file(dir.file("face.bank"));
  const std::string voice_before = testutil::read_file(dir.file("voice.bank"));
  REQUIRE(run_cli(w + "train --epochs 3 --embed-dim 12 --seed 21") == 0);
  CHECK(testutil::read_file(dir.file("face.bank")) == face_before);
  CHECK(testutil::read_file(dir.file("voice.bank")) == voice_before);
}
