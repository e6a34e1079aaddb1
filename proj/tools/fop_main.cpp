// Command-line front end: binds corpus generation, training, evaluation,
// analytics and the loss benchmark into reproducible seeded runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fop/benchlosses.hpp"
#include "fop/dataio.hpp"
#include "fop/evalsuite.hpp"
#include "fop/gradcheck.hpp"
#include "fop/runconfig.hpp"
#include "fop/synthgen.hpp"
#include "fop/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr double kGradcheckTol = 1e-4;

struct Cli {
  std::string workdir = ".";
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the config file
  fop::RunConfig cfg;

  fs::path at(const std::string& name) const { return fs::path(workdir) / name; }

  void resolve() {
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& kv : overrides) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw fop::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    fs::create_directories(workdir);
  }
};

struct LoadedCorpus {
  fop::EmbeddingBank face;
  fop::EmbeddingBank voice;
  fop::LabelTable labels;
};

LoadedCorpus load_corpus(const Cli& cli) {
  LoadedCorpus c;
  c.face = fop::read_bank(cli.at(cli.cfg.face_bank).string());
  c.voice = fop::read_bank(cli.at(cli.cfg.voice_bank).string());
  c.labels = fop::read_labels(cli.at(cli.cfg.labels_file).string(),
                              cli.at(cli.cfg.split_file).string());
  fop::validate_corpus(c.labels, c.face, c.voice);
  return c;
}

// Keeps a bank intact when eval_split covers everything.
std::pair<fop::EmbeddingBank, fop::EmbeddingBank> eval_banks(const Cli& cli,
                                                             const LoadedCorpus& corpus) {
  const fop::Split split = cli.cfg.eval_split_value();
  return {fop::filter_by_split(corpus.face, corpus.labels, split),
          fop::filter_by_split(corpus.voice, corpus.labels, split)};
}

int cmd_synth(Cli& cli) {
  const fop::SynthCorpus corpus = fop::generate(cli.cfg.to_synth_config());
  fop::write_bank(corpus.face, cli.at(cli.cfg.face_bank).string());
  fop::write_bank(corpus.voice, cli.at(cli.cfg.voice_bank).string());
  fop::write_labels(corpus.labels, cli.at(cli.cfg.labels_file).string(),
                    cli.at(cli.cfg.split_file).string());
  cli.cfg.write_resolved(cli.at("synth.resolved.cfg").string());
  std::cout << "wrote " << corpus.face.size() << " face and " << corpus.voice.size()
            << " voice instances for " << cli.cfg.n_identities << " identities\n";
  return kExitOk;
}

int cmd_train(Cli& cli) {
  const fop::TrainConfig train_cfg = cli.cfg.to_train_config();  // validate before touching data
  train_cfg.validate();
  const LoadedCorpus corpus = load_corpus(cli);
  const fop::TrainResult result = fop::train(corpus.face, corpus.voice, corpus.labels, train_cfg);
  fop::save_params(result.params, cli.at(cli.cfg.checkpoint).string());
  fop::write_history_csv(result.history, cli.at(cli.cfg.history_file).string());
  cli.cfg.write_resolved(cli.at("train.resolved.cfg").string());
  const auto& last = result.history.back();
  std::cout << "trained " << result.history.size() << " epochs, final loss "
            << fop::format_double(last.loss) << ", val eer " << fop::format_double(last.val_eer)
            << '\n';
  return kExitOk;
}

int cmd_eval_verify(Cli& cli) {
  const auto strata = cli.cfg.stratify_list();
  (void)cli.cfg.eval_split_value();
  const LoadedCorpus corpus = load_corpus(cli);
  const fop::FopParams params = fop::load_params(cli.at(cli.cfg.checkpoint).string());
  const auto [face, voice] = eval_banks(cli, corpus);

  std::vector<fop::VerifyRow> rows;
  for (std::size_t k = 0; k < strata.size(); ++k) {
    // Per-stratum stream: adding or reordering strata never shifts draws.
    fop::Rng rng(fop::Rng::mix(cli.cfg.seed, 1000 + static_cast<std::uint64_t>(strata[k])));
    const fop::TrialSet set =
        fop::make_trials(face, voice, corpus.labels, strata[k], cli.cfg.n_neg_per_pos, rng);
    const std::vector<double> scores = fop::score_trials(params, face, voice, set.trials);
    const auto scored = fop::to_scored(set.trials, scores);

    fop::VerifyRow row;
    row.stratum = fop::to_string(strata[k]);
    row.eer = fop::eer(scored).eer;
    row.auc = fop::auc(scored);
    for (const auto& t : scored) (t.target ? row.n_pos : row.n_neg)++;
    rows.push_back(row);

    fop::write_scores(set.trials, scores,
                      cli.at(cli.cfg.scores_prefix + row.stratum + ".txt").string());
    fop::write_roc_csv(fop::roc_curve(scored),
                       cli.at(cli.cfg.roc_prefix + row.stratum + ".csv").string());
    if (set.skipped_strata > 0)
      std::cerr << "warning: " << set.skipped_strata << " strata under " << row.stratum
                << " had fewer than two identities and were skipped\n";
  }
  fop::write_verification_csv(rows, cli.at(cli.cfg.verify_csv).string());
  cli.cfg.write_resolved(cli.at("eval-verify.resolved.cfg").string());
  for (const auto& r : rows)
    std::cout << r.stratum << ": eer " << fop::format_double(r.eer) << ", auc "
              << fop::format_double(r.auc) << " (" << r.n_pos << " pos, " << r.n_neg
              << " neg)\n";
  return kExitOk;
}

int cmd_eval_match(Cli& cli) {
  (void)cli.cfg.match_direction_value();
  (void)cli.cfg.eval_split_value();
  const LoadedCorpus corpus = load_corpus(cli);
  const fop::FopParams params = fop::load_params(cli.at(cli.cfg.checkpoint).string());
  const auto [face, voice] = eval_banks(cli, corpus);

  fop::Rng rng(fop::Rng::mix(cli.cfg.seed, 2000));
  const auto reports =
      fop::match_curve(params, face, voice, corpus.labels, cli.cfg.nc, cli.cfg.match_trials, rng,
                       cli.cfg.match_direction_value());
  fop::write_match_csv(reports, cli.at(cli.cfg.match_csv).string());
  cli.cfg.write_resolved(cli.at("eval-match.resolved.cfg").string());
  for (const auto& r : reports)
    std::cout << "1:" << r.n_c << " accuracy " << fop::format_double(r.accuracy) << " over "
              << r.trials << " trials\n";
  return kExitOk;
}

int cmd_analyze(Cli& cli) {
  (void)cli.cfg.eval_split_value();
  const LoadedCorpus corpus = load_corpus(cli);
  const fop::FopParams params = fop::load_params(cli.at(cli.cfg.checkpoint).string());
  const auto [face, voice] = eval_banks(cli, corpus);

  const fop::Analytics a =
      fop::feature_analytics(params, face, voice, corpus.labels, cli.cfg.analytics_pair_cap,
                             fop::Rng::mix(cli.cfg.seed, 3000));
  fop::write_analytics_csv(a, cli.at(cli.cfg.analytics_csv).string());
  cli.cfg.write_resolved(cli.at("analyze.resolved.cfg").string());
  std::cout << "orthogonality " << fop::format_double(a.orthogonality) << ", same_sim "
            << fop::format_double(a.same_sim) << ", diff_sim " << fop::format_double(a.diff_sim)
            << '\n';
  return kExitOk;
}

int cmd_bench(Cli& cli) {
  const auto reports = fop::run_all_benches(cli.cfg.to_bench_config());
  fop::write_bench_csv(reports, cli.at(cli.cfg.bench_csv).string());
  cli.cfg.write_resolved(cli.at("bench-loss.resolved.cfg").string());
  for (const auto& r : reports)
    std::cout << fop::to_string(r.kind) << ": slope " << fop::format_double(r.slope) << ", "
              << fop::format_double(r.points.back().seconds) << " s at n="
              << r.points.back().n << '\n';
  return kExitOk;
}

int cmd_gradcheck(Cli& cli) {
  const fop::GradcheckReport report = fop::run_gradcheck();
  fop::write_gradcheck_csv(report, cli.at(cli.cfg.gradcheck_csv).string());
  cli.cfg.write_resolved(cli.at("gradcheck.resolved.cfg").string());
  for (const auto& e : report.entries)
    std::cout << fop::to_string(e.kind) << ": max rel err " << fop::format_double(e.max_rel_err)
              << (e.max_rel_err <= kGradcheckTol ? " ok" : " FAIL") << '\n';
  if (!report.passed(kGradcheckTol)) {
    std::cerr << "gradient check failed (tolerance " << kGradcheckTol << ")\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"face-voice association workbench (gated fusion + orthogonality constraints)"};
  app.require_subcommand(1);
  app.fallthrough();  // global options remain usable after the subcommand

  Cli cli;
  app.add_option("-w,--workdir", cli.workdir, "directory for inputs and outputs")
      ->capture_default_str();
  app.add_option("-c,--config", cli.config_path, "key=value config file");
  app.add_option_function<std::vector<std::string>>(
      "--set",
      [&cli](const std::vector<std::string>& kvs) {
        cli.overrides.insert(cli.overrides.end(), kvs.begin(), kvs.end());
      },
      "override a config key (key=value, repeatable)");

  // Frequently swept keys as dedicated flags; each maps onto a config key.
  // Overrides are only recorded here and applied in resolve(), after the
  // config file, so an explicit flag always wins.
  auto bind = [&cli](CLI::App* sub, const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag,
        [&cli, key](const std::string& v) { cli.overrides.push_back(std::string(key) + "=" + v); },
        help);
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic bimodal corpus");
  bind(synth, "--seed", "seed", "corpus seed");
  bind(synth, "--n-identities", "n_identities", "identity count");
  bind(synth, "--samples", "samples_per_identity", "samples per identity per modality");
  bind(synth, "--noise-std", "noise_std", "noise std for both modalities");
  bind(synth, "--noise-std-face", "noise_std_face", "face noise std");
  bind(synth, "--noise-std-voice", "noise_std_voice", "voice noise std");

  CLI::App* train = app.add_subcommand("train", "train the fusion head on a corpus");
  bind(train, "--seed", "seed", "training seed");
  bind(train, "--loss", "loss", "ce|oc|joint|center|git|contrastive|triplet");
  bind(train, "--alpha", "alpha", "orthogonality weight in the joint loss");
  bind(train, "--fusion", "fusion", "gated|linear");
  bind(train, "--epochs", "epochs", "epoch count");
  bind(train, "--lr", "lr", "initial learning rate");
  bind(train, "--embed-dim", "embed_dim", "shared embedding dimensionality");
  bind(train, "--batch-size", "batch_size", "mini-batch size");

  CLI::App* verify = app.add_subcommand("eval-verify", "cross-modal verification metrics");
  bind(verify, "--seed", "seed", "trial sampling seed");
  bind(verify, "--stratify", "stratify", "comma list of none,G,N,A,GNA");
  bind(verify, "--split", "eval_split", "train|val|test_seen|test_unseen");
  bind(verify, "--n-neg-per-pos", "n_neg_per_pos", "negatives sampled per positive");

  CLI::App* match = app.add_subcommand("eval-match", "1:n cross-modal matching accuracy");
  bind(match, "--seed", "seed", "trial sampling seed");
  bind(match, "--nc", "nc", "comma list of gallery sizes");
  bind(match, "--trials", "match_trials", "trial count");
  bind(match, "--split", "eval_split", "train|val|test_seen|test_unseen");
  bind(match, "--direction", "match_direction", "voice_probe|face_probe");

  CLI::App* analyze = app.add_subcommand("analyze", "fused-embedding similarity analytics");
  bind(analyze, "--seed", "seed", "pair sampling seed");
  bind(analyze, "--split", "eval_split", "train|val|test_seen|test_unseen");
  bind(analyze, "--pair-cap", "analytics_pair_cap", "pair enumeration cap");

  CLI::App* bench = app.add_subcommand("bench-loss", "loss runtime complexity benchmark");
  bind(bench, "--seed", "seed", "benchmark data seed");
  bind(bench, "--reps", "bench_reps", "samples per point");

  CLI::App* gradcheck = app.add_subcommand("gradcheck",
                                           "finite-difference check of every loss gradient");
  (void)gradcheck;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const fop::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    cli.resolve();
    if (synth->parsed()) return cmd_synth(cli);
    if (train->parsed()) return cmd_train(cli);
    if (verify->parsed()) return cmd_eval_verify(cli);
    if (match->parsed()) return cmd_eval_match(cli);
    if (analyze->parsed()) return cmd_analyze(cli);
    if (bench->parsed()) return cmd_bench(cli);
    return cmd_gradcheck(cli);
  } catch (const fop::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fop::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fop::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
