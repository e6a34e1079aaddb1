#include "fop/runconfig.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace fop {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
  T v{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': bad value '" + value + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "': non-finite value");
  }
  return v;
}

std::vector<std::string> parse_string_list(const std::string& key, const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("config key '" + key + "': empty list element");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::vector<T> parse_num_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  for (const auto& tok : parse_string_list(key, value)) out.push_back(parse_num<T>(key, tok));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

template <typename T>
std::string join_num(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(items[i]);
  }
  return out;
}

struct Field {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  // Null getter marks a write-only alias that never appears in resolved text.
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    auto add_u64 = [&t](const char* n, std::uint64_t RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num<std::uint64_t>(n, v); },
                   [m](const RunConfig& c) { return std::to_string(c.*m); }});
    };
    auto add_int = [&t](const char* n, int RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num<int>(n, v); },
                   [m](const RunConfig& c) { return std::to_string(c.*m); }});
    };
    auto add_long = [&t](const char* n, long RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num<long>(n, v); },
                   [m](const RunConfig& c) { return std::to_string(c.*m); }});
    };
    auto add_double = [&t](const char* n, double RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num<double>(n, v); },
                   [m](const RunConfig& c) { return format_double(c.*m); }});
    };
    auto add_string = [&t](const char* n, std::string RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) {
                     if (v.empty()) throw ConfigError(std::string("config key '") + n + "': empty value");
                     c.*m = v;
                   },
                   [m](const RunConfig& c) { return c.*m; }});
    };
    auto add_strlist = [&t](const char* n, std::vector<std::string> RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_string_list(n, v); },
                   [m](const RunConfig& c) { return join(c.*m); }});
    };
    auto add_intlist = [&t](const char* n, std::vector<int> RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num_list<int>(n, v); },
                   [m](const RunConfig& c) { return join_num(c.*m); }});
    };
    auto add_longlist = [&t](const char* n, std::vector<long> RunConfig::*m) {
      t.push_back({n, [n, m](RunConfig& c, const std::string& v) { c.*m = parse_num_list<long>(n, v); },
                   [m](const RunConfig& c) { return join_num(c.*m); }});
    };

    add_u64("seed", &RunConfig::seed);
    add_int("n_identities", &RunConfig::n_identities);
    add_int("samples_per_identity", &RunConfig::samples_per_identity);
    add_long("latent_dim", &RunConfig::latent_dim);
    add_long("face_dim", &RunConfig::face_dim);
    add_long("voice_dim", &RunConfig::voice_dim);
    // Convenience alias: sets both per-modality values, never emitted.
    t.push_back({"noise_std",
                 [](RunConfig& c, const std::string& v) {
                   const double s = parse_num<double>("noise_std", v);
                   c.noise_std_face = s;
                   c.noise_std_voice = s;
                 },
                 nullptr});
    add_double("noise_std_face", &RunConfig::noise_std_face);
    add_double("noise_std_voice", &RunConfig::noise_std_voice);
    add_double("signal_scale", &RunConfig::signal_scale);
    add_double("frac_train", &RunConfig::frac_train);
    add_double("frac_val", &RunConfig::frac_val);
    add_double("frac_test_seen", &RunConfig::frac_test_seen);
    add_double("frac_test_unseen", &RunConfig::frac_test_unseen);
    add_strlist("genders", &RunConfig::genders);
    add_strlist("nationalities", &RunConfig::nationalities);
    add_strlist("age_buckets", &RunConfig::age_buckets);

    add_long("embed_dim", &RunConfig::embed_dim);
    add_int("att_layers", &RunConfig::att_layers);
    add_double("att_init_gain", &RunConfig::att_init_gain);
    add_string("fusion", &RunConfig::fusion);
    add_string("loss", &RunConfig::loss);
    add_double("alpha", &RunConfig::alpha);
    add_string("oc_reduction", &RunConfig::oc_reduction);
    add_int("batch_size", &RunConfig::batch_size);
    add_int("epochs", &RunConfig::epochs);
    add_double("lr", &RunConfig::lr);
    add_double("lr_decay", &RunConfig::lr_decay);
    add_double("adam_beta1", &RunConfig::adam_beta1);
    add_double("adam_beta2", &RunConfig::adam_beta2);
    add_double("adam_eps", &RunConfig::adam_eps);
    add_double("contrastive_margin", &RunConfig::contrastive_margin);
    add_double("triplet_margin", &RunConfig::triplet_margin);
    add_double("lambda_c", &RunConfig::lambda_c);
    add_double("lambda_g", &RunConfig::lambda_g);

    add_string("eval_split", &RunConfig::eval_split);
    add_string("stratify", &RunConfig::stratify);
    add_int("n_neg_per_pos", &RunConfig::n_neg_per_pos);
    add_intlist("nc", &RunConfig::nc);
    add_long("match_trials", &RunConfig::match_trials);
    add_string("match_direction", &RunConfig::match_direction);
    add_long("analytics_pair_cap", &RunConfig::analytics_pair_cap);

    add_int("bench_batch", &RunConfig::bench_batch);
    add_long("bench_dim", &RunConfig::bench_dim);
    add_int("bench_classes", &RunConfig::bench_classes);
    add_int("bench_reps", &RunConfig::bench_reps);
    add_longlist("bench_n_linear", &RunConfig::bench_n_linear);
    add_longlist("bench_n_contrastive", &RunConfig::bench_n_contrastive);
    add_longlist("bench_n_triplet", &RunConfig::bench_n_triplet);

    add_string("face_bank", &RunConfig::face_bank);
    add_string("voice_bank", &RunConfig::voice_bank);
    add_string("labels_file", &RunConfig::labels_file);
    add_string("split_file", &RunConfig::split_file);
    add_string("checkpoint", &RunConfig::checkpoint);
    add_string("history_file", &RunConfig::history_file);
    add_string("verify_csv", &RunConfig::verify_csv);
    add_string("match_csv", &RunConfig::match_csv);
    add_string("analytics_csv", &RunConfig::analytics_csv);
    add_string("bench_csv", &RunConfig::bench_csv);
    add_string("gradcheck_csv", &RunConfig::gradcheck_csv);
    add_string("roc_prefix", &RunConfig::roc_prefix);
    add_string("scores_prefix", &RunConfig::scores_prefix);
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string RunConfig::resolved_text() const {
  std::string out = "# resolved configuration (defaults included)\n";
  for (const auto& f : fields()) {
    if (!f.get) continue;
    out += f.name;
    out += " = ";
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

void RunConfig::write_resolved(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << resolved_text();
  if (!out) throw DataError("write failed for '" + path + "'");
}

SynthConfig RunConfig::to_synth_config() const {
  SynthConfig s;
  s.n_identities = n_identities;
  s.samples_per_identity = samples_per_identity;
  s.latent_dim = latent_dim;
  s.face_dim = face_dim;
  s.voice_dim = voice_dim;
  s.noise_std_face = noise_std_face;
  s.noise_std_voice = noise_std_voice;
  s.signal_scale = signal_scale;
  s.frac_train = frac_train;
  s.frac_val = frac_val;
  s.frac_test_seen = frac_test_seen;
  s.frac_test_unseen = frac_test_unseen;
  s.genders = genders;
  s.nationalities = nationalities;
  s.age_buckets = age_buckets;
  s.seed = seed;
  return s;
}

TrainConfig RunConfig::to_train_config() const {
  TrainConfig t;
  t.embed_dim = embed_dim;
  t.att_layers = att_layers;
  t.att_init_gain = att_init_gain;
  t.fusion = parse_fusion(fusion);
  t.loss = parse_loss_kind(loss);
  t.alpha = alpha;
  t.oc_reduction = parse_oc_reduction(oc_reduction);
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.lr = lr;
  t.lr_decay = lr_decay;
  t.adam_beta1 = adam_beta1;
  t.adam_beta2 = adam_beta2;
  t.adam_eps = adam_eps;
  t.contrastive_margin = contrastive_margin;
  t.triplet_margin = triplet_margin;
  t.lambda_c = lambda_c;
  t.lambda_g = lambda_g;
  t.seed = seed;
  t.val_neg_per_pos = n_neg_per_pos;
  return t;
}

BenchConfig RunConfig::to_bench_config() const {
  BenchConfig b;
  b.n_linear = bench_n_linear;
  b.n_contrastive = bench_n_contrastive;
  b.n_triplet = bench_n_triplet;
  b.reps = bench_reps;
  b.batch_size = bench_batch;
  b.dim = bench_dim;
  b.n_classes = bench_classes;
  b.seed = seed;
  return b;
}

std::vector<Stratify> RunConfig::stratify_list() const {
  std::vector<Stratify> out;
  for (const auto& tok : parse_string_list("stratify", stratify)) {
    try {
      out.push_back(parse_stratify(tok));
    } catch (const DataError& e) {
      throw ConfigError(std::string("config key 'stratify': ") + e.what());
    }
  }
  return out;
}

Split RunConfig::eval_split_value() const {
  try {
    return parse_split(eval_split);
  } catch (const DataError& e) {
    throw ConfigError(std::string("config key 'eval_split': ") + e.what());
  }
}

MatchDirection RunConfig::match_direction_value() const {
  if (match_direction == "voice_probe") return MatchDirection::voice_probe;
  if (match_direction == "face_probe") return MatchDirection::face_probe;
  throw ConfigError("config key 'match_direction': expected voice_probe or face_probe");
}

}  // namespace fop
