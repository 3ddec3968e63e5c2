// Command-line front end: dataset generation, model zoo training,
// perturbation training, single attacks, and the benchmark harness.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mapattack/attack.hpp"
#include "mapattack/bench.hpp"
#include "mapattack/dataset.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/map_trainer.hpp"
#include "mapattack/serialize.hpp"

namespace fs = std::filesystem;
using namespace mapattack;

namespace {

constexpr int kZooSize = 5;

std::string data_train_path(const std::string& prefix) {
  return prefix + "_train.mapdata";
}
std::string data_test_path(const std::string& prefix) {
  return prefix + "_test.mapdata";
}
std::string model_path(const std::string& dir, int id) {
  return (fs::path(dir) / ("model_" + std::to_string(id) + ".nn")).string();
}

Dataset load_dataset(const std::string& prefix) {
  std::size_t classes_train = 0, classes_test = 0;
  Dataset ds;
  ds.train = load_samples(data_train_path(prefix), &classes_train);
  ds.test = load_samples(data_test_path(prefix), &classes_test);
  if (classes_train != classes_test ||
      ds.train.inputs.extent(1) != ds.test.inputs.extent(1)) {
    throw ConfigError("dataset: train and test files disagree");
  }
  ds.class_count = classes_train;
  ds.input_dim = ds.train.inputs.extent(1);
  return ds;
}

std::vector<Model> load_zoo(const std::string& dir) {
  std::vector<Model> zoo;
  for (int id = 0;; ++id) {
    const std::string path = model_path(dir, id);
    if (!fs::exists(path)) break;
    Model m = load_model(path);
    m.tag = "model_" + std::to_string(id);
    zoo.push_back(std::move(m));
  }
  if (zoo.empty()) {
    throw ConfigError("no model files under '" + dir + "'");
  }
  return zoo;
}

// Benchmarks can run from scratch: anything missing on disk is built from
// the seeded defaults.
Dataset ensure_dataset(const std::string& prefix, std::uint64_t seed) {
  if (!prefix.empty() && fs::exists(data_train_path(prefix))) {
    return load_dataset(prefix);
  }
  std::cout << "# dataset files not found, generating from defaults\n";
  DatasetSpec spec;
  spec.seed = seed;
  return gen_dataset(spec);
}

std::vector<Model> ensure_zoo(const std::string& dir, const Dataset& data,
                              std::uint64_t seed) {
  if (!dir.empty() && fs::exists(model_path(dir, 0))) {
    return load_zoo(dir);
  }
  std::cout << "# model files not found, training the default zoo\n";
  std::vector<Model> zoo;
  for (TrainOutcome& out : train_default_zoo(data, seed)) {
    std::cout << "# trained " << out.model.tag
              << " test_accuracy=" << out.test_accuracy << "\n";
    zoo.push_back(std::move(out.model));
  }
  return zoo;
}

void print_report_table(const BenchReport& report) {
  std::cout << report_to_string(report, ReportFormat::csv);
}

ReportFormat format_for(const std::string& path, const std::string& fmt_flag) {
  if (fmt_flag == "csv") return ReportFormat::csv;
  if (fmt_flag == "json") return ReportFormat::json;
  if (!fmt_flag.empty()) throw ConfigError("unknown format '" + fmt_flag + "'");
  return fs::path(path).extension() == ".json" ? ReportFormat::json
                                               : ReportFormat::csv;
}

struct BenchCliArgs {
  std::string config_path;
  std::string data_prefix = "data";
  std::string models_dir = "models";
  std::string out = "report.csv";
  std::string format;
  std::string cache_dir;
  bool rotate = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> budget;
  std::optional<int> target;
  std::optional<int> samples;
  std::optional<int> victim;
  std::vector<int> surrogates;
  std::vector<int> train_classes;
  std::vector<int> attacked_classes;
  std::string methods;
};

void add_bench_flags(CLI::App* cmd, BenchCliArgs& a) {
  cmd->add_option("--config", a.config_path, "flat key = value config file");
  cmd->add_option("--data", a.data_prefix, "dataset file prefix");
  cmd->add_option("--models", a.models_dir, "model zoo directory");
  cmd->add_option("--out", a.out, "report output path");
  cmd->add_option("--format", a.format, "report format: csv or json");
  cmd->add_option("--cache-dir", a.cache_dir, "perturbation cache directory");
  cmd->add_flag("--rotate", a.rotate,
                "rotate every model through the victim role");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--budget", a.budget, "query budget per attack");
  cmd->add_option("--target", a.target, "target class");
  cmd->add_option("--samples", a.samples, "max attacked samples");
  cmd->add_option("--victim", a.victim, "victim model id");
  cmd->add_option("--surrogates", a.surrogates,
                  "surrogate model ids")->delimiter(',');
  cmd->add_option("--train-classes", a.train_classes,
                  "classes the perturbation trains on")->delimiter(',');
  cmd->add_option("--attacked-classes", a.attacked_classes,
                  "classes the attacked set draws from")->delimiter(',');
  cmd->add_option("--methods", a.methods, "comma list: map,random,rgf");
}

BenchConfig resolve_bench_config(const BenchCliArgs& a) {
  BenchConfig cfg;
  if (!a.config_path.empty()) cfg = load_bench_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (a.budget) cfg.attack.budget = *a.budget;
  if (a.target) cfg.target = *a.target;
  if (a.samples) cfg.max_samples = *a.samples;
  if (a.victim) cfg.victim_id = *a.victim;
  if (!a.surrogates.empty()) cfg.surrogate_ids = a.surrogates;
  if (!a.train_classes.empty()) cfg.map_train_classes = a.train_classes;
  if (!a.attacked_classes.empty()) cfg.attacked_classes = a.attacked_classes;
  if (!a.methods.empty()) {
    cfg.methods.clear();
    std::string tok;
    std::istringstream iss(a.methods);
    while (std::getline(iss, tok, ',')) {
      if (!tok.empty()) cfg.methods.push_back(parse_method(tok));
    }
  }
  if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
  cfg.output_path = a.out;
  return cfg;
}

int run_bench(const BenchCliArgs& args, bool universal) {
  BenchConfig cfg = resolve_bench_config(args);
  std::cout << "# resolved config\n" << cfg.describe();

  const Dataset data = ensure_dataset(args.data_prefix, cfg.seed);
  const std::vector<Model> zoo = ensure_zoo(args.models_dir, data, cfg.seed);

  std::vector<BenchReport> parts;
  auto run_one = [&](const BenchConfig& c) {
    return universal ? run_universality_benchmark(c, data, zoo)
                     : run_benchmark(c, data, zoo);
  };

  if (args.rotate) {
    for (int vid = 0; vid < static_cast<int>(zoo.size()); ++vid) {
      BenchConfig c = cfg;
      c.victim_id = vid;
      c.surrogate_ids.clear();
      for (int sid = 0; sid < static_cast<int>(zoo.size()); ++sid) {
        if (sid != vid) c.surrogate_ids.push_back(sid);
      }
      parts.push_back(run_one(c));
    }
  } else {
    parts.push_back(run_one(cfg));
  }

  const BenchReport report = merge_reports(parts);
  const ReportFormat fmt = format_for(cfg.output_path, args.format);
  write_report(report, fs::path(cfg.output_path), fmt);
  print_report_table(report);
  std::cout << "# report written to " << cfg.output_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Trains transferable targeted perturbations on surrogate ensembles and "
      "benchmarks query-limited black-box attacks with them"};
  app.require_subcommand(0, 1);

  // gen-data
  DatasetSpec dspec;
  std::string data_out = "data";
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--out", data_out, "output file prefix");
  gen->add_option("--seed", dspec.seed, "dataset seed");
  gen->add_option("--classes", dspec.class_count, "number of classes");
  gen->add_option("--input-dim", dspec.input_dim, "input width");
  gen->add_option("--per-class-train", dspec.per_class_train,
                  "train samples per class");
  gen->add_option("--per-class-test", dspec.per_class_test,
                  "test samples per class");
  gen->add_option("--spread", dspec.cluster_spread, "cluster spread");

  // train-models
  std::string tm_data = "data", tm_out = "models";
  TrainHyper tm_hyper;
  std::uint64_t tm_seed = 42;
  auto* tmodels =
      app.add_subcommand("train-models", "train the five-model zoo");
  tmodels->add_option("--data", tm_data, "dataset file prefix");
  tmodels->add_option("--out", tm_out, "output directory");
  tmodels->add_option("--seed", tm_seed, "init seed base");
  tmodels->add_option("--epochs", tm_hyper.epochs, "training epochs");
  tmodels->add_option("--lr", tm_hyper.lr, "learning rate");
  tmodels->add_option("--batch", tm_hyper.batch_size, "minibatch size");
  tmodels->add_option("--floor", tm_hyper.accuracy_floor,
                      "test accuracy floor");

  // train-map
  std::string mp_data = "data", mp_models = "models", mp_out = "map.mapvec";
  MapTrainConfig mp_cfg;
  std::vector<int> mp_surrogates = {0, 1, 2, 3};
  int mp_target = 6;
  auto* tmap = app.add_subcommand(
      "train-map", "train a targeted perturbation on a surrogate ensemble");
  tmap->add_option("--data", mp_data, "dataset file prefix");
  tmap->add_option("--models", mp_models, "model zoo directory");
  tmap->add_option("--out", mp_out, "output perturbation file");
  tmap->add_option("--surrogates", mp_surrogates, "surrogate ids")
      ->delimiter(',');
  tmap->add_option("--target", mp_target, "target class");
  tmap->add_option("--alpha", mp_cfg.alpha, "adaptation step size");
  tmap->add_option("--beta", mp_cfg.beta, "outer step size");
  tmap->add_option("--epochs", mp_cfg.epochs, "epochs");
  tmap->add_option("--inner-batch", mp_cfg.inner_batch, "adaptation batch");
  tmap->add_option("--meta-batch", mp_cfg.meta_batch, "outer batch");
  tmap->add_option("--inner-steps", mp_cfg.inner_steps,
                   "adaptation steps per minibatch");
  tmap->add_option("--epsilon", mp_cfg.epsilon_inf, "L-infinity budget");
  tmap->add_option("--seed", mp_cfg.seed, "training seed");
  tmap->add_option("--train-classes", mp_cfg.train_classes,
                   "restrict training to these classes")
      ->delimiter(',');

  // attack
  std::string at_data = "data", at_models = "models", at_map;
  std::string at_method = "map";
  int at_victim = 4, at_index = 0;
  AttackConfig at_cfg;
  auto* atk = app.add_subcommand("attack", "run one attack on a test sample");
  atk->add_option("--data", at_data, "dataset file prefix");
  atk->add_option("--models", at_models, "model zoo directory");
  atk->add_option("--map", at_map, "perturbation file (for method map)");
  atk->add_option("--method", at_method, "map, random, or rgf");
  atk->add_option("--victim", at_victim, "victim model id");
  atk->add_option("--index", at_index, "test split row to attack");
  atk->add_option("--target", at_cfg.target, "target class");
  atk->add_option("--budget", at_cfg.budget, "query budget");
  atk->add_option("--seed", at_cfg.seed, "attack seed");
  atk->add_option("--sigma", at_cfg.sigma, "smoothing radius");
  atk->add_option("--q", at_cfg.q, "directions per estimate");
  atk->add_option("--gamma", at_cfg.gamma, "step size");
  atk->add_option("--eta", at_cfg.eta, "momentum coefficient");
  atk->add_option("--epsilon-l2", at_cfg.epsilon_l2, "L2 distortion radius");
  atk->add_option("--max-iters", at_cfg.max_iters, "iteration cap");

  // bench / bench-universal
  BenchCliArgs bench_args;
  auto* bench = app.add_subcommand("bench", "run the attack benchmark");
  add_bench_flags(bench, bench_args);

  BenchCliArgs uni_args;
  uni_args.target = 9;
  uni_args.train_classes = {0, 1, 2, 3, 4, 5};
  uni_args.attacked_classes = {6, 7, 8};
  auto* uni = app.add_subcommand(
      "bench-universal",
      "benchmark with disjoint training and attacked class sets");
  add_bench_flags(uni, uni_args);

  if (argc <= 1) {
    std::cerr << app.help() << std::flush;
    return 2;
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::cout << "# resolved config\nseed = " << dspec.seed
                << "\nclass_count = " << dspec.class_count
                << "\ninput_dim = " << dspec.input_dim
                << "\nper_class_train = " << dspec.per_class_train
                << "\nper_class_test = " << dspec.per_class_test
                << "\ncluster_spread = " << dspec.cluster_spread
                << "\nout = " << data_out << "\n";
      const Dataset ds = gen_dataset(dspec);
      save_samples(ds.train, ds.class_count, data_train_path(data_out));
      save_samples(ds.test, ds.class_count, data_test_path(data_out));
      std::cout << "wrote " << data_train_path(data_out) << " ("
                << ds.train.size() << " samples) and "
                << data_test_path(data_out) << " (" << ds.test.size()
                << " samples)\n";
      return 0;
    }

    if (tmodels->parsed()) {
      std::cout << "# resolved config\ndata = " << tm_data
                << "\nout = " << tm_out << "\nseed = " << tm_seed
                << "\nepochs = " << tm_hyper.epochs << "\nlr = " << tm_hyper.lr
                << "\nbatch = " << tm_hyper.batch_size
                << "\nfloor = " << tm_hyper.accuracy_floor << "\n";
      const Dataset data = load_dataset(tm_data);
      fs::create_directories(tm_out);
      auto outcomes = train_default_zoo(data, tm_seed, tm_hyper);
      for (int id = 0; id < static_cast<int>(outcomes.size()); ++id) {
        save_model(outcomes[id].model, model_path(tm_out, id));
        std::cout << outcomes[id].model.tag
                  << " test_accuracy=" << outcomes[id].test_accuracy
                  << (outcomes[id].under_trained ? " UNDER-TRAINED" : "")
                  << "\n";
      }
      return 0;
    }

    if (tmap->parsed()) {
      std::cout << "# resolved config\ndata = " << mp_data
                << "\nmodels = " << mp_models << "\nout = " << mp_out
                << "\ntarget = " << mp_target << "\nalpha = " << mp_cfg.alpha
                << "\nbeta = " << mp_cfg.beta << "\nepochs = " << mp_cfg.epochs
                << "\ninner_batch = " << mp_cfg.inner_batch
                << "\nmeta_batch = " << mp_cfg.meta_batch
                << "\ninner_steps = " << mp_cfg.inner_steps
                << "\nepsilon_inf = " << mp_cfg.epsilon_inf
                << "\nseed = " << mp_cfg.seed << "\n";
      const Dataset data = load_dataset(mp_data);
      const std::vector<Model> zoo = load_zoo(mp_models);
      SurrogateEnsemble ens;
      for (int sid : mp_surrogates) {
        if (sid < 0 || sid >= static_cast<int>(zoo.size())) {
          throw ConfigError("surrogate id out of range");
        }
        ens.models.push_back(zoo[sid]);
      }
      const Perturbation p = train_map(mp_cfg, ens, data, mp_target);
      save_map(p, mp_out);
      std::cout << "wrote " << mp_out << " (linf=" << linf_norm(p.v)
                << ", l2=" << l2_norm(p.v) << ")\n";
      return 0;
    }

    if (atk->parsed()) {
      std::cout << "# resolved config\nmethod = " << at_method
                << "\nvictim = " << at_victim << "\nindex = " << at_index
                << "\ntarget = " << at_cfg.target
                << "\nbudget = " << at_cfg.budget << "\nseed = " << at_cfg.seed
                << "\n";
      const Dataset data = load_dataset(at_data);
      const std::vector<Model> zoo = load_zoo(at_models);
      if (at_victim < 0 || at_victim >= static_cast<int>(zoo.size())) {
        throw ConfigError("victim id out of range");
      }
      if (at_index < 0 ||
          static_cast<std::size_t>(at_index) >= data.test.size()) {
        throw ConfigError("test index out of range");
      }
      const std::size_t dim = data.input_dim;
      Tensor x(std::vector<std::size_t>{dim},
               std::vector<double>(
                   data.test.inputs.data.begin() + at_index * dim,
                   data.test.inputs.data.begin() + (at_index + 1) * dim));
      ModelOracle oracle(zoo[at_victim], at_cfg.budget);

      AttackResult res;
      if (at_method == "map") {
        if (at_map.empty()) throw ConfigError("--map file required");
        res = attack(oracle, x, load_map(at_map), at_cfg);
      } else if (at_method == "random") {
        if (at_map.empty()) throw ConfigError("--map file required");
        const Perturbation p = load_map(at_map);
        res = attack_baseline_random(oracle, x, at_cfg, linf_norm(p.v));
      } else if (at_method == "rgf") {
        AttackConfig c = at_cfg;
        c.eta = 0.0;
        res = attack_baseline_rgf(oracle, x, c);
      } else {
        throw ConfigError("unknown method '" + at_method + "'");
      }
      std::cout << "success=" << (res.success ? "true" : "false")
                << " queries=" << res.queries_used
                << " iterations=" << res.iterations
                << " l2_distortion=" << res.l2_distortion << "\n";
      return res.success ? 0 : 3;
    }

    if (bench->parsed()) return run_bench(bench_args, false);
    if (uni->parsed()) return run_bench(uni_args, true);

    std::cerr << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
