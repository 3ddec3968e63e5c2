#include "mapattack/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/parallel.hpp"
#include "mapattack/serialize.hpp"

namespace mapattack {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// Rounds through the fixed-decimal text form so CSV, JSON and any
// re-serialization agree bit for bit.
double round_fixed(double v, int decimals) {
  const std::string s = fixed(v, decimals);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_methods(const std::vector<Method>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += method_name(v[i]);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& value) {
  std::vector<int> out;
  std::string token;
  std::istringstream iss(value);
  while (std::getline(iss, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stoi(token));
  }
  return out;
}

const Model& zoo_model(const std::vector<Model>& zoo, int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= zoo.size()) {
    throw ConfigError("benchmark: model id " + std::to_string(id) +
                      " outside the zoo of " + std::to_string(zoo.size()));
  }
  return zoo[static_cast<std::size_t>(id)];
}

std::string victim_name(const Model& m, int id) {
  return m.tag.empty() ? "model_" + std::to_string(id) : m.tag;
}

void validate_bench(const BenchConfig& cfg, const Dataset& data,
                    const std::vector<Model>& zoo) {
  for (int sid : cfg.surrogate_ids) {
    if (sid == cfg.victim_id) {
      throw ConfigError("benchmark: victim model " +
                        std::to_string(cfg.victim_id) +
                        " listed among the surrogates");
    }
    zoo_model(zoo, sid);
  }
  if (cfg.surrogate_ids.empty()) {
    throw ConfigError("benchmark: surrogate set is empty");
  }
  zoo_model(zoo, cfg.victim_id);
  if (cfg.methods.empty()) throw ConfigError("benchmark: no methods listed");
  if (cfg.target < 0 ||
      static_cast<std::size_t>(cfg.target) >= data.class_count) {
    throw ConfigError("benchmark: target class out of range");
  }
  if (cfg.max_samples < 1) {
    throw ConfigError("benchmark: max_samples must be >= 1");
  }
}

// Attacked samples: test rows whose label is admissible and that the
// victim does not already classify as the target (those attacks would be
// vacuous and would let a do-nothing method score successes).
std::vector<std::size_t> pick_attacked(const BenchConfig& cfg,
                                       const Dataset& data,
                                       const Model& victim) {
  std::vector<std::size_t> picked;
  const std::size_t dim = data.input_dim;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (picked.size() >= static_cast<std::size_t>(cfg.max_samples)) break;
    const int y = data.test.labels[i];
    if (y == cfg.target) continue;
    if (!cfg.attacked_classes.empty() &&
        std::find(cfg.attacked_classes.begin(), cfg.attacked_classes.end(),
                  y) == cfg.attacked_classes.end()) {
      continue;
    }
    Tensor x(std::vector<std::size_t>{dim},
             std::vector<double>(data.test.inputs.data.begin() + i * dim,
                                 data.test.inputs.data.begin() + (i + 1) * dim));
    if (predict(victim, x) == cfg.target) continue;
    picked.push_back(i);
  }
  return picked;
}

Perturbation obtain_map(const BenchConfig& cfg, const Dataset& data,
                        const std::vector<Model>& zoo) {
  MapTrainConfig mt = cfg.map_train;
  mt.train_classes = cfg.map_train_classes;
  mt.seed = splitmix64(cfg.seed ^ 0x6d61705f747261ULL);

  std::string cache_key;
  if (!cfg.cache_dir.empty()) {
    std::ostringstream desc;
    desc << "v1|surr=" << join_ints(cfg.surrogate_ids) << "|t=" << cfg.target
         << "|alpha=" << format_double(mt.alpha)
         << "|beta=" << format_double(mt.beta) << "|epochs=" << mt.epochs
         << "|ib=" << mt.inner_batch << "|mb=" << mt.meta_batch
         << "|is=" << mt.inner_steps
         << "|eps=" << format_double(mt.epsilon_inf) << "|seed=" << mt.seed
         << "|classes=" << join_ints(mt.train_classes)
         << "|data=" << data.train.size() << "x" << data.input_dim << "x"
         << data.class_count;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(desc.str())));
    cache_key = hex;
    const auto path =
        std::filesystem::path(cfg.cache_dir) / ("map_" + cache_key + ".mapvec");
    if (std::filesystem::exists(path)) {
      Perturbation p = load_map(path);
      if (p.target == cfg.target && p.v.size() == data.input_dim) return p;
    }
  }

  SurrogateEnsemble ens;
  for (int sid : cfg.surrogate_ids) ens.models.push_back(zoo_model(zoo, sid));
  Perturbation p = train_map(mt, ens, data, cfg.target);

  if (!cache_key.empty()) {
    std::filesystem::create_directories(cfg.cache_dir);
    save_map(p, std::filesystem::path(cfg.cache_dir) /
                    ("map_" + cache_key + ".mapvec"));
  }
  return p;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "map") return Method::map;
  if (name == "random") return Method::random;
  if (name == "rgf") return Method::rgf;
  throw ConfigError("unknown method '" + name + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::map: return "map";
    case Method::random: return "random";
    case Method::rgf: return "rgf";
  }
  throw ConfigError("bad method value");
}

std::string BenchConfig::describe() const {
  std::ostringstream out;
  out << "victim_id = " << victim_id << '\n'
      << "surrogate_ids = " << join_ints(surrogate_ids) << '\n'
      << "methods = " << join_methods(methods) << '\n'
      << "target = " << target << '\n'
      << "max_samples = " << max_samples << '\n'
      << "attacked_classes = " << join_ints(attacked_classes) << '\n'
      << "map_train_classes = " << join_ints(map_train_classes) << '\n'
      << "sigma = " << format_double(attack.sigma) << '\n'
      << "q = " << attack.q << '\n'
      << "gamma = " << format_double(attack.gamma) << '\n'
      << "eta = " << format_double(attack.eta) << '\n'
      << "max_iters = " << attack.max_iters << '\n'
      << "epsilon_l2 = " << format_double(attack.epsilon_l2) << '\n'
      << "budget = " << attack.budget << '\n'
      << "alpha = " << format_double(map_train.alpha) << '\n'
      << "beta = " << format_double(map_train.beta) << '\n'
      << "epochs = " << map_train.epochs << '\n'
      << "inner_batch = " << map_train.inner_batch << '\n'
      << "meta_batch = " << map_train.meta_batch << '\n'
      << "inner_steps = " << map_train.inner_steps << '\n'
      << "epsilon_inf = " << format_double(map_train.epsilon_inf) << '\n'
      << "seed = " << seed << '\n'
      << "output_path = " << output_path << '\n'
      << "cache_dir = " << cache_dir << '\n';
  return out.str();
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open config file");
  BenchConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw ParseError(path.string(), line_no, "expected key = value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "victim_id") cfg.victim_id = std::stoi(value);
      else if (key == "surrogate_ids") cfg.surrogate_ids = parse_int_list(value);
      else if (key == "methods") {
        cfg.methods.clear();
        std::istringstream iss(value);
        std::string tok;
        while (std::getline(iss, tok, ',')) {
          if (!tok.empty()) cfg.methods.push_back(parse_method(tok));
        }
      } else if (key == "target") cfg.target = std::stoi(value);
      else if (key == "max_samples") cfg.max_samples = std::stoi(value);
      else if (key == "attacked_classes") cfg.attacked_classes = parse_int_list(value);
      else if (key == "map_train_classes") cfg.map_train_classes = parse_int_list(value);
      else if (key == "sigma") cfg.attack.sigma = std::stod(value);
      else if (key == "q") cfg.attack.q = std::stoi(value);
      else if (key == "gamma") cfg.attack.gamma = std::stod(value);
      else if (key == "eta") cfg.attack.eta = std::stod(value);
      else if (key == "max_iters") cfg.attack.max_iters = std::stoi(value);
      else if (key == "epsilon_l2") cfg.attack.epsilon_l2 = std::stod(value);
      else if (key == "budget") cfg.attack.budget = std::stoull(value);
      else if (key == "alpha") cfg.map_train.alpha = std::stod(value);
      else if (key == "beta") cfg.map_train.beta = std::stod(value);
      else if (key == "epochs") cfg.map_train.epochs = std::stoi(value);
      else if (key == "inner_batch") cfg.map_train.inner_batch = std::stoi(value);
      else if (key == "meta_batch") cfg.map_train.meta_batch = std::stoi(value);
      else if (key == "inner_steps") cfg.map_train.inner_steps = std::stoi(value);
      else if (key == "epsilon_inf") cfg.map_train.epsilon_inf = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "output_path") cfg.output_path = value;
      else if (key == "cache_dir") cfg.cache_dir = value;
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no,
                       "bad value for '" + key + "': " + e.what());
    }
  }
  return cfg;
}

BenchReport run_benchmark(const BenchConfig& cfg, const Dataset& data,
                          const std::vector<Model>& zoo) {
  validate_bench(cfg, data, zoo);
  const Model& victim = zoo_model(zoo, cfg.victim_id);
  const std::string vname = victim_name(victim, cfg.victim_id);

  const std::vector<std::size_t> attacked = pick_attacked(cfg, data, victim);

  const bool needs_map =
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::map) !=
          cfg.methods.end() ||
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::random) !=
          cfg.methods.end();
  std::optional<Perturbation> map_vec;
  if (needs_map) map_vec = obtain_map(cfg, data, zoo);

  // A zero benchmark budget degenerates to the initial check alone.
  const std::uint64_t oracle_budget = std::max<std::uint64_t>(1, cfg.attack.budget);

  BenchReport report;
  const std::size_t dim = data.input_dim;
  for (Method method : cfg.methods) {
    AttackConfig atk = cfg.attack;
    atk.target = cfg.target;
    atk.budget = oracle_budget;
    if (method == Method::rgf) atk.eta = 0.0;  // plain estimator baseline

    std::vector<SampleRow> rows(attacked.size());
    parallel_for(attacked.size(), worker_count(), [&](std::size_t i) {
      const std::size_t row = attacked[i];
      Tensor x(std::vector<std::size_t>{dim},
               std::vector<double>(
                   data.test.inputs.data.begin() + row * dim,
                   data.test.inputs.data.begin() + (row + 1) * dim));
      ModelOracle oracle(victim, oracle_budget);
      AttackConfig sample_cfg = atk;
      sample_cfg.seed = cfg.seed ^ static_cast<std::uint64_t>(i);

      AttackResult res;
      switch (method) {
        case Method::map:
          res = attack(oracle, x, map_vec, sample_cfg);
          break;
        case Method::random:
          res = attack_baseline_random(oracle, x, sample_cfg,
                                       linf_norm(map_vec->v));
          break;
        case Method::rgf:
          res = attack_baseline_rgf(oracle, x, sample_cfg);
          break;
      }
      rows[i] = SampleRow{static_cast<int>(i), static_cast<int>(row),
                          data.test.labels[row], res.success,
                          res.queries_used, res.l2_distortion, res.iterations};
    });

    AggregateRow agg;
    agg.victim = vname;
    agg.method = method_name(method);
    agg.n_samples = static_cast<int>(rows.size());
    std::size_t successes = 0;
    double query_sum = 0.0;
    double l2_sum = 0.0;
    for (const SampleRow& r : rows) {
      query_sum += static_cast<double>(r.queries);
      if (r.success) {
        ++successes;
        l2_sum += r.l2;
      }
    }
    agg.success_rate =
        rows.empty() ? 0.0
                     : static_cast<double>(successes) /
                           static_cast<double>(rows.size());
    agg.avg_queries = rows.empty() ? 0.0 : query_sum / static_cast<double>(rows.size());
    agg.avg_l2 = successes == 0 ? 0.0 : l2_sum / static_cast<double>(successes);
    agg.samples = std::move(rows);
    report.rows.push_back(std::move(agg));
  }
  return report;
}

BenchReport run_universality_benchmark(const BenchConfig& cfg,
                                       const Dataset& data,
                                       const std::vector<Model>& zoo) {
  if (cfg.map_train_classes.empty() || cfg.attacked_classes.empty()) {
    throw ConfigError(
        "universality benchmark: both map_train_classes and attacked_classes "
        "must be set");
  }
  for (int c : cfg.map_train_classes) {
    if (std::find(cfg.attacked_classes.begin(), cfg.attacked_classes.end(),
                  c) != cfg.attacked_classes.end()) {
      throw ConfigError("universality benchmark: class " + std::to_string(c) +
                        " appears in both the training and attacked sets");
    }
  }
  if (std::find(cfg.map_train_classes.begin(), cfg.map_train_classes.end(),
                cfg.target) != cfg.map_train_classes.end()) {
    throw ConfigError(
        "universality benchmark: target class inside the training classes");
  }
  return run_benchmark(cfg, data, zoo);
}

BenchReport merge_reports(const std::vector<BenchReport>& parts) {
  BenchReport merged;
  for (const BenchReport& p : parts) {
    merged.rows.insert(merged.rows.end(), p.rows.begin(), p.rows.end());
  }
  return merged;
}

void write_report(const BenchReport& report, std::ostream& out,
                  ReportFormat format) {
  if (format == ReportFormat::csv) {
    out << "victim,method,success_rate,avg_queries,avg_l2,n_samples\n";
    for (const AggregateRow& r : report.rows) {
      out << r.victim << ',' << r.method << ',' << fixed(r.success_rate, 4)
          << ',' << fixed(r.avg_queries, 2) << ',' << fixed(r.avg_l2, 4) << ','
          << r.n_samples << '\n';
    }
    return;
  }

  ordered_json doc;
  doc["rows"] = ordered_json::array();
  for (const AggregateRow& r : report.rows) {
    ordered_json jr;
    jr["victim"] = r.victim;
    jr["method"] = r.method;
    jr["success_rate"] = round_fixed(r.success_rate, 4);
    jr["avg_queries"] = round_fixed(r.avg_queries, 2);
    jr["avg_l2"] = round_fixed(r.avg_l2, 4);
    jr["n_samples"] = r.n_samples;
    jr["samples"] = ordered_json::array();
    for (const SampleRow& s : r.samples) {
      ordered_json js;
      js["index"] = s.index;
      js["test_row"] = s.test_row;
      js["true_label"] = s.true_label;
      js["success"] = s.success;
      js["queries"] = s.queries;
      js["l2"] = round_fixed(s.l2, 6);
      js["iterations"] = s.iterations;
      jr["samples"].push_back(std::move(js));
    }
    doc["rows"].push_back(std::move(jr));
  }
  out << doc.dump(2) << '\n';
}

void write_report(const BenchReport& report, const std::filesystem::path& path,
                  ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  write_report(report, out, format);
}

BenchReport parse_report_json(std::istream& in) {
  ordered_json doc = ordered_json::parse(in);
  BenchReport report;
  for (const auto& jr : doc.at("rows")) {
    AggregateRow r;
    r.victim = jr.at("victim").get<std::string>();
    r.method = jr.at("method").get<std::string>();
    r.success_rate = jr.at("success_rate").get<double>();
    r.avg_queries = jr.at("avg_queries").get<double>();
    r.avg_l2 = jr.at("avg_l2").get<double>();
    r.n_samples = jr.at("n_samples").get<int>();
    for (const auto& js : jr.at("samples")) {
      SampleRow s;
      s.index = js.at("index").get<int>();
      s.test_row = js.at("test_row").get<int>();
      s.true_label = js.at("true_label").get<int>();
      s.success = js.at("success").get<bool>();
      s.queries = js.at("queries").get<std::uint64_t>();
      s.l2 = js.at("l2").get<double>();
      s.iterations = js.at("iterations").get<int>();
      r.samples.push_back(s);
    }
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string report_to_string(const BenchReport& report, ReportFormat format) {
  std::ostringstream out;
  write_report(report, out, format);
  return out.str();
}

}  // namespace mapattack
