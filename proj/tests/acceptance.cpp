// Acceptance suite: every check prints one PASS/FAIL line with its
// measured numbers. The process exits non-zero when any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mapattack/attack.hpp"
#include "mapattack/bench.hpp"
#include "mapattack/dataset.hpp"
#include "mapattack/map_trainer.hpp"

using namespace mapattack;
using namespace testutil;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared expensive fixtures: the default dataset and the five-model zoo,
// built once and reused by the pipeline checks.
const Dataset& default_data() {
  static const Dataset data = gen_dataset(DatasetSpec{});
  return data;
}

struct Zoo {
  std::vector<Model> models;
  std::vector<double> accuracies;
};

const Zoo& default_zoo() {
  static const Zoo zoo = [] {
    Zoo z;
    for (TrainOutcome& out : train_default_zoo(default_data(), 42)) {
      z.accuracies.push_back(out.test_accuracy);
      z.models.push_back(std::move(out.model));
    }
    return z;
  }();
  return zoo;
}

// ---------------------------------------------------------------- 1 ----
bool gradient_exactness(std::string& detail) {
  const auto start = Clock::now();
  Rng rng(20240001);
  const double h = 1e-5;
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const std::size_t dim = 2 + rng.uniform_index(15);       // <= 16
    const std::size_t classes = 2 + rng.uniform_index(15);   // <= 16
    const std::size_t hidden = 2 + rng.uniform_index(15);    // <= 16
    const Model m = random_model(rng, dim, {hidden}, classes, 0.7);
    const LabeledBatch batch =
        random_batch(rng, 1 + rng.uniform_index(4), dim, classes);
    if (!fd_safe(m, batch)) continue;  // kinks invalidate differences
    ++done;

    const int target = static_cast<int>(rng.uniform_index(classes));
    const Tensor gi = grad_input(m, batch, target);
    for (std::size_t i = 0; i < gi.data.size(); ++i) {
      worst = std::max(worst, rel_err(gi.data[i], fd_input(m, batch, target, i, h)));
    }
    const ParamGrads gp = grad_params(m, batch);
    for (std::size_t a = 0; a < gp.affine.size(); ++a) {
      for (std::size_t i = 0; i < gp.affine[a].w.size(); ++i) {
        worst = std::max(worst,
                         rel_err(gp.affine[a].w[i], fd_param(m, batch, a, true, i, h)));
      }
      for (std::size_t i = 0; i < gp.affine[a].b.size(); ++i) {
        worst = std::max(worst,
                         rel_err(gp.affine[a].b[i], fd_param(m, batch, a, false, i, h)));
      }
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream os;
  os << "100 models, max rel err " << worst << ", " << elapsed << " s";
  detail = os.str();
  return worst <= 1e-5 && elapsed < 10.0;
}

// ---------------------------------------------------------------- 2 ----
bool estimator_statistics(std::string& detail) {
  const auto start = Clock::now();

  // mean of the 2-d estimator on a linear loss approaches g/d
  const std::vector<double> grad{1.0, 0.0};
  FunctionOracle oracle(
      [&](const Tensor& p) { return grad[0] * p.data[0] + grad[1] * p.data[1]; },
      0, 2, UINT64_MAX);
  Rng rng(20240002);
  const Tensor x({2}, {0.5, 0.5});
  double m0 = 0.0, m1 = 0.0;
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    const Tensor g = rgf_estimate(oracle, x, 0, 0.1, 1, rng);
    m0 += g.data[0];
    m1 += g.data[1];
  }
  m0 /= reps;
  m1 /= reps;
  const bool mean_ok = std::abs(m0 - 0.5) <= 0.025 && std::abs(m1) <= 0.025;

  // cosine similarity against the white-box gradient on a smooth model
  Rng mk(20240003);
  const std::size_t dim = 16;
  const Model toy = random_model(mk, dim, {12}, 5, 0.6);
  const int target = 3;
  int good = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    Tensor point = Tensor::zeros({dim});
    for (double& v : point.data) v = mk.uniform01();

    LabeledBatch single;
    single.inputs = Tensor({1, dim}, point.data);
    single.labels = {target};
    const Tensor true_rows = grad_input(toy, single, target);
    Tensor g_true({dim}, std::vector<double>(true_rows.data));

    ModelOracle o(toy, 100);
    Rng trial_rng(9000 + static_cast<std::uint64_t>(t));
    const Tensor g_hat =
        rgf_estimate(o, point, target, 1e-3, static_cast<int>(dim), trial_rng);

    const double denom = l2_norm(g_hat) * l2_norm(g_true);
    const double cosine = denom == 0.0 ? 0.0 : dot(g_hat, g_true) / denom;
    if (cosine > 0.5) ++good;
  }
  const double frac = static_cast<double>(good) / trials;
  const double elapsed = seconds_since(start);
  std::ostringstream os;
  os << "mean (" << m0 << ", " << m1 << ") vs (0.5, 0), cosine>0.5 in "
     << 100.0 * frac << "% of trials, " << elapsed << " s";
  detail = os.str();
  return mean_ok && frac >= 0.95 && elapsed < 60.0;
}

// ---------------------------------------------------------------- 3 ----
bool projection_properties(std::string& detail) {
  Rng rng(20240004);
  int checked = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const std::size_t dim = 1 + rng.uniform_index(16);
    Tensor v = Tensor::zeros({dim});
    for (double& x : v.data) x = rng.uniform(-2.0, 2.0);
    const double eps = rng.uniform(0.0, 1.2);

    const Tensor once = project_linf(v, eps);
    if (linf_norm(once) > eps) { detail = "linf bound broken"; return false; }
    if (project_linf(once, eps) != once) { detail = "linf not idempotent"; return false; }
    if (linf_norm(v) <= eps && once != v) { detail = "linf moved an inside point"; return false; }
    ++checked;
  }
  for (int rep = 0; rep < 10000; ++rep) {
    const std::size_t dim = 1 + rng.uniform_index(16);
    Tensor orig = Tensor::zeros({dim});
    Tensor x = Tensor::zeros({dim});
    for (double& v : orig.data) v = rng.uniform01();
    for (std::size_t i = 0; i < dim; ++i) {
      x.data[i] = orig.data[i] + rng.uniform(-1.5, 1.5);
    }
    const double eps = rng.uniform(0.0, 1.0);
    const Tensor once = project_l2(x, orig, eps);
    if (l2_norm(sub(once, orig)) > eps) { detail = "l2 bound broken"; return false; }
    if (project_l2(once, orig, eps) != once) { detail = "l2 not idempotent"; return false; }
    const Tensor clipped = clip01(x);
    if (l2_norm(sub(clipped, orig)) <= eps && once != clipped) {
      detail = "l2 moved a feasible point";
      return false;
    }
    ++checked;
  }
  detail = std::to_string(checked) + " random vectors";
  return true;
}

// ---------------------------------------------------------------- 4 ----
bool closed_form_training(std::string& detail) {
  DatasetSpec spec;
  spec.seed = 3;
  spec.class_count = 3;
  spec.input_dim = 4;
  spec.per_class_train = 2;
  spec.per_class_test = 1;
  const Dataset ds = gen_dataset(spec);

  MapTrainConfig cfg;
  cfg.alpha = 0.3;
  cfg.beta = 0.2;
  cfg.epochs = 1;
  cfg.inner_batch = 6;  // the whole pool: one minibatch per epoch
  cfg.meta_batch = 6;
  cfg.epsilon_inf = 0.02;
  cfg.seed = 99;

  const Tensor c({4}, {0.5, -0.5, 0.0, 0.25});
  const QuadraticObjective obj(c);
  const Perturbation got = train_map(cfg, obj, ds, 1);

  Rng rng(cfg.seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double v0 = rng.uniform(-cfg.epsilon_inf / 10.0, cfg.epsilon_inf / 10.0);
    const double v_ad = v0 - cfg.alpha * (v0 - c.data[i]);
    const double v1 = v0 - cfg.beta * (v_ad - c.data[i]);
    const double expect = std::clamp(v1, -cfg.epsilon_inf, cfg.epsilon_inf);
    worst = std::max(worst, std::abs(got.v.data[i] - expect));
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  detail = os.str();
  return worst <= 1e-12;
}

// ---------------------------------------------------------------- 5 ----
bool map_effectiveness(std::string& detail) {
  const auto start = Clock::now();
  const Dataset& data = default_data();
  const Zoo& zoo = default_zoo();

  for (double acc : zoo.accuracies) {
    if (acc < 0.85) {
      detail = "a zoo model fell below 85% test accuracy";
      return false;
    }
  }

  std::ostringstream os;
  bool ok = true;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (int victim = 0; victim < static_cast<int>(zoo.models.size()); ++victim) {
      BenchConfig cfg;
      cfg.victim_id = victim;
      cfg.surrogate_ids.clear();
      for (int sid = 0; sid < static_cast<int>(zoo.models.size()); ++sid) {
        if (sid != victim) cfg.surrogate_ids.push_back(sid);
      }
      cfg.seed = seed;
      cfg.max_samples = 200;

      const BenchReport report = run_benchmark(cfg, data, zoo.models);
      double sr[3] = {0, 0, 0}, q[3] = {0, 0, 0};
      for (const auto& row : report.rows) {
        const int m = row.method == "map" ? 0 : (row.method == "random" ? 1 : 2);
        sr[m] = row.success_rate;
        q[m] = row.avg_queries;
      }
      const bool cell_ok =
          sr[0] >= sr[1] && sr[0] >= sr[2] && q[0] <= q[1] && q[0] <= q[2];
      os << "\n  victim=" << victim << " seed=" << seed << " map=" << sr[0]
         << "/" << q[0] << " random=" << sr[1] << "/" << q[1]
         << " rgf=" << sr[2] << "/" << q[2] << (cell_ok ? "" : "  <-- VIOLATED");
      ok = ok && cell_ok;
    }
  }
  const double elapsed = seconds_since(start);
  os << "\n  " << elapsed << " s";
  detail = os.str();
  return ok && elapsed < 600.0;
}

// ---------------------------------------------------------------- 6 ----
bool universality(std::string& detail) {
  const auto start = Clock::now();
  const Dataset& data = default_data();
  const Zoo& zoo = default_zoo();

  std::ostringstream os;
  bool ok = true;
  for (int victim = 0; victim < static_cast<int>(zoo.models.size()); ++victim) {
    BenchConfig cfg;
    cfg.victim_id = victim;
    cfg.surrogate_ids.clear();
    for (int sid = 0; sid < static_cast<int>(zoo.models.size()); ++sid) {
      if (sid != victim) cfg.surrogate_ids.push_back(sid);
    }
    cfg.seed = 11;
    cfg.target = 9;
    cfg.map_train_classes = {0, 1, 2, 3, 4, 5};
    cfg.attacked_classes = {6, 7, 8};
    cfg.max_samples = 150;
    cfg.methods = {Method::map, Method::rgf};

    const BenchReport report =
        run_universality_benchmark(cfg, data, zoo.models);
    double map_sr = 0.0, rgf_sr = 0.0;
    for (const auto& row : report.rows) {
      if (row.method == "map") map_sr = row.success_rate;
      if (row.method == "rgf") rgf_sr = row.success_rate;
    }
    const bool cell_ok = map_sr >= rgf_sr;
    os << "\n  victim=" << victim << " map=" << map_sr << " rgf=" << rgf_sr
       << (cell_ok ? "" : "  <-- VIOLATED");
    ok = ok && cell_ok;
  }
  const double elapsed = seconds_since(start);
  os << "\n  " << elapsed << " s";
  detail = os.str();
  return ok && elapsed < 600.0;
}

// ---------------------------------------------------------------- 7 ----
bool query_accounting(std::string& detail) {
  const Dataset ds = tiny_dataset(55, 4, 8, 30, 10, 0.2);
  TrainHyper hyper;
  hyper.epochs = 20;
  hyper.lr = 0.15;
  hyper.accuracy_floor = 0.5;
  const Model victim = train_model({{20}, 77, "acct"}, ds, hyper).model;

  Rng rng(20240007);
  int early = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int target = static_cast<int>(rng.uniform_index(ds.class_count));
    const std::size_t idx = rng.uniform_index(ds.test.size());
    const std::size_t dim = ds.input_dim;
    const Tensor x(std::vector<std::size_t>{dim},
                   std::vector<double>(
                       ds.test.inputs.data.begin() + idx * dim,
                       ds.test.inputs.data.begin() + (idx + 1) * dim));

    AttackConfig cfg;
    cfg.target = target;
    cfg.budget = 1 + rng.uniform_index(200);
    cfg.q = 1 + static_cast<int>(rng.uniform_index(14));
    cfg.seed = rng.next_u64();
    cfg.epsilon_l2 = 0.8;

    ModelOracle inner(victim, cfg.budget);
    InstrumentedOracle oracle(inner);
    AttackResult res;
    switch (rep % 3) {
      case 0: res = attack_baseline_rgf(oracle, x, cfg); break;
      case 1: res = attack_baseline_random(oracle, x, cfg, 0.1); break;
      default: {
        Perturbation v;
        v.v = random_linf_init(rng, dim, 0.08);
        v.epsilon_inf = 0.08;
        v.target = target;
        res = attack(oracle, x, v, cfg);
        break;
      }
    }
    if (res.queries_used != oracle.true_calls()) {
      detail = "reported queries diverged from true oracle calls";
      return false;
    }
    if (res.queries_used > cfg.budget) {
      detail = "budget exceeded";
      return false;
    }
    if (res.success && res.iterations == 0) {
      if (res.queries_used != 1) {
        detail = "early success must cost exactly one query";
        return false;
      }
      ++early;
    }
  }
  detail = "1000 randomized runs, " + std::to_string(early) +
           " early successes, all counts exact";
  return true;
}

// ---------------------------------------------------------------- 8 ----
bool pipeline_determinism(std::string& detail) {
  const Dataset& data = default_data();
  const Zoo& zoo = default_zoo();

  BenchConfig cfg;
  cfg.victim_id = 0;
  cfg.surrogate_ids = {1, 2, 3, 4};
  cfg.seed = 5;
  cfg.max_samples = 40;
  cfg.map_train.epochs = 4;

  setenv("MAP_ATTACK_THREADS", "1", 1);
  const std::string serial_json =
      report_to_string(run_benchmark(cfg, data, zoo.models), ReportFormat::json);
  const std::string serial_csv =
      report_to_string(run_benchmark(cfg, data, zoo.models), ReportFormat::csv);
  setenv("MAP_ATTACK_THREADS", "4", 1);
  const std::string parallel_json =
      report_to_string(run_benchmark(cfg, data, zoo.models), ReportFormat::json);
  const std::string parallel_csv =
      report_to_string(run_benchmark(cfg, data, zoo.models), ReportFormat::csv);
  unsetenv("MAP_ATTACK_THREADS");

  const bool ok = serial_json == parallel_json && serial_csv == parallel_csv;
  detail = ok ? "serial and 4-worker reports byte-identical (two runs each)"
              : "reports diverged";
  return ok;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient exactness vs finite differences", gradient_exactness},
      {2, "gradient estimator statistics", estimator_statistics},
      {3, "projection properties", projection_properties},
      {4, "closed-form training step", closed_form_training},
      {5, "trained perturbation beats baselines", map_effectiveness},
      {6, "cross-class universality", universality},
      {7, "query accounting", query_accounting},
      {8, "pipeline determinism", pipeline_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", c.id,
                c.name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
