#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/attack.hpp"
#include "mapattack/dataset.hpp"
#include "mapattack/map_trainer.hpp"

namespace mapattack {

enum class Method { map, random, rgf };

Method parse_method(const std::string& name);
std::string method_name(Method m);

/// One benchmark run: a single victim, a surrogate set that must not
/// contain it, and a method list evaluated over the attacked samples.
struct BenchConfig {
  int victim_id = 4;
  std::vector<int> surrogate_ids = {0, 1, 2, 3};
  std::vector<Method> methods = {Method::map, Method::random, Method::rgf};
  int target = 6;
  int max_samples = 200;
  std::vector<int> attacked_classes;   // empty = every class except target
  std::vector<int> map_train_classes;  // empty = all classes
  AttackConfig attack;
  MapTrainConfig map_train;
  std::uint64_t seed = 1;
  std::string output_path;
  std::string cache_dir;  // perturbation cache; empty disables caching

  /// Key = value lines describing every resolved field.
  std::string describe() const;
};

/// Flat `key = value` config file. Unknown keys are errors; '#' starts a
/// comment. Missing keys keep their defaults.
BenchConfig load_bench_config(const std::filesystem::path& path);

struct SampleRow {
  int index = 0;       // position in the attacked set
  int test_row = 0;    // row in the test split
  int true_label = 0;
  bool success = false;
  std::uint64_t queries = 0;
  double l2 = 0.0;
  int iterations = 0;
};

struct AggregateRow {
  std::string victim;
  std::string method;
  double success_rate = 0.0;  // successes / attempted, exact
  double avg_queries = 0.0;   // over all attempted attacks
  double avg_l2 = 0.0;        // over successful attacks only
  int n_samples = 0;
  std::vector<SampleRow> samples;
};

struct BenchReport {
  std::vector<AggregateRow> rows;
};

/// Runs every configured method against the victim. The victim's
/// parameters and gradients never reach the attack path; per-sample runs
/// may execute in parallel (worker cap via MAP_ATTACK_THREADS) with
/// per-sample RNG streams, so parallel and serial reports are identical.
/// The `rgf` method runs with the momentum coefficient forced to zero.
BenchReport run_benchmark(const BenchConfig& cfg, const Dataset& data,
                          const std::vector<Model>& zoo);

/// Same run with the cross-class protocol enforced: the perturbation
/// trains on `map_train_classes` only and the attacked set comes from the
/// disjoint `attacked_classes`. Any overlap is a ConfigError.
BenchReport run_universality_benchmark(const BenchConfig& cfg,
                                       const Dataset& data,
                                       const std::vector<Model>& zoo);

BenchReport merge_reports(const std::vector<BenchReport>& parts);

enum class ReportFormat { csv, json };

/// CSV columns: victim,method,success_rate,avg_queries,avg_l2,n_samples.
/// JSON mirrors the schema and adds the per-sample rows. Field order and
/// number formatting are pinned so identical reports serialize to
/// identical bytes.
void write_report(const BenchReport& report, std::ostream& out,
                  ReportFormat format);
void write_report(const BenchReport& report, const std::filesystem::path& path,
                  ReportFormat format);

BenchReport parse_report_json(std::istream& in);

std::string report_to_string(const BenchReport& report, ReportFormat format);

}  // namespace mapattack
