#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapattack/nn.hpp"

namespace mapattack {

/// Synthetic image-like dataset: one Gaussian cluster per class around a
/// class template pattern, all values clipped into [0, 1]. Identical specs
/// generate bit-identical datasets.
struct DatasetSpec {
  std::uint64_t seed = 42;
  int class_count = 10;
  int input_dim = 64;  // read as an 8x8 single-channel image by default
  int per_class_train = 200;
  int per_class_test = 50;
  double cluster_spread = 0.13;
};

struct Dataset {
  LabeledBatch train;
  LabeledBatch test;
  std::size_t class_count = 0;
  std::size_t input_dim = 0;
};

/// Throws ConfigError when class_count < 3 (a targeted attack needs at
/// least a source class, a target class, and one more to be non-trivial)
/// or when sizes are non-positive.
Dataset gen_dataset(const DatasetSpec& spec);

struct ArchSpec {
  std::vector<std::size_t> hidden_widths;
  std::uint64_t init_seed = 0;
  std::string tag;
};

struct TrainHyper {
  double lr = 0.08;
  int epochs = 50;
  int batch_size = 32;
  double accuracy_floor = 0.85;
  std::uint64_t shuffle_seed = 7;
};

struct TrainOutcome {
  Model model;
  double test_accuracy = 0.0;
  bool under_trained = false;  // set when test accuracy misses the floor
};

/// Fresh model with fan-scaled uniform weights and zero biases.
Model init_model(const ArchSpec& arch, std::size_t input_dim,
                 std::size_t class_count);

/// Minibatch SGD on the train split. epochs == 0 returns the initialized
/// model untouched.
TrainOutcome train_model(const ArchSpec& arch, const Dataset& data,
                         const TrainHyper& hyper);

/// Fraction of samples whose argmax prediction matches the label.
/// An empty batch yields 0 and a warning on stderr.
double accuracy(const Model& m, const LabeledBatch& batch);

/// The five stock classifiers used by the benchmarks: distinct depths,
/// widths and seeds over a shared training set.
std::vector<ArchSpec> default_zoo_archs(std::uint64_t seed_base);
std::vector<TrainOutcome> train_default_zoo(const Dataset& data,
                                            std::uint64_t seed_base,
                                            const TrainHyper& hyper = {});

}  // namespace mapattack
