#include "mapattack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"

namespace mapattack {

namespace {

// Lays out samples round-robin over classes (0,1,...,C-1,0,1,...) so any
// prefix of the split stays class-balanced.
LabeledBatch interleave(const std::vector<std::vector<double>>& per_class,
                        std::size_t per_class_count, std::size_t dim) {
  const std::size_t classes = per_class.size();
  LabeledBatch out;
  out.inputs = Tensor::zeros({classes * per_class_count, dim});
  out.labels.resize(classes * per_class_count);
  std::size_t row = 0;
  for (std::size_t j = 0; j < per_class_count; ++j) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double* src = per_class[c].data() + j * dim;
      std::copy(src, src + dim, out.inputs.data.data() + row * dim);
      out.labels[row] = static_cast<int>(c);
      ++row;
    }
  }
  return out;
}

}  // namespace

Dataset gen_dataset(const DatasetSpec& spec) {
  if (spec.class_count < 3) {
    throw ConfigError("gen_dataset: class_count must be at least 3");
  }
  if (spec.input_dim < 1 || spec.per_class_train < 1 || spec.per_class_test < 1) {
    throw ConfigError("gen_dataset: sizes must be positive");
  }
  if (spec.cluster_spread < 0.0) {
    throw ConfigError("gen_dataset: cluster_spread must be non-negative");
  }

  const auto classes = static_cast<std::size_t>(spec.class_count);
  const auto dim = static_cast<std::size_t>(spec.input_dim);
  const auto n_train = static_cast<std::size_t>(spec.per_class_train);
  const auto n_test = static_cast<std::size_t>(spec.per_class_test);

  Rng rng(spec.seed);

  // Class templates first, then all samples, so the draw order is fixed.
  // Templates sit in a band around mid-gray; the band width sets the
  // inter-cluster distance at a scale where attacks stay feasible while
  // classifiers still separate the clusters cleanly.
  constexpr double kTemplateHalfRange = 0.15;
  std::vector<std::vector<double>> templates(classes,
                                             std::vector<double>(dim));
  for (auto& t : templates) {
    for (double& x : t) {
      x = 0.5 + kTemplateHalfRange * (2.0 * rng.uniform01() - 1.0);
    }
  }

  std::vector<std::vector<double>> train_rows(classes), test_rows(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    train_rows[c].resize(n_train * dim);
    test_rows[c].resize(n_test * dim);
    auto draw_into = [&](std::vector<double>& dst, std::size_t count) {
      for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t k = 0; k < dim; ++k) {
          const double v = templates[c][k] + spec.cluster_spread * rng.normal();
          dst[j * dim + k] = std::clamp(v, 0.0, 1.0);
        }
      }
    };
    draw_into(train_rows[c], n_train);
    draw_into(test_rows[c], n_test);
  }

  Dataset ds;
  ds.class_count = classes;
  ds.input_dim = dim;
  ds.train = interleave(train_rows, n_train, dim);
  ds.test = interleave(test_rows, n_test, dim);
  return ds;
}

Model init_model(const ArchSpec& arch, std::size_t input_dim,
                 std::size_t class_count) {
  Rng rng(arch.init_seed);
  Model m;
  m.tag = arch.tag;
  m.input_dim = input_dim;
  m.class_count = class_count;

  std::vector<std::size_t> widths;
  widths.push_back(input_dim);
  for (std::size_t w : arch.hidden_widths) widths.push_back(w);
  widths.push_back(class_count);

  for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
    Affine aff;
    aff.in = widths[li];
    aff.out = widths[li + 1];
    const double bound =
        std::sqrt(6.0 / static_cast<double>(aff.in + aff.out));
    aff.w.resize(aff.in * aff.out);
    for (double& w : aff.w) w = rng.uniform(-bound, bound);
    aff.b.assign(aff.out, 0.0);
    m.layers.emplace_back(std::move(aff));
    if (li + 2 < widths.size()) m.layers.emplace_back(Relu{});
  }
  validate_model(m);
  return m;
}

TrainOutcome train_model(const ArchSpec& arch, const Dataset& data,
                         const TrainHyper& hyper) {
  if (hyper.epochs < 0 || hyper.batch_size < 1 || hyper.lr < 0.0) {
    throw ConfigError("train_model: bad hyperparameters");
  }
  Model m = init_model(arch, data.input_dim, data.class_count);

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(hyper.shuffle_seed ^ arch.init_seed);

  const auto batch_size = static_cast<std::size_t>(hyper.batch_size);
  const std::size_t dim = data.input_dim;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(start + batch_size, n);
      LabeledBatch mb;
      mb.inputs = Tensor::zeros({stop - start, dim});
      mb.labels.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t src = order[i];
        std::copy(data.train.inputs.data.begin() + src * dim,
                  data.train.inputs.data.begin() + (src + 1) * dim,
                  mb.inputs.data.begin() + (i - start) * dim);
        mb.labels[i - start] = data.train.labels[src];
      }
      m = sgd_step(m, grad_params(m, mb), hyper.lr);
    }
  }

  TrainOutcome out;
  out.test_accuracy = accuracy(m, data.test);
  out.under_trained = out.test_accuracy < hyper.accuracy_floor;
  if (out.under_trained) {
    std::cerr << "warning: model '" << arch.tag << "' reached "
              << out.test_accuracy << " test accuracy, below the "
              << hyper.accuracy_floor << " floor\n";
  }
  out.model = std::move(m);
  return out;
}

double accuracy(const Model& m, const LabeledBatch& batch) {
  if (batch.size() == 0) {
    std::cerr << "warning: accuracy over an empty batch, reporting 0\n";
    return 0.0;
  }
  validate_batch(batch, m.input_dim, m.class_count);
  const Tensor logits = forward(m, batch.inputs);
  const std::size_t classes = m.class_count;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const double* row = logits.data.data() + r * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (static_cast<int>(best) == batch.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

std::vector<ArchSpec> default_zoo_archs(std::uint64_t seed_base) {
  return {
      {{48, 48}, seed_base + 1, "model_0"},
      {{64, 32}, seed_base + 2, "model_1"},
      {{96, 48}, seed_base + 3, "model_2"},
      {{32, 64, 32}, seed_base + 4, "model_3"},
      {{72, 48, 36}, seed_base + 5, "model_4"},
  };
}

std::vector<TrainOutcome> train_default_zoo(const Dataset& data,
                                            std::uint64_t seed_base,
                                            const TrainHyper& hyper) {
  std::vector<TrainOutcome> out;
  for (const ArchSpec& arch : default_zoo_archs(seed_base)) {
    out.push_back(train_model(arch, data, hyper));
  }
  return out;
}

}  // namespace mapattack
