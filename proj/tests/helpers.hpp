#pragma once

// Shared test fixtures: independent oracles (finite differences, straight
// line forward recomputation), synthetic objectives, and stub oracles.
// Everything here stays independent of the library's gradient path; loss
// values are read through forward()/cross_entropy() only.

#include <cmath>
#include <functional>
#include <vector>

#include "mapattack/attack.hpp"
#include "mapattack/dataset.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/map_trainer.hpp"
#include "mapattack/nn.hpp"
#include "mapattack/rng.hpp"

namespace testutil {

using namespace mapattack;

// Straight-line matrix-chain forward, written independently of
// nn.cpp. Used both as the forward oracle and to find relu
// pre-activations that sit too close to the kink for finite differences.
inline std::vector<std::vector<double>> reference_forward_rows(
    const Model& m, const std::vector<std::vector<double>>& rows,
    double* min_abs_preact = nullptr) {
  if (min_abs_preact) *min_abs_preact = 1e300;
  std::vector<std::vector<double>> cur = rows;
  for (const Layer& layer : m.layers) {
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      std::vector<std::vector<double>> next(cur.size(),
                                            std::vector<double>(aff->out));
      for (std::size_t r = 0; r < cur.size(); ++r) {
        for (std::size_t o = 0; o < aff->out; ++o) {
          double acc = aff->b[o];
          for (std::size_t i = 0; i < aff->in; ++i) {
            acc += aff->w[o * aff->in + i] * cur[r][i];
          }
          next[r][o] = acc;
        }
      }
      cur = std::move(next);
    } else {
      for (auto& row : cur) {
        for (double& v : row) {
          if (min_abs_preact) {
            *min_abs_preact = std::min(*min_abs_preact, std::abs(v));
          }
          v = v > 0.0 ? v : 0.0;
        }
      }
    }
  }
  return cur;
}

// Mean cross-entropy of the model on a batch, via the loss path only.
inline double loss_of(const Model& m, const LabeledBatch& batch) {
  return cross_entropy(forward(m, batch.inputs), batch.labels).loss;
}

inline double targeted_loss_of(const Model& m, const LabeledBatch& batch,
                               int target) {
  const std::vector<int> t(batch.size(), target);
  return cross_entropy(forward(m, batch.inputs), t).loss;
}

// Central finite difference of the targeted loss w.r.t. one input entry.
inline double fd_input(const Model& m, const LabeledBatch& batch, int target,
                       std::size_t flat_index, double h) {
  LabeledBatch plus = batch, minus = batch;
  plus.inputs.data[flat_index] += h;
  minus.inputs.data[flat_index] -= h;
  return (targeted_loss_of(m, plus, target) -
          targeted_loss_of(m, minus, target)) /
         (2.0 * h);
}

// Central finite difference of the training loss w.r.t. one parameter of
// one affine layer. `weight` selects weights vs biases.
inline double fd_param(const Model& m, const LabeledBatch& batch,
                       std::size_t affine_ordinal, bool weight,
                       std::size_t flat_index, double h) {
  auto poke = [&](double delta) {
    Model tweaked = m;
    std::size_t seen = 0;
    for (Layer& layer : tweaked.layers) {
      if (auto* aff = std::get_if<Affine>(&layer)) {
        if (seen == affine_ordinal) {
          (weight ? aff->w : aff->b)[flat_index] += delta;
          break;
        }
        ++seen;
      }
    }
    return loss_of(tweaked, batch);
  };
  return (poke(h) - poke(-h)) / (2.0 * h);
}

// Relative error with a floor, the usual gradient-check metric.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Seeded random model with relu hidden layers, dims <= 16.
inline Model random_model(Rng& rng, std::size_t input_dim,
                          std::vector<std::size_t> hidden,
                          std::size_t classes, double weight_scale = 1.0) {
  Model m;
  m.input_dim = input_dim;
  m.class_count = classes;
  std::vector<std::size_t> widths{input_dim};
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(classes);
  for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
    Affine aff;
    aff.in = widths[li];
    aff.out = widths[li + 1];
    aff.w.resize(aff.in * aff.out);
    aff.b.resize(aff.out);
    for (double& w : aff.w) w = weight_scale * rng.uniform(-1.0, 1.0);
    for (double& b : aff.b) b = weight_scale * rng.uniform(-0.5, 0.5);
    m.layers.emplace_back(std::move(aff));
    if (li + 2 < widths.size()) m.layers.emplace_back(Relu{});
  }
  return m;
}

inline LabeledBatch random_batch(Rng& rng, std::size_t n, std::size_t dim,
                                 std::size_t classes) {
  LabeledBatch b;
  b.inputs = Tensor::zeros({n, dim});
  for (double& v : b.inputs.data) v = rng.uniform01();
  b.labels.resize(n);
  for (int& y : b.labels) {
    y = static_cast<int>(rng.uniform_index(classes));
  }
  return b;
}

// Skips configurations whose relu pre-activations straddle the kink;
// central differences are invalid across a non-differentiable point.
inline bool fd_safe(const Model& m, const LabeledBatch& batch,
                    double margin = 1e-3) {
  std::vector<std::vector<double>> rows(batch.size());
  const std::size_t dim = batch.inputs.extent(1);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    rows[r].assign(batch.inputs.data.begin() + r * dim,
                   batch.inputs.data.begin() + (r + 1) * dim);
  }
  double min_pre = 1e300;
  reference_forward_rows(m, rows, &min_pre);
  return min_pre > margin;
}

// Quadratic objective 0.5 * |v - c|^2 with closed-form gradient v - c.
// Stands in for a surrogate ensemble through the objective seam.
class QuadraticObjective final : public PerturbationObjective {
public:
  explicit QuadraticObjective(Tensor center) : center_(std::move(center)) {}

  std::size_t dim() const override { return center_.size(); }

  Tensor gradient(const Tensor& v, const LabeledBatch&) const override {
    return sub(v, center_);
  }

  double loss(const Tensor& v, const LabeledBatch&) const override {
    const Tensor d = sub(v, center_);
    return 0.5 * dot(d, d);
  }

private:
  Tensor center_;
};

// Oracle wrapping an arbitrary loss function: the response encodes the
// loss L(x) as p_target = exp(-L). Used by estimator tests where the loss
// surface must be known in closed form.
class FunctionOracle final : public Oracle {
public:
  FunctionOracle(std::function<double(const Tensor&)> fn, int target,
                 std::size_t classes, std::uint64_t budget)
      : fn_(std::move(fn)), target_(target), classes_(classes),
        budget_(budget) {}

  OracleResponse query(const Tensor& x) override {
    if (used_ >= budget_) throw BudgetExhausted(used_);
    ++used_;
    OracleResponse r;
    r.probs.assign(classes_, 0.0);
    r.probs[static_cast<std::size_t>(target_)] = std::exp(-fn_(x));
    return r;
  }

  std::uint64_t queries_used() const override { return used_; }
  std::uint64_t budget() const override { return budget_; }

private:
  std::function<double(const Tensor&)> fn_;
  int target_;
  std::size_t classes_;
  std::uint64_t used_ = 0;
  std::uint64_t budget_ = 0;
};

// Counts every query independently of the wrapped oracle's own counter.
class InstrumentedOracle final : public Oracle {
public:
  explicit InstrumentedOracle(Oracle& inner) : inner_(&inner) {}

  OracleResponse query(const Tensor& x) override {
    ++true_calls_;
    try {
      return inner_->query(x);
    } catch (...) {
      --true_calls_;  // a refused call answers nothing
      throw;
    }
  }

  std::uint64_t queries_used() const override { return inner_->queries_used(); }
  std::uint64_t budget() const override { return inner_->budget(); }
  std::uint64_t true_calls() const { return true_calls_; }

private:
  Oracle* inner_;
  std::uint64_t true_calls_ = 0;
};

// Small three-cluster dataset for fast end-to-end tests.
inline Dataset tiny_dataset(std::uint64_t seed = 5, int classes = 4,
                            int dim = 8, int per_train = 24,
                            int per_test = 8, double spread = 0.25) {
  DatasetSpec spec;
  spec.seed = seed;
  spec.class_count = classes;
  spec.input_dim = dim;
  spec.per_class_train = per_train;
  spec.per_class_test = per_test;
  spec.cluster_spread = spread;
  return gen_dataset(spec);
}

}  // namespace testutil
