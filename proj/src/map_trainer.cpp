#include "mapattack/map_trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/serialize.hpp"

namespace mapattack {

namespace {

void require_nonempty_batch(const LabeledBatch& batch, const char* who) {
  if (batch.size() == 0) {
    throw DomainError(std::string(who) + ": empty batch");
  }
}

// Gathers rows of `src` selected by `idx` into a fresh batch.
LabeledBatch gather(const LabeledBatch& src, const std::vector<std::size_t>& idx) {
  const std::size_t dim = src.inputs.extent(1);
  LabeledBatch out;
  out.inputs = Tensor::zeros({idx.size(), dim});
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(src.inputs.data.begin() + idx[i] * dim,
              src.inputs.data.begin() + (idx[i] + 1) * dim,
              out.inputs.data.begin() + i * dim);
    out.labels[i] = src.labels[idx[i]];
  }
  return out;
}

}  // namespace

void validate_ensemble(const SurrogateEnsemble& ens) {
  if (ens.models.empty()) {
    throw ConfigError("ensemble: needs at least one surrogate model");
  }
  const std::size_t dim = ens.models.front().input_dim;
  const std::size_t classes = ens.models.front().class_count;
  for (const Model& m : ens.models) {
    validate_model(m);
    if (m.input_dim != dim || m.class_count != classes) {
      throw ShapeError("ensemble: members disagree on input_dim/class_count");
    }
  }
}

EnsembleObjective::EnsembleObjective(const SurrogateEnsemble& ens, int target)
    : ens_(&ens), target_(target) {
  validate_ensemble(ens);
  if (target < 0 ||
      static_cast<std::size_t>(target) >= ens.models.front().class_count) {
    throw DomainError("ensemble objective: target class out of range");
  }
}

std::size_t EnsembleObjective::dim() const {
  return ens_->models.front().input_dim;
}

Tensor EnsembleObjective::gradient(const Tensor& v,
                                   const LabeledBatch& batch) const {
  require_nonempty_batch(batch, "ensemble gradient");
  LabeledBatch shifted;
  shifted.inputs = add_rowwise(batch.inputs, v);
  shifted.labels = batch.labels;

  // The batch-mean loss gradient w.r.t. the shared v is the column sum of
  // the per-row input gradients (each row already carries the 1/batch
  // factor of the mean).
  Tensor g = Tensor::zeros({dim()});
  const std::size_t rows = shifted.size();
  const std::size_t cols = dim();
  for (const Model& m : ens_->models) {
    const Tensor rows_grad = grad_input(m, shifted, target_);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = rows_grad.data.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) g.data[c] += src[c];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(ens_->models.size());
  for (double& x : g.data) x *= inv_n;
  return g;
}

double EnsembleObjective::loss(const Tensor& v,
                               const LabeledBatch& batch) const {
  require_nonempty_batch(batch, "ensemble loss");
  const Tensor shifted = add_rowwise(batch.inputs, v);
  double acc = 0.0;
  for (const Model& m : ens_->models) {
    acc += mean_targeted_loss(m, shifted, target_);
  }
  return acc / static_cast<double>(ens_->models.size());
}

void validate_map_config(const MapTrainConfig& cfg) {
  if (cfg.alpha <= 0.0 || cfg.beta <= 0.0) {
    throw ConfigError("map config: alpha and beta must be positive");
  }
  if (cfg.epsilon_inf < 0.0) {
    throw ConfigError("map config: epsilon_inf must be non-negative");
  }
  if (cfg.epochs < 0 || cfg.inner_batch < 1 || cfg.meta_batch < 1 ||
      cfg.inner_steps < 1) {
    throw ConfigError("map config: bad loop sizes");
  }
}

Tensor adapt_step(const Tensor& v, const PerturbationObjective& obj,
                  const LabeledBatch& batch, double alpha) {
  require_nonempty_batch(batch, "adapt_step");
  return sub(v, scale(obj.gradient(v, batch), alpha));
}

Tensor adapt_step(const Perturbation& p, const SurrogateEnsemble& ens,
                  const LabeledBatch& batch, double alpha) {
  return adapt_step(p.v, EnsembleObjective(ens, p.target), batch, alpha);
}

Tensor meta_step(const Tensor& v, const Tensor& v_adapted,
                 const PerturbationObjective& obj,
                 const LabeledBatch& meta_batch, double beta) {
  require_nonempty_batch(meta_batch, "meta_step");
  return sub(v, scale(obj.gradient(v_adapted, meta_batch), beta));
}

Tensor meta_step(const Perturbation& p, const Tensor& v_adapted,
                 const SurrogateEnsemble& ens, const LabeledBatch& meta_batch,
                 double beta) {
  return meta_step(p.v, v_adapted, EnsembleObjective(ens, p.target),
                   meta_batch, beta);
}

Tensor project_linf(Tensor v, double epsilon_inf) {
  if (epsilon_inf < 0.0) {
    throw DomainError("project_linf: negative bound");
  }
  for (double& x : v.data) x = std::clamp(x, -epsilon_inf, epsilon_inf);
  return v;
}

Perturbation train_map(const MapTrainConfig& cfg,
                       const PerturbationObjective& obj, const Dataset& data,
                       int target, MapTrainTrace* trace) {
  validate_map_config(cfg);
  if (target < 0 || static_cast<std::size_t>(target) >=
                        static_cast<std::size_t>(data.class_count)) {
    throw DomainError("train_map: target class out of range");
  }

  // Training pool, optionally restricted to a class subset.
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const int y = data.train.labels[i];
    if (cfg.train_classes.empty() ||
        std::find(cfg.train_classes.begin(), cfg.train_classes.end(), y) !=
            cfg.train_classes.end()) {
      pool.push_back(i);
    }
  }
  if (pool.empty()) {
    throw ConfigError("train_map: training pool is empty");
  }

  Rng rng(cfg.seed);
  const std::size_t dim = obj.dim();
  Tensor v = Tensor::zeros({dim});
  const double init_half_range = cfg.epsilon_inf / 10.0;
  for (double& x : v.data) {
    x = rng.uniform(-init_half_range, init_half_range);
  }

  const auto inner_size = static_cast<std::size_t>(cfg.inner_batch);
  const auto meta_size = static_cast<std::size_t>(cfg.meta_batch);
  std::vector<std::size_t> order = pool;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += inner_size) {
      const std::size_t stop = std::min(start + inner_size, order.size());
      const LabeledBatch inner = gather(
          data.train,
          std::vector<std::size_t>(order.begin() + start, order.begin() + stop));

      Tensor v_adapted = v;
      for (int k = 0; k < cfg.inner_steps; ++k) {
        v_adapted = adapt_step(v_adapted, obj, inner, cfg.alpha);
      }

      // Fresh outer minibatch, distinct draws when the pool allows it.
      std::vector<std::size_t> meta_idx;
      if (meta_size >= pool.size()) {
        meta_idx = pool;
      } else {
        std::vector<std::size_t> scratch = pool;
        for (std::size_t i = 0; i < meta_size; ++i) {
          const std::size_t j = i + rng.uniform_index(scratch.size() - i);
          std::swap(scratch[i], scratch[j]);
          meta_idx.push_back(scratch[i]);
        }
      }
      const LabeledBatch meta = gather(data.train, meta_idx);

      v = meta_step(v, v_adapted, obj, meta, cfg.beta);
      v = project_linf(std::move(v), cfg.epsilon_inf);

      if (trace) {
        trace->meta_losses.push_back(obj.loss(v_adapted, meta));
      }
    }
  }

  ensure_finite(v, "train_map");
  return Perturbation{std::move(v), cfg.epsilon_inf, target};
}

Perturbation train_map(const MapTrainConfig& cfg, const SurrogateEnsemble& ens,
                       const Dataset& data, int target, MapTrainTrace* trace) {
  EnsembleObjective obj(ens, target);
  if (obj.dim() != data.input_dim) {
    throw ShapeError("train_map: ensemble width != dataset input_dim");
  }
  return train_map(cfg, obj, data, target, trace);
}

void save_map(const Perturbation& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  out << "MAPVEC v1 " << p.v.size() << ' ' << p.target << ' '
      << format_double(p.epsilon_inf) << '\n';
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    out << (i ? " " : "") << format_double(p.v.data[i]);
  }
  out << '\n';
}

Perturbation load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path.string(), 1, "missing MAPVEC header");
  }
  std::istringstream header(line);
  std::string magic, version;
  std::size_t dim = 0;
  int target = 0;
  std::string eps_tok;
  if (!(header >> magic >> version >> dim >> target >> eps_tok) ||
      magic != "MAPVEC") {
    throw ParseError(path.string(), 1, "not a MAPVEC file");
  }
  if (version != "v1") {
    throw UnsupportedVersionError(path.string(), version);
  }
  const double eps = parse_double(eps_tok, path.string(), 1);

  if (!std::getline(in, line)) {
    throw ParseError(path.string(), 2, "missing value line");
  }
  std::istringstream values(line);
  Perturbation p;
  p.epsilon_inf = eps;
  p.target = target;
  p.v = Tensor::zeros({dim});
  for (std::size_t i = 0; i < dim; ++i) {
    std::string tok;
    if (!(values >> tok)) {
      throw ParseError(path.string(), 2, "expected " + std::to_string(dim) +
                                             " values");
    }
    p.v.data[i] = parse_double(tok, path.string(), 2);
  }
  ensure_finite(p.v, "load_map");
  if (linf_norm(p.v) > eps * (1.0 + 1e-12)) {
    throw DomainError(path.string() +
                      ": perturbation exceeds its stated epsilon_inf");
  }
  return p;
}

}  // namespace mapattack
