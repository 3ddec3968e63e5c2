#include "mapattack/nn.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "mapattack/errors.hpp"

namespace mapattack {

namespace {

std::mutex g_audit_mutex;
GradientAuditHook g_audit_hook;

void notify_gradient_audit(const Model& m) {
  std::scoped_lock lock(g_audit_mutex);
  if (g_audit_hook) g_audit_hook(m);
}

// Activations after each layer; acts[0] is the input itself.
std::vector<Tensor> forward_trace(const Model& m, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.extent(1) != m.input_dim) {
    throw ShapeError("forward: expected inputs of shape [batch, " +
                     std::to_string(m.input_dim) + "]");
  }
  std::vector<Tensor> acts;
  acts.reserve(m.layers.size() + 1);
  acts.push_back(inputs);

  const std::size_t batch = inputs.extent(0);
  for (const Layer& layer : m.layers) {
    const Tensor& x = acts.back();
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      if (x.extent(1) != aff->in) {
        throw ShapeError("forward: layer input width mismatch");
      }
      Tensor y = Tensor::zeros({batch, aff->out});
      for (std::size_t r = 0; r < batch; ++r) {
        const double* xin = x.data.data() + r * aff->in;
        double* yout = y.data.data() + r * aff->out;
        for (std::size_t o = 0; o < aff->out; ++o) {
          const double* wrow = aff->w.data() + o * aff->in;
          double acc = aff->b[o];
          for (std::size_t i = 0; i < aff->in; ++i) acc += wrow[i] * xin[i];
          yout[o] = acc;
        }
      }
      acts.push_back(std::move(y));
    } else {
      Tensor y = x;
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      acts.push_back(std::move(y));
    }
  }
  return acts;
}

// Backward pass from dLoss/dLogits down to dLoss/dInput. When `pgrads` is
// non-null, parameter gradients are accumulated along the way.
Tensor backward(const Model& m, const std::vector<Tensor>& acts, Tensor dcur,
                ParamGrads* pgrads) {
  std::size_t affine_index =
      pgrads ? pgrads->affine.size() : 0;  // walks backwards below
  const std::size_t batch = acts[0].extent(0);

  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const Layer& layer = m.layers[li];
    const Tensor& x = acts[li];
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      if (pgrads) {
        Affine& g = pgrads->affine[--affine_index];
        for (std::size_t r = 0; r < batch; ++r) {
          const double* xin = x.data.data() + r * aff->in;
          const double* d = dcur.data.data() + r * aff->out;
          for (std::size_t o = 0; o < aff->out; ++o) {
            double* grow = g.w.data() + o * aff->in;
            const double dv = d[o];
            g.b[o] += dv;
            for (std::size_t i = 0; i < aff->in; ++i) grow[i] += dv * xin[i];
          }
        }
      }
      Tensor dprev = Tensor::zeros({batch, aff->in});
      for (std::size_t r = 0; r < batch; ++r) {
        const double* d = dcur.data.data() + r * aff->out;
        double* dp = dprev.data.data() + r * aff->in;
        for (std::size_t o = 0; o < aff->out; ++o) {
          const double* wrow = aff->w.data() + o * aff->in;
          const double dv = d[o];
          for (std::size_t i = 0; i < aff->in; ++i) dp[i] += dv * wrow[i];
        }
      }
      dcur = std::move(dprev);
    } else {
      // relu passes gradient only where the activation is positive;
      // the subgradient at exactly zero is taken as zero
      const Tensor& y = acts[li + 1];
      for (std::size_t i = 0; i < dcur.data.size(); ++i) {
        if (y.data[i] <= 0.0) dcur.data[i] = 0.0;
      }
    }
  }
  return dcur;
}

ParamGrads zero_param_grads(const Model& m) {
  ParamGrads g;
  for (const Layer& layer : m.layers) {
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      Affine z;
      z.in = aff->in;
      z.out = aff->out;
      z.w.assign(aff->w.size(), 0.0);
      z.b.assign(aff->b.size(), 0.0);
      g.affine.push_back(std::move(z));
    }
  }
  return g;
}

}  // namespace

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers) {
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      n += aff->w.size() + aff->b.size();
    }
  }
  return n;
}

void validate_model(const Model& m) {
  if (m.input_dim == 0 || m.class_count == 0) {
    throw ShapeError("model: input_dim and class_count must be positive");
  }
  std::size_t width = m.input_dim;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    if (const auto* aff = std::get_if<Affine>(&m.layers[li])) {
      if (aff->in != width) {
        throw ShapeError("model: layer " + std::to_string(li) +
                         " expects width " + std::to_string(aff->in) +
                         " but receives " + std::to_string(width));
      }
      if (aff->w.size() != aff->in * aff->out || aff->b.size() != aff->out) {
        throw ShapeError("model: layer " + std::to_string(li) +
                         " parameter sizes do not match its dimensions");
      }
      width = aff->out;
    }
  }
  if (width != m.class_count) {
    throw ShapeError("model: final width " + std::to_string(width) +
                     " != class_count " + std::to_string(m.class_count));
  }
}

void validate_batch(const LabeledBatch& batch, std::size_t input_dim,
                    std::size_t class_count) {
  if (batch.inputs.rank() != 2 || batch.inputs.extent(1) != input_dim) {
    throw ShapeError("batch: inputs must be [batch, " +
                     std::to_string(input_dim) + "]");
  }
  if (batch.inputs.extent(0) != batch.labels.size()) {
    throw ShapeError("batch: row count does not match label count");
  }
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
      throw DomainError("batch: label " + std::to_string(y) +
                        " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

Tensor forward(const Model& m, const Tensor& inputs) {
  return forward_trace(m, inputs).back();
}

LossGrad cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits rows must match label count");
  }
  const std::size_t batch = logits.extent(0);
  const std::size_t classes = logits.extent(1);
  if (batch == 0) throw DomainError("cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DomainError("cross_entropy: label out of range");
    }
  }

  LossGrad out;
  out.dlogits = Tensor::zeros(logits.shape);
  double loss_sum = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = logits.data.data() + r * classes;
    double* drow = out.dlogits.data.data() + r * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
    const double lse = mx + std::log(sum);
    loss_sum += lse - row[labels[r]];
    for (std::size_t c = 0; c < classes; ++c) {
      drow[c] = std::exp(row[c] - lse) * inv_batch;
    }
    drow[labels[r]] -= inv_batch;
  }
  out.loss = loss_sum * inv_batch;
  return out;
}

Tensor grad_input(const Model& m, const LabeledBatch& batch, int target) {
  validate_model(m);
  validate_batch(batch, m.input_dim, m.class_count);
  if (target < 0 || static_cast<std::size_t>(target) >= m.class_count) {
    throw DomainError("grad_input: target class out of range");
  }
  notify_gradient_audit(m);

  const auto acts = forward_trace(m, batch.inputs);
  const std::vector<int> targets(batch.size(), target);
  LossGrad lg = cross_entropy(acts.back(), targets);
  return backward(m, acts, std::move(lg.dlogits), nullptr);
}

ParamGrads grad_params(const Model& m, const LabeledBatch& batch) {
  validate_model(m);
  validate_batch(batch, m.input_dim, m.class_count);
  if (batch.size() == 0) throw DomainError("grad_params: empty batch");
  notify_gradient_audit(m);

  const auto acts = forward_trace(m, batch.inputs);
  LossGrad lg = cross_entropy(acts.back(), batch.labels);
  ParamGrads grads = zero_param_grads(m);
  backward(m, acts, std::move(lg.dlogits), &grads);
  return grads;
}

Model sgd_step(Model m, const ParamGrads& grads, double lr) {
  std::size_t gi = 0;
  for (Layer& layer : m.layers) {
    auto* aff = std::get_if<Affine>(&layer);
    if (!aff) continue;
    if (gi >= grads.affine.size()) {
      throw ShapeError("sgd_step: fewer gradient blocks than affine layers");
    }
    const Affine& g = grads.affine[gi++];
    if (g.in != aff->in || g.out != aff->out) {
      throw ShapeError("sgd_step: gradient block shape mismatch");
    }
    for (std::size_t i = 0; i < aff->w.size(); ++i) aff->w[i] -= lr * g.w[i];
    for (std::size_t i = 0; i < aff->b.size(); ++i) aff->b[i] -= lr * g.b[i];
  }
  if (gi != grads.affine.size()) {
    throw ShapeError("sgd_step: more gradient blocks than affine layers");
  }
  return m;
}

int predict(const Model& m, const Tensor& x) {
  if (x.rank() != 1 || x.extent(0) != m.input_dim) {
    throw ShapeError("predict: expected a rank-1 input of width " +
                     std::to_string(m.input_dim));
  }
  Tensor row(std::vector<std::size_t>{1, m.input_dim}, x.data);
  const Tensor logits = forward(m, row);
  int best = 0;
  double best_v = logits.data[0];
  for (std::size_t c = 1; c < m.class_count; ++c) {
    if (logits.data[c] > best_v) {
      best_v = logits.data[c];
      best = static_cast<int>(c);
    }
  }
  return best;
}

double mean_targeted_loss(const Model& m, const Tensor& inputs, int target) {
  const Tensor logits = forward(m, inputs);
  const std::vector<int> targets(inputs.extent(0), target);
  return cross_entropy(logits, targets).loss;
}

void set_gradient_audit_hook(GradientAuditHook hook) {
  std::scoped_lock lock(g_audit_mutex);
  g_audit_hook = std::move(hook);
}

}  // namespace mapattack
