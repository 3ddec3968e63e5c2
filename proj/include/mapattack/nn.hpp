#pragma once

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mapattack/tensor.hpp"

namespace mapattack {

/// Fully connected layer. Weights are row-major with one row per output
/// unit: w[o * in + i] multiplies input component i of output o.
struct Affine {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const Affine&) const = default;
};

struct Relu {
  bool operator==(const Relu&) const = default;
};

using Layer = std::variant<Affine, Relu>;

/// Feed-forward classifier. The final affine layer emits raw logits.
/// Models are immutable values once built; every operation below is pure,
/// so a shared Model may be used from several threads at once.
struct Model {
  std::string tag;  // bookkeeping id, not part of the serialized form
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  std::vector<Layer> layers;

  std::size_t param_count() const;
};

/// Throws ShapeError unless adjacent layer dimensions chain from input_dim
/// to class_count.
void validate_model(const Model& m);

struct LabeledBatch {
  Tensor inputs;            // [batch, input_dim]
  std::vector<int> labels;  // class indices, one per row

  std::size_t size() const { return labels.size(); }
};

void validate_batch(const LabeledBatch& batch, std::size_t input_dim,
                    std::size_t class_count);

/// Raw logits for a batch of inputs, [batch, class_count].
Tensor forward(const Model& m, const Tensor& inputs);

struct LossGrad {
  double loss = 0.0;
  Tensor dlogits;  // (softmax - one_hot) / batch
};

/// Mean negative log softmax over the batch, with its logit gradient.
/// Stabilized with log-sum-exp so large logits do not overflow.
LossGrad cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Gradient of the batch-mean cross-entropy toward class `target` with
/// respect to each input row. Returns a tensor shaped like batch.inputs.
Tensor grad_input(const Model& m, const LabeledBatch& batch, int target);

/// Parameter gradients, one entry per affine layer in model order.
struct ParamGrads {
  std::vector<Affine> affine;
};

/// Gradient of the batch-mean cross-entropy against the true labels.
ParamGrads grad_params(const Model& m, const LabeledBatch& batch);

/// Plain gradient step p <- p - lr * g. Pure: returns a new model.
Model sgd_step(Model m, const ParamGrads& grads, double lr);

/// Argmax class for a single input (rank-1 tensor). Ties resolve to the
/// lowest class index.
int predict(const Model& m, const Tensor& x);

/// Mean cross-entropy toward `target` over a batch of inputs.
double mean_targeted_loss(const Model& m, const Tensor& inputs, int target);

/// Test/bench instrumentation: when set, called once per gradient
/// computation with the model involved. Not used on the forward path.
using GradientAuditHook = std::function<void(const Model&)>;
void set_gradient_audit_hook(GradientAuditHook hook);

}  // namespace mapattack
