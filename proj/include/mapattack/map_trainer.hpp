#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mapattack/dataset.hpp"
#include "mapattack/nn.hpp"

namespace mapattack {

/// Additive input perturbation with an L-infinity budget and the class it
/// drives predictions toward. `max_i |v_i| <= epsilon_inf` holds after
/// every public update.
struct Perturbation {
  Tensor v;  // rank-1, [input_dim]
  double epsilon_inf = 0.0;
  int target = 0;
};

/// White-box models whose gradients drive perturbation training. All
/// members share input width and class count.
struct SurrogateEnsemble {
  std::vector<Model> models;
};

void validate_ensemble(const SurrogateEnsemble& ens);

/// Gradient source for the perturbation update. The production
/// implementation averages surrogate input-gradients; tests substitute
/// synthetic objectives with closed-form gradients through this seam.
class PerturbationObjective {
public:
  virtual ~PerturbationObjective() = default;
  virtual std::size_t dim() const = 0;

  /// d/dv of the batch-mean targeted loss at batch.inputs + v, averaged
  /// over models.
  virtual Tensor gradient(const Tensor& v, const LabeledBatch& batch) const = 0;

  /// The batch-mean targeted loss itself, averaged over models.
  virtual double loss(const Tensor& v, const LabeledBatch& batch) const = 0;
};

/// Averages targeted-loss input gradients over a surrogate ensemble.
/// Per-model terms are independent; the reduction runs in model order so
/// results stay bit-deterministic.
class EnsembleObjective final : public PerturbationObjective {
public:
  EnsembleObjective(const SurrogateEnsemble& ens, int target);

  std::size_t dim() const override;
  Tensor gradient(const Tensor& v, const LabeledBatch& batch) const override;
  double loss(const Tensor& v, const LabeledBatch& batch) const override;

private:
  const SurrogateEnsemble* ens_;
  int target_;
};

struct MapTrainConfig {
  double alpha = 0.08;        // adaptation step size
  double beta = 0.08;         // outer update step size
  int epochs = 20;
  int inner_batch = 200;      // adaptation minibatch size
  int meta_batch = 400;       // outer minibatch size
  int inner_steps = 1;        // gradient-descent steps per adaptation
  double epsilon_inf = 0.10;
  std::uint64_t seed = 1;
  std::vector<int> train_classes;  // empty = all classes
};

void validate_map_config(const MapTrainConfig& cfg);

/// One adaptation step: v - alpha * gradient(v). Throws DomainError on an
/// empty batch.
Tensor adapt_step(const Tensor& v, const PerturbationObjective& obj,
                  const LabeledBatch& batch, double alpha);
Tensor adapt_step(const Perturbation& p, const SurrogateEnsemble& ens,
                  const LabeledBatch& batch, double alpha);

/// Outer update: the gradient is evaluated at the adapted vector but
/// applied to v itself (first-order rule).
Tensor meta_step(const Tensor& v, const Tensor& v_adapted,
                 const PerturbationObjective& obj,
                 const LabeledBatch& meta_batch, double beta);
Tensor meta_step(const Perturbation& p, const Tensor& v_adapted,
                 const SurrogateEnsemble& ens, const LabeledBatch& meta_batch,
                 double beta);

/// Componentwise clamp into [-eps, +eps]. Idempotent.
Tensor project_linf(Tensor v, double epsilon_inf);

/// Optional per-iteration record of the outer objective, evaluated at the
/// adapted vector on the outer minibatch.
struct MapTrainTrace {
  std::vector<double> meta_losses;
};

/// Full training loop: random init, then per minibatch one adaptation,
/// one outer update on a freshly sampled minibatch, and the clamp.
/// Deterministic under cfg.seed.
Perturbation train_map(const MapTrainConfig& cfg,
                       const PerturbationObjective& obj, const Dataset& data,
                       int target, MapTrainTrace* trace = nullptr);
Perturbation train_map(const MapTrainConfig& cfg, const SurrogateEnsemble& ens,
                       const Dataset& data, int target,
                       MapTrainTrace* trace = nullptr);

// Perturbation files.
//   MAPVEC v1 <input_dim> <target> <epsilon_inf>
// then one line of input_dim values. Round-trips bit-exactly.
void save_map(const Perturbation& p, const std::filesystem::path& path);
Perturbation load_map(const std::filesystem::path& path);

}  // namespace mapattack
