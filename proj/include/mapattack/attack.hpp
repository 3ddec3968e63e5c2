#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mapattack/map_trainer.hpp"
#include "mapattack/nn.hpp"
#include "mapattack/rng.hpp"

namespace mapattack {

/// One oracle answer: the victim's class probabilities for the queried
/// input. Everything an attacker learns passes through this struct.
struct OracleResponse {
  std::vector<double> probs;
};

/// Query-counting boundary around the victim. Implementations expose
/// probabilities only; no gradients or parameters cross this interface,
/// and every call costs exactly one query.
class Oracle {
public:
  virtual ~Oracle() = default;

  /// Throws BudgetExhausted instead of answering once the budget is spent.
  virtual OracleResponse query(const Tensor& x) = 0;

  virtual std::uint64_t queries_used() const = 0;
  virtual std::uint64_t budget() const = 0;
};

/// The standard oracle: softmax probabilities of a held model. The model
/// stays private to keep the attack path honest.
class ModelOracle final : public Oracle {
public:
  ModelOracle(Model m, std::uint64_t budget);
  ModelOracle(const ModelOracle&) = delete;
  ModelOracle& operator=(const ModelOracle&) = delete;

  OracleResponse query(const Tensor& x) override;
  std::uint64_t queries_used() const override { return used_; }
  std::uint64_t budget() const override { return budget_; }

private:
  Model model_;
  std::uint64_t used_ = 0;
  std::uint64_t budget_ = 0;
};

/// Argmax class of a response; ties resolve to the lowest index.
int top_label(const OracleResponse& r);

/// Targeted score read off a response: -log p_target, clamped away from
/// infinity when the probability underflows.
double response_loss(const OracleResponse& r, int target);

struct AttackConfig {
  double sigma = 0.1;       // finite-difference smoothing radius
  int q = 14;               // random directions per gradient estimate
  double gamma = 0.015;     // sign-step size
  double eta = 0.01;        // momentum coefficient
  int max_iters = 600;      // iteration cap; the budget usually binds first
  double epsilon_l2 = 0.45; // L2 radius of the feasible ball around x
  std::uint64_t budget = 600;
  std::uint64_t seed = 0;
  int target = 6;
};

void validate_attack_config(const AttackConfig& cfg);

struct AttackResult {
  bool success = false;
  std::uint64_t queries_used = 0;
  std::optional<Tensor> adversarial;  // present only on success
  double l2_distortion = 0.0;         // vs. the original input
  int iterations = 0;                 // completed update iterations
};

/// One oracle call returning the targeted loss at x.
double query_loss(Oracle& oracle, const Tensor& x, int target);

/// Gradient estimate from finite differences along `q` random unit
/// directions. Standalone form: spends q+1 queries (base plus
/// directions). The `_with_base` form reuses a cached base loss and
/// spends exactly q.
Tensor rgf_estimate(Oracle& oracle, const Tensor& x, int target, double sigma,
                    int q, Rng& rng);
Tensor rgf_estimate_with_base(Oracle& oracle, const Tensor& x,
                              double base_loss, int target, double sigma,
                              int q, Rng& rng);

/// x - gamma * sign(g) + eta * (x - x_prev), with sign(0) = 0.
Tensor momentum_step(const Tensor& x, const Tensor& x_prev,
                     const Tensor& g_hat, double gamma, double eta);

/// Projects the perturbation x - x_orig onto the L2 ball of radius
/// epsilon_l2, then clips into [0, 1]. The bound holds exactly and the
/// operation is idempotent.
Tensor project_l2(const Tensor& x, const Tensor& x_orig, double epsilon_l2);

/// Full attack: add the initial perturbation if given, check the oracle,
/// then iterate estimate -> momentum step -> projection -> check until
/// success, the iteration cap, or the query budget. Every oracle call is
/// counted; distortion is measured against the original x.
AttackResult attack(Oracle& oracle, const Tensor& x,
                    const std::optional<Perturbation>& init,
                    const AttackConfig& cfg);

/// Same loop started from the clean image.
AttackResult attack_baseline_rgf(Oracle& oracle, const Tensor& x,
                                 const AttackConfig& cfg);

/// Same loop started from a uniform random perturbation rescaled to the
/// given L-infinity norm (typically the norm of a trained perturbation).
AttackResult attack_baseline_random(Oracle& oracle, const Tensor& x,
                                    const AttackConfig& cfg,
                                    double norm_match);

/// Uniform random vector rescaled so its L-infinity norm equals
/// norm_match bit-exactly. The draw used by the random baseline.
Tensor random_linf_init(Rng& rng, std::size_t dim, double norm_match);

}  // namespace mapattack
