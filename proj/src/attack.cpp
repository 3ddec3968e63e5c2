#include "mapattack/attack.hpp"

#include <algorithm>
#include <cmath>

#include "mapattack/errors.hpp"

namespace mapattack {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_valid_image(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("attack: input must be rank-1");
  ensure_finite(x, "attack input");
  for (double v : x.data) {
    if (v < 0.0 || v > 1.0) {
      throw DomainError("attack: input values must lie in [0, 1]");
    }
  }
}

AttackResult finish_failure(const Oracle& oracle, const Tensor& x_cur,
                            const Tensor& x_orig, int iterations) {
  AttackResult r;
  r.success = false;
  r.queries_used = oracle.queries_used();
  r.l2_distortion = l2_norm(sub(x_cur, x_orig));
  r.iterations = iterations;
  return r;
}

AttackResult finish_success(const Oracle& oracle, Tensor x_adv,
                            const Tensor& x_orig, int iterations) {
  AttackResult r;
  r.success = true;
  r.queries_used = oracle.queries_used();
  r.l2_distortion = l2_norm(sub(x_adv, x_orig));
  r.iterations = iterations;
  r.adversarial = std::move(x_adv);
  return r;
}

// Shared attack loop. `init_delta`, when present, is added to x up front
// (then clipped into range) before the first oracle check.
AttackResult attack_core(Oracle& oracle, const Tensor& x,
                         const std::optional<Tensor>& init_delta,
                         const AttackConfig& cfg, Rng& rng) {
  validate_attack_config(cfg);
  require_valid_image(x);

  const Tensor x_orig = x;
  Tensor x_cur = init_delta ? clip01(add(x, *init_delta)) : x;

  // Initial classification check; its loss doubles as the first
  // finite-difference base value.
  OracleResponse resp;
  try {
    resp = oracle.query(x_cur);
  } catch (const BudgetExhausted&) {
    return finish_failure(oracle, x_cur, x_orig, 0);
  }
  if (top_label(resp) == cfg.target) {
    return finish_success(oracle, std::move(x_cur), x_orig, 0);
  }

  double base = response_loss(resp, cfg.target);
  Tensor x_prev = x_cur;  // first momentum term vanishes

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    Tensor x_next;
    try {
      const Tensor g = rgf_estimate_with_base(oracle, x_cur, base, cfg.target,
                                              cfg.sigma, cfg.q, rng);
      x_next = project_l2(momentum_step(x_cur, x_prev, g, cfg.gamma, cfg.eta),
                          x_orig, cfg.epsilon_l2);
      resp = oracle.query(x_next);
    } catch (const BudgetExhausted&) {
      return finish_failure(oracle, x_cur, x_orig, iter - 1);
    }
    x_prev = std::move(x_cur);
    x_cur = std::move(x_next);
    base = response_loss(resp, cfg.target);
    if (top_label(resp) == cfg.target) {
      return finish_success(oracle, std::move(x_cur), x_orig, iter);
    }
  }
  return finish_failure(oracle, x_cur, x_orig, cfg.max_iters);
}

}  // namespace

ModelOracle::ModelOracle(Model m, std::uint64_t budget)
    : model_(std::move(m)), budget_(budget) {
  validate_model(model_);
  if (budget_ == 0) {
    throw ConfigError("oracle: budget must be at least 1");
  }
}

OracleResponse ModelOracle::query(const Tensor& x) {
  if (used_ >= budget_) throw BudgetExhausted(used_);
  ++used_;
  if (x.rank() != 1 || x.extent(0) != model_.input_dim) {
    throw ShapeError("oracle: query width mismatch");
  }
  Tensor row(std::vector<std::size_t>{1, model_.input_dim}, x.data);
  const Tensor logits = forward(model_, row);

  // Stable softmax; probabilities are all the caller ever sees.
  OracleResponse r;
  r.probs.resize(model_.class_count);
  double mx = logits.data[0];
  for (double v : logits.data) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t c = 0; c < r.probs.size(); ++c) {
    r.probs[c] = std::exp(logits.data[c] - mx);
    sum += r.probs[c];
  }
  for (double& p : r.probs) p /= sum;
  return r;
}

int top_label(const OracleResponse& r) {
  if (r.probs.empty()) throw DomainError("oracle response: empty");
  std::size_t best = 0;
  for (std::size_t c = 1; c < r.probs.size(); ++c) {
    if (r.probs[c] > r.probs[best]) best = c;
  }
  return static_cast<int>(best);
}

double response_loss(const OracleResponse& r, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= r.probs.size()) {
    throw DomainError("oracle response: target class out of range");
  }
  // Clamp keeps the loss finite when p underflows to zero.
  return -std::log(std::max(r.probs[target], 1e-300));
}

void validate_attack_config(const AttackConfig& cfg) {
  if (cfg.sigma <= 0.0 || cfg.gamma <= 0.0) {
    throw ConfigError("attack config: sigma and gamma must be positive");
  }
  if (cfg.eta < 0.0) throw ConfigError("attack config: eta must be >= 0");
  if (cfg.q < 1) throw ConfigError("attack config: q must be >= 1");
  if (cfg.budget < 1) throw ConfigError("attack config: budget must be >= 1");
  if (cfg.max_iters < 0 || cfg.epsilon_l2 < 0.0 || cfg.target < 0) {
    throw ConfigError("attack config: bad bounds");
  }
}

double query_loss(Oracle& oracle, const Tensor& x, int target) {
  return response_loss(oracle.query(x), target);
}

Tensor rgf_estimate(Oracle& oracle, const Tensor& x, int target, double sigma,
                    int q, Rng& rng) {
  const double base = query_loss(oracle, x, target);
  return rgf_estimate_with_base(oracle, x, base, target, sigma, q, rng);
}

Tensor rgf_estimate_with_base(Oracle& oracle, const Tensor& x,
                              double base_loss, int target, double sigma,
                              int q, Rng& rng) {
  if (q < 1) throw ConfigError("rgf: q must be >= 1");
  if (sigma <= 0.0) throw ConfigError("rgf: sigma must be positive");
  const std::size_t dim = x.size();
  Tensor g = Tensor::zeros(x.shape);
  Tensor u = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (int k = 0; k < q; ++k) {
    rng.fill_unit_direction(u.data);
    for (std::size_t i = 0; i < dim; ++i) {
      probe.data[i] = x.data[i] + sigma * u.data[i];
    }
    const double diff = (query_loss(oracle, probe, target) - base_loss) / sigma;
    for (std::size_t i = 0; i < dim; ++i) g.data[i] += diff * u.data[i];
  }
  const double inv_q = 1.0 / static_cast<double>(q);
  for (double& v : g.data) v *= inv_q;
  return g;
}

Tensor momentum_step(const Tensor& x, const Tensor& x_prev,
                     const Tensor& g_hat, double gamma, double eta) {
  if (!x.same_shape(x_prev) || !x.same_shape(g_hat)) {
    throw ShapeError("momentum_step: shape mismatch");
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = x.data[i] - gamma * sign(g_hat.data[i]) +
                  eta * (x.data[i] - x_prev.data[i]);
  }
  return out;
}

Tensor project_l2(const Tensor& x, const Tensor& x_orig, double epsilon_l2) {
  if (!x.same_shape(x_orig)) throw ShapeError("project_l2: shape mismatch");
  if (epsilon_l2 < 0.0) throw DomainError("project_l2: negative radius");

  const Tensor delta = sub(x, x_orig);
  const double norm = l2_norm(delta);
  const bool in_range = std::all_of(x.data.begin(), x.data.end(), [](double v) {
    return v >= 0.0 && v <= 1.0;
  });
  // Feasible points pass through untouched, which also makes the
  // operation bit-exactly idempotent.
  if (norm <= epsilon_l2 && in_range) return x;

  // Reassembling x_orig + s*delta rounds, so tighten s until the bound as
  // actually measured on the output holds. Clipping only moves components
  // toward x_orig and never re-breaks it.
  double s = norm > epsilon_l2 ? epsilon_l2 / norm : 1.0;
  while (true) {
    const Tensor out = clip01(add(x_orig, scale(delta, s)));
    if (l2_norm(sub(out, x_orig)) <= epsilon_l2) return out;
    s = std::nextafter(s, 0.0);
  }
}

AttackResult attack(Oracle& oracle, const Tensor& x,
                    const std::optional<Perturbation>& init,
                    const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  std::optional<Tensor> delta;
  if (init) {
    if (init->target != cfg.target) {
      throw DomainError("attack: perturbation was trained for target " +
                        std::to_string(init->target) + ", attack wants " +
                        std::to_string(cfg.target));
    }
    if (init->v.size() != x.size()) {
      throw ShapeError("attack: perturbation width mismatch");
    }
    delta = init->v;
  }
  return attack_core(oracle, x, delta, cfg, rng);
}

AttackResult attack_baseline_rgf(Oracle& oracle, const Tensor& x,
                                 const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  return attack_core(oracle, x, std::nullopt, cfg, rng);
}

AttackResult attack_baseline_random(Oracle& oracle, const Tensor& x,
                                    const AttackConfig& cfg,
                                    double norm_match) {
  if (norm_match < 0.0) {
    throw DomainError("random baseline: norm_match must be >= 0");
  }
  Rng rng(cfg.seed);
  if (norm_match == 0.0) {
    return attack_core(oracle, x, std::nullopt, cfg, rng);
  }
  return attack_core(oracle, x, random_linf_init(rng, x.size(), norm_match),
                     cfg, rng);
}

Tensor random_linf_init(Rng& rng, std::size_t dim, double norm_match) {
  Tensor delta = Tensor::zeros({dim});
  if (norm_match == 0.0) return delta;
  double max_abs = 0.0;
  while (max_abs == 0.0) {
    for (double& v : delta.data) v = rng.uniform(-1.0, 1.0);
    max_abs = linf_norm(delta);
  }
  // Dividing by the max first makes the largest component exactly
  // +-norm_match; every other ratio is <= 1, so the scaled values never
  // exceed the bound.
  for (double& v : delta.data) v = (v / max_abs) * norm_match;
  return delta;
}

}  // namespace mapattack
