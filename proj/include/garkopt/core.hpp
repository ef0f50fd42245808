#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "garkopt/errors.hpp"

namespace garkopt {

/// Numerical floor added under the square root of the velocity.
inline constexpr double kDefaultEpsilon = 1e-8;

using ParamVector = std::vector<double>;

/// Discrete Adam hyperparameters: step size (learning rate), the two
/// exponential decay factors and the square-root floor.
struct HyperParams {
  double h = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = kDefaultEpsilon;

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("learning rate h must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw DomainError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw DomainError("beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be positive");
  }
};

/// Continuous-time coefficients of the Adam ODE
///   theta' = -m / sqrt(v + eps)
///   m'     = d * grad - r * m
///   v'     = p * grad^2 - q * v
struct OdeRates {
  double d = 0.0;
  double r = 0.0;
  double p = 0.0;
  double q = 0.0;
  double epsilon = kDefaultEpsilon;

  bool finite() const {
    return std::isfinite(d) && std::isfinite(r) && std::isfinite(p) && std::isfinite(q) &&
           std::isfinite(epsilon);
  }
};

struct BetaPair {
  double beta1;
  double beta2;
};

namespace detail {

inline double rate_from_beta(double h, double beta, const char* which) {
  if (!(beta > 0.0 && beta < 1.0))
    throw DomainError(std::string(which) + " must lie in (0, 1) to define a finite rate");
  return -std::log(beta) / h;
}

}  // namespace detail

/// Exponential map: alpha_i = -h / log(beta_i), d = r = 1/alpha_1, p = q = 1/alpha_2.
inline OdeRates rates_from_betas(const HyperParams& hp) {
  if (!(hp.h > 0.0) || !std::isfinite(hp.h)) throw DomainError("learning rate h must be positive");
  const double r = detail::rate_from_beta(hp.h, hp.beta1, "beta1");
  const double q = detail::rate_from_beta(hp.h, hp.beta2, "beta2");
  return {r, r, q, q, hp.epsilon};
}

/// Inverse of rates_from_betas: beta1 = exp(-h r), beta2 = exp(-h q).
inline BetaPair betas_from_rates(double h, const OdeRates& rates) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("h must be positive");
  if (!rates.finite()) throw DomainError("rates must be finite");
  return {std::exp(-h * rates.r), std::exp(-h * rates.q)};
}

/// First-order map beta1 = 1 - h r, beta2 = 1 - h q. Under this
/// identification IMEX Euler on the ODE is exactly discrete Adam.
inline BetaPair first_order_beta_map(double h, const OdeRates& rates) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("h must be positive");
  if (!rates.finite()) throw DomainError("rates must be finite");
  if (h * rates.r >= 1.0) throw DomainError("h*r >= 1 puts beta1 outside [0, 1)");
  if (h * rates.q >= 1.0) throw DomainError("h*q >= 1 puts beta2 outside [0, 1)");
  if (h * rates.r < 0.0 || h * rates.q < 0.0) throw DomainError("negative rates put beta >= 1");
  return {1.0 - h * rates.r, 1.0 - h * rates.q};
}

/// Inverse of first_order_beta_map: d = r = (1 - beta1)/h, p = q = (1 - beta2)/h.
inline OdeRates rates_from_first_order_betas(const HyperParams& hp) {
  hp.validate();
  const double r = (1.0 - hp.beta1) / hp.h;
  const double q = (1.0 - hp.beta2) / hp.h;
  return {r, r, q, q, hp.epsilon};
}

/// Discrete trajectory point (theta_n, m_n, v_n, t_n).
struct OptimizerState {
  ParamVector theta;
  ParamVector m;
  ParamVector v;
  double t = 0.0;
  std::size_t step = 0;
  std::size_t grad_evals = 0;

  std::size_t size() const noexcept { return theta.size(); }

  void check_shape() const {
    if (m.size() != theta.size() || v.size() != theta.size())
      throw DimensionError("theta, m and v must have identical length");
  }
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Loss and gradient as a function of (time or batch position, parameters),
/// with a counter of gradient evaluations.
class LossOracle {
 public:
  using Fn = std::function<LossGrad(double t, std::span<const double> theta)>;

  LossOracle() = default;
  explicit LossOracle(Fn fn) : fn_(std::move(fn)) {}

  LossGrad evaluate(double t, std::span<const double> theta) {
    LossGrad out = fn_(t, theta);
    ++count_;
    if (out.grad.size() != theta.size())
      throw DimensionError("gradient length differs from parameter length");
    for (double g : out.grad)
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient");
    return out;
  }

  ParamVector gradient(double t, std::span<const double> theta) {
    return evaluate(t, theta).grad;
  }

  std::size_t evaluations() const noexcept { return count_; }
  void reset_counter() noexcept { count_ = 0; }

 private:
  Fn fn_;
  std::size_t count_ = 0;
};

}  // namespace garkopt
