#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "garkopt/core.hpp"
#include "garkopt/errors.hpp"
#include "garkopt/gark.hpp"
#include "garkopt/matrix.hpp"

namespace garkopt {

namespace detail {

inline void require_finite(const ParamVector& x, const char* what) {
  for (double e : x)
    if (!std::isfinite(e)) throw DivergenceError(std::string("non-finite ") + what);
}

inline void require_finite_state(const OptimizerState& s) {
  require_finite(s.theta, "theta");
  require_finite(s.m, "momentum");
  require_finite(s.v, "velocity");
}

/// -m / sqrt(v + eps), elementwise. Raises on a non-positive radicand.
inline ParamVector theta_slope(const ParamVector& m, const ParamVector& v, double eps) {
  ParamVector out(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double rad = v[k] + eps;
    if (!(rad > 0.0)) throw DivergenceError("non-positive radicand v + eps under square root");
    out[k] = -m[k] / std::sqrt(rad);
  }
  return out;
}

/// x + h * sum_j coeff[j] * slopes[j]
inline ParamVector combine(const ParamVector& x, double h, std::span<const double> coeff,
                           const std::vector<ParamVector>& slopes, std::size_t count) {
  ParamVector out = x;
  for (std::size_t j = 0; j < count; ++j) {
    const double c = coeff[j];
    if (c == 0.0) continue;
    const ParamVector& s = slopes[j];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += h * c * s[k];
  }
  return out;
}

}  // namespace detail

/// m0 = 0 and v0 = g0 squared, where g0 is the gradient at (t0, theta0).
/// Every method shares this initialization.
inline OptimizerState init_state(ParamVector theta0, LossOracle& oracle, double t0 = 0.0) {
  const ParamVector g = oracle.gradient(t0, theta0);
  OptimizerState s;
  s.theta = std::move(theta0);
  s.m.assign(s.theta.size(), 0.0);
  s.v.resize(s.theta.size());
  for (std::size_t k = 0; k < g.size(); ++k) s.v[k] = g[k] * g[k];
  s.t = t0;
  s.step = 0;
  s.grad_evals = 1;
  return s;
}

inline OptimizerState sgd_step(const OptimizerState& s, LossOracle& oracle, double h) {
  s.check_shape();
  const ParamVector g = oracle.gradient(s.t + h, s.theta);
  OptimizerState out = s;
  for (std::size_t k = 0; k < g.size(); ++k) out.theta[k] -= h * g[k];
  detail::require_finite(out.theta, "theta");
  out.t = s.t + h;
  ++out.step;
  ++out.grad_evals;
  return out;
}

/// Forward Euler on the full ODE.
inline OptimizerState fe_step(const OptimizerState& s, LossOracle& oracle, double h,
                              const OdeRates& rates) {
  s.check_shape();
  const ParamVector g = oracle.gradient(s.t, s.theta);
  const ParamVector dtheta = detail::theta_slope(s.m, s.v, rates.epsilon);
  OptimizerState out = s;
  for (std::size_t k = 0; k < g.size(); ++k) {
    out.theta[k] = s.theta[k] + h * dtheta[k];
    out.m[k] = s.m[k] + h * (rates.d * g[k] - rates.r * s.m[k]);
    out.v[k] = s.v[k] + h * (rates.p * g[k] * g[k] - rates.q * s.v[k]);
  }
  detail::require_finite_state(out);
  out.t = s.t + h;
  ++out.step;
  ++out.grad_evals;
  return out;
}

/// Adam without bias correction. The update uses m / sqrt(v + eps), the
/// same denominator as every other method here.
inline OptimizerState adam_step(const OptimizerState& s, LossOracle& oracle,
                                const HyperParams& hp) {
  s.check_shape();
  const ParamVector g = oracle.gradient(s.t + hp.h, s.theta);
  OptimizerState out = s;
  for (std::size_t k = 0; k < g.size(); ++k) {
    out.m[k] = hp.beta1 * s.m[k] + (1.0 - hp.beta1) * g[k];
    out.v[k] = hp.beta2 * s.v[k] + (1.0 - hp.beta2) * g[k] * g[k];
  }
  const ParamVector dtheta = detail::theta_slope(out.m, out.v, hp.epsilon);
  for (std::size_t k = 0; k < g.size(); ++k) out.theta[k] = s.theta[k] + hp.h * dtheta[k];
  detail::require_finite_state(out);
  out.t = s.t + hp.h;
  ++out.step;
  ++out.grad_evals;
  return out;
}

/// IMEX Trapezoidal Adam, written out stage by stage. The rates come from
/// the exponential beta map, 1/alpha_i = -log(beta_i) / h.
inline OptimizerState imex_trapezoidal_step(const OptimizerState& s, LossOracle& oracle,
                                            const HyperParams& hp) {
  s.check_shape();
  const OdeRates rates = rates_from_betas(hp);
  const double h = hp.h;
  const double eps = hp.epsilon;
  const std::size_t n = s.size();
  const double t_next = s.t + h;

  const ParamVector g1 = oracle.gradient(t_next, s.theta);
  ParamVector k1m(n), k1v(n);
  for (std::size_t k = 0; k < n; ++k) {
    k1m[k] = rates.d * g1[k] - rates.r * s.m[k];
    k1v[k] = rates.p * g1[k] * g1[k] - rates.q * s.v[k];
  }
  const ParamVector k1t = detail::theta_slope(s.m, s.v, eps);

  ParamVector theta2(n);
  for (std::size_t k = 0; k < n; ++k) theta2[k] = s.theta[k] + h * k1t[k];
  const ParamVector g2 = oracle.gradient(t_next, theta2);

  ParamVector k2m(n), k2v(n), m_half(n), v_half(n);
  for (std::size_t k = 0; k < n; ++k) {
    k2m[k] = rates.d * g2[k] - rates.r * (s.m[k] + h * k1m[k]);
    k2v[k] = rates.p * g2[k] * g2[k] - rates.q * (s.v[k] + h * k1v[k]);
    m_half[k] = s.m[k] + 0.5 * h * k1m[k] + 0.5 * h * k2m[k];
    v_half[k] = s.v[k] + 0.5 * h * k1v[k] + 0.5 * h * k2v[k];
  }
  const ParamVector k2t = detail::theta_slope(m_half, v_half, eps);

  OptimizerState out = s;
  for (std::size_t k = 0; k < n; ++k) {
    out.theta[k] = s.theta[k] + 0.5 * h * k1t[k] + 0.5 * h * k2t[k];
    out.m[k] = m_half[k];
    out.v[k] = v_half[k];
  }
  detail::require_finite_state(out);
  out.t = t_next;
  ++out.step;
  out.grad_evals += 2;
  return out;
}

/// Per-stage storage for one GARK step.
struct StageWorkspace {
  std::vector<ParamVector> m_explicit, v_explicit, theta_explicit;
  std::vector<ParamVector> m_implicit, v_implicit;
  std::vector<ParamVector> slope_m, slope_v;  // f at the explicit stages
  std::vector<ParamVector> slope_theta;       // g at the implicit stages
};

/// One step of a diagonally implicit GARK method on the partitioned Adam
/// ODE: y = (m, v) explicit, z = theta implicit. The theta-dynamics depend
/// on (m, v) only, so every stage is an explicit update; gradients are
/// evaluated once per explicit stage.
inline OptimizerState gark_step(const OptimizerState& s, LossOracle& oracle, double h,
                                const OdeRates& rates, const GarkTableau& tab,
                                StageWorkspace* workspace = nullptr) {
  require_valid(tab);
  s.check_shape();
  const std::size_t se = tab.explicit_stages();
  const std::size_t si = tab.implicit_stages();
  const std::size_t n = s.size();
  const auto ce = tab.c_explicit();
  const double eps = rates.epsilon;

  StageWorkspace local;
  StageWorkspace& w = workspace ? *workspace : local;
  w.m_explicit.assign(se, {});
  w.v_explicit.assign(se, {});
  w.theta_explicit.assign(se, {});
  w.slope_m.assign(se, {});
  w.slope_v.assign(se, {});
  w.m_implicit.assign(si, {});
  w.v_implicit.assign(si, {});
  w.slope_theta.assign(si, {});

  std::size_t implicit_done = 0;
  auto implicit_stage = [&](std::size_t i) {
    const std::size_t upto = std::min(i + 1, se);
    w.m_implicit[i] = detail::combine(s.m, h, tab.a_ie.row(i), w.slope_m, upto);
    w.v_implicit[i] = detail::combine(s.v, h, tab.a_ie.row(i), w.slope_v, upto);
    w.slope_theta[i] = detail::theta_slope(w.m_implicit[i], w.v_implicit[i], eps);
  };

  for (std::size_t i = 0; i < se; ++i) {
    w.m_explicit[i] = detail::combine(s.m, h, tab.a_ee.row(i), w.slope_m, i);
    w.v_explicit[i] = detail::combine(s.v, h, tab.a_ee.row(i), w.slope_v, i);
    w.theta_explicit[i] =
        detail::combine(s.theta, h, tab.a_ei.row(i), w.slope_theta, std::min(i, si));

    const ParamVector g = oracle.gradient(s.t + ce[i] * h, w.theta_explicit[i]);
    w.slope_m[i].resize(n);
    w.slope_v[i].resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      w.slope_m[i][k] = rates.d * g[k] - rates.r * w.m_explicit[i][k];
      w.slope_v[i][k] = rates.p * g[k] * g[k] - rates.q * w.v_explicit[i][k];
    }
    if (i < si) {
      implicit_stage(i);
      implicit_done = i + 1;
    }
  }
  for (std::size_t i = implicit_done; i < si; ++i) implicit_stage(i);

  OptimizerState out = s;
  out.m = detail::combine(s.m, h, tab.b_e, w.slope_m, se);
  out.v = detail::combine(s.v, h, tab.b_e, w.slope_v, se);
  out.theta = detail::combine(s.theta, h, tab.b_i, w.slope_theta, si);
  detail::require_finite_state(out);
  out.t = s.t + h;
  ++out.step;
  out.grad_evals += se;
  return out;
}

// ---------------------------------------------------------------------------
// Classical explicit Runge-Kutta on the unsplit ODE

struct ExplicitTableau {
  Matrix a;
  std::vector<double> b;

  std::size_t stages() const noexcept { return b.size(); }
  std::vector<double> c() const { return a.row_sums(); }
};

inline ExplicitTableau forward_euler_rk() { return {Matrix{{0.0}}, {1.0}}; }

inline ExplicitTableau heun_rk() { return {Matrix{{0.0, 0.0}, {1.0, 0.0}}, {0.5, 0.5}}; }

inline ExplicitTableau ssprk3_rk() {
  return {Matrix{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.25, 0.25, 0.0}},
          {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0}};
}

inline ExplicitTableau rk4_rk() {
  return {Matrix{{0.0, 0.0, 0.0, 0.0}, {0.5, 0.0, 0.0, 0.0}, {0.0, 0.5, 0.0, 0.0},
                 {0.0, 0.0, 1.0, 0.0}},
          {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0}};
}

inline ExplicitTableau builtin_explicit_rk(std::string_view name) {
  if (name == "fe") return forward_euler_rk();
  if (name == "heun") return heun_rk();
  if (name == "ssprk3") return ssprk3_rk();
  if (name == "rk4") return rk4_rk();
  throw UnknownTableau(std::string(name));
}

/// Explicit RK applied to (theta, m, v) as one state; the gradient is
/// evaluated at every stage's theta.
inline OptimizerState explicit_rk_step(const OptimizerState& s, LossOracle& oracle, double h,
                                       const OdeRates& rates, const ExplicitTableau& rk) {
  const std::size_t st = rk.stages();
  if (st == 0 || rk.a.rows() != st || rk.a.cols() != st)
    throw DimensionError("explicit tableau shape mismatch");
  for (std::size_t i = 0; i < st; ++i)
    for (std::size_t j = i; j < st; ++j)
      if (rk.a(i, j) != 0.0) throw InvalidTableau({"explicit RK matrix not strictly lower triangular"});
  s.check_shape();
  const auto c = rk.c();

  std::vector<ParamVector> kt(st), km(st), kv(st);
  for (std::size_t i = 0; i < st; ++i) {
    const ParamVector th = detail::combine(s.theta, h, rk.a.row(i), kt, i);
    const ParamVector m = detail::combine(s.m, h, rk.a.row(i), km, i);
    const ParamVector v = detail::combine(s.v, h, rk.a.row(i), kv, i);
    const ParamVector g = oracle.gradient(s.t + c[i] * h, th);
    kt[i] = detail::theta_slope(m, v, rates.epsilon);
    km[i].resize(g.size());
    kv[i].resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      km[i][k] = rates.d * g[k] - rates.r * m[k];
      kv[i][k] = rates.p * g[k] * g[k] - rates.q * v[k];
    }
  }
  OptimizerState out = s;
  out.theta = detail::combine(s.theta, h, rk.b, kt, st);
  out.m = detail::combine(s.m, h, rk.b, km, st);
  out.v = detail::combine(s.v, h, rk.b, kv, st);
  detail::require_finite_state(out);
  out.t = s.t + h;
  ++out.step;
  out.grad_evals += st;
  return out;
}

// ---------------------------------------------------------------------------
// Learning-rate schedules

struct LrSchedule {
  enum class Kind { constant, cyclic_triangular };
  Kind kind = Kind::constant;
  double base_lr = 1e-3;
  double max_lr = 1e-2;
  std::size_t period = 100;

  static LrSchedule constant(double lr) { return {Kind::constant, lr, lr, 2}; }
  static LrSchedule cyclic(double base, double max, std::size_t period) {
    return {Kind::cyclic_triangular, base, max, period};
  }

  void validate() const {
    if (!(base_lr > 0.0)) throw DomainError("base learning rate must be positive");
    if (kind == Kind::cyclic_triangular) {
      if (!(max_lr >= base_lr)) throw DomainError("cyclic schedule needs base_lr <= max_lr");
      if (period < 2) throw DomainError("cyclic schedule needs period >= 2");
    }
  }
};

/// Triangular cycle: linear ramp base -> max over period/2 epochs, then back.
inline double schedule_lr(const LrSchedule& s, std::size_t epoch) {
  if (s.kind == LrSchedule::Kind::constant) return s.base_lr;
  const double half = 0.5 * static_cast<double>(s.period);
  const double phase = static_cast<double>(epoch % s.period);
  const double frac = phase <= half ? phase / half : (static_cast<double>(s.period) - phase) / half;
  return s.base_lr + (s.max_lr - s.base_lr) * frac;
}

// ---------------------------------------------------------------------------
// Method selection

/// A discrete optimizer: which step rule, plus the tableau it needs.
struct Method {
  enum class Kind { sgd, fe, adam, imex_trapezoidal, gark, explicit_rk };
  Kind kind = Kind::adam;
  std::string name = "adam";
  std::optional<GarkTableau> gark;
  std::optional<ExplicitTableau> rk;

  /// Gradient evaluations per step.
  std::size_t stages() const {
    switch (kind) {
      case Kind::gark: return gark->explicit_stages();
      case Kind::explicit_rk: return rk->stages();
      case Kind::imex_trapezoidal: return 2;
      default: return 1;
    }
  }
};

inline Method make_gark_method(std::string name, GarkTableau tab) {
  require_valid(tab);
  Method m;
  m.kind = Method::Kind::gark;
  m.name = std::move(name);
  m.gark = std::move(tab);
  return m;
}

/// Names: sgd, fe, adam, imex-euler, imex-trapezoidal, heun, ssprk3, rk4,
/// ssprk3-lobattoIIIC, rk4-lobattoIIIC.
inline Method make_method(std::string_view name, const TableauTunables& tun = {}) {
  Method m;
  m.name = std::string(name);
  if (name == "sgd") {
    m.kind = Method::Kind::sgd;
  } else if (name == "fe") {
    m.kind = Method::Kind::fe;
  } else if (name == "adam") {
    m.kind = Method::Kind::adam;
  } else if (name == "imex-trapezoidal") {
    m.kind = Method::Kind::imex_trapezoidal;
  } else if (name == "imex-euler" || name == "ssprk3-lobattoIIIC" || name == "rk4-lobattoIIIC") {
    return make_gark_method(std::string(name), builtin_tableau(name, tun));
  } else if (name == "heun" || name == "ssprk3" || name == "rk4") {
    m.kind = Method::Kind::explicit_rk;
    m.rk = builtin_explicit_rk(name);
  } else {
    throw UnknownTableau(std::string(name));
  }
  return m;
}

/// Advances one step. ODE-derived methods take their rates from the
/// exponential beta map; adam uses the betas directly.
inline OptimizerState apply_step(const Method& method, const OptimizerState& s,
                                 LossOracle& oracle, const HyperParams& hp) {
  switch (method.kind) {
    case Method::Kind::sgd: return sgd_step(s, oracle, hp.h);
    case Method::Kind::adam: return adam_step(s, oracle, hp);
    case Method::Kind::imex_trapezoidal: return imex_trapezoidal_step(s, oracle, hp);
    case Method::Kind::fe: return fe_step(s, oracle, hp.h, rates_from_betas(hp));
    case Method::Kind::gark: return gark_step(s, oracle, hp.h, rates_from_betas(hp), *method.gark);
    case Method::Kind::explicit_rk:
      return explicit_rk_step(s, oracle, hp.h, rates_from_betas(hp), *method.rk);
  }
  throw Error("unreachable method kind");
}

}  // namespace garkopt
