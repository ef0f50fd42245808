#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "garkopt/core.hpp"
#include "garkopt/errors.hpp"
#include "garkopt/gark.hpp"

namespace garkopt {

/// Parameters of the linearized one-step maps. The gradient is linearized as
/// grad L(theta) ~ lambda * theta; lambda_imag != 0 selects a complex scan.
struct StabilityParams {
  double h = 1e-4;
  double d = 1053.6;
  double r = 1053.6;
  double p = 10.005;
  double q = 10.005;
  double lambda = 1.0;
  double epsilon = kDefaultEpsilon;
  double lambda_imag = 0.0;

  void validate() const {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    for (double x : {h, d, r, p, q, lambda, epsilon, lambda_imag})
      if (!std::isfinite(x)) throw DomainError("stability parameters must be finite");
  }
};

template <typename T>
using Matrix3T = std::array<std::array<T, 3>, 3>;
using Matrix3 = Matrix3T<double>;
using Eigenvalues = std::array<std::complex<double>, 3>;

enum class Scheme { forward_euler, imex_euler };

/// Acting on (theta, m, v).
template <typename T = double>
Matrix3T<T> fe_stability_matrix(const StabilityParams& sp, T lambda) {
  const double se = std::sqrt(sp.epsilon);
  Matrix3T<T> a{};
  a[0] = {T(1.0), T(-sp.h / se), T(0.0)};
  a[1] = {T(sp.h * sp.d) * lambda, T(1.0 - sp.h * sp.r), T(0.0)};
  a[2] = {T(0.0), T(0.0), T(1.0 - sp.h * sp.q)};
  return a;
}

inline Matrix3 fe_stability_matrix(const StabilityParams& sp) {
  return fe_stability_matrix<double>(sp, sp.lambda);
}

template <typename T = double>
Matrix3T<T> imex_euler_stability_matrix(const StabilityParams& sp, T lambda) {
  const double se = std::sqrt(sp.epsilon);
  const double h = sp.h;
  Matrix3T<T> a{};
  a[0] = {T(1.0) - T(sp.d * h * h / se) * lambda, T(-h * (1.0 - h * sp.r) / se), T(0.0)};
  a[1] = {T(sp.d * h) * lambda, T(1.0 - h * sp.r), T(0.0)};
  a[2] = {T(0.0), T(0.0), T(1.0 - h * sp.q)};
  return a;
}

inline Matrix3 imex_euler_stability_matrix(const StabilityParams& sp) {
  return imex_euler_stability_matrix<double>(sp, sp.lambda);
}

namespace detail {

inline void sort_eigenvalues(Eigenvalues& ev) {
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
}

template <typename T>
std::array<std::complex<double>, 2> block_eigenvalues(const Matrix3T<T>& a) {
  using C = std::complex<double>;
  const C det = C(a[0][0]) * C(a[1][1]) - C(a[0][1]) * C(a[1][0]);
  const C half = 0.5 * (C(a[0][0]) + C(a[1][1]));
  // half^2 - det without the cancellation when the diagonal entries agree.
  const C gap = 0.5 * (C(a[0][0]) - C(a[1][1]));
  const C s = std::sqrt(gap * gap + C(a[0][1]) * C(a[1][0]));
  // Larger-modulus root first, the other from the product to avoid cancellation.
  const C l1 = std::abs(half + s) >= std::abs(half - s) ? half + s : half - s;
  const C l2 = l1 == C(0.0) ? C(0.0) : det / l1;
  return {l1, l2};
}

}  // namespace detail

namespace detail {

/// Orders a root pair from its closed form: the larger-modulus root is taken
/// from the formula, the other from the product of the roots.
inline std::array<std::complex<double>, 2> stable_pair(std::complex<double> plus,
                                                       std::complex<double> minus,
                                                       std::complex<double> product) {
  const auto big = std::abs(plus) >= std::abs(minus) ? plus : minus;
  return {big, big == 0.0 ? minus : product / big};
}

}  // namespace detail

/// Closed-form eigenvalues of the forward Euler matrix:
///   1 - h q,  1 - h r / 2 +- sqrt(h^2 r^2 eps - 4 d h^2 lambda sqrt(eps)) / (2 sqrt(eps)).
/// The block pair has product 1 - h r + d h^2 lambda / sqrt(eps). Sorted by
/// real part (descending), ties by imaginary part.
inline Eigenvalues fe_eigenvalues(const StabilityParams& sp) {
  using C = std::complex<double>;
  const double se = std::sqrt(sp.epsilon);
  const double h = sp.h;
  const C rad(h * h * sp.r * sp.r * sp.epsilon - 4.0 * sp.d * h * h * sp.lambda * se, 0.0);
  const C root = std::sqrt(rad) / (2.0 * se);
  const C centre(1.0 - 0.5 * h * sp.r);
  const auto pair = detail::stable_pair(centre + root, centre - root,
                                        C(1.0 - h * sp.r + sp.d * h * h * sp.lambda / se));
  Eigenvalues ev{C(1.0 - h * sp.q), pair[0], pair[1]};
  detail::sort_eigenvalues(ev);
  return ev;
}

/// Closed-form eigenvalues of the IMEX Euler matrix:
///   1 - h q,  (-b +- sqrt(b^2 - 4 (eps^2 - h r eps^2))) / (2 eps)
/// with b = d h^2 lambda sqrt(eps) + h r eps - 2 eps. With c = b + 2 eps the
/// radicand equals c^2 - 4 d h^2 lambda eps sqrt(eps), which is evaluated in
/// that form because b^2 and 4 eps^2 cancel for small h. The block pair has
/// product 1 - h r. Same ordering.
inline Eigenvalues imex_euler_eigenvalues(const StabilityParams& sp) {
  using C = std::complex<double>;
  const double eps = sp.epsilon;
  const double se = std::sqrt(eps);
  const double h = sp.h;
  const double c = sp.d * h * h * sp.lambda * se + h * sp.r * eps;
  const C rad(c * c - 4.0 * sp.d * h * h * sp.lambda * eps * se, 0.0);
  const C root = std::sqrt(rad) / (2.0 * eps);
  const C centre(1.0 - c / (2.0 * eps));
  const auto pair = detail::stable_pair(centre + root, centre - root, C(1.0 - h * sp.r));
  Eigenvalues ev{C(1.0 - h * sp.q), pair[0], pair[1]};
  detail::sort_eigenvalues(ev);
  return ev;
}

/// Eigenvalues of a matrix whose third row and column are decoupled (both
/// linearized schemes have this structure).
template <typename T>
Eigenvalues block_matrix_eigenvalues(const Matrix3T<T>& a) {
  if (a[0][2] != T(0.0) || a[1][2] != T(0.0) || a[2][0] != T(0.0) || a[2][1] != T(0.0))
    throw DomainError("matrix is not block triangular in (theta, m) x v");
  const auto blk = detail::block_eigenvalues(a);
  Eigenvalues ev{std::complex<double>(a[2][2]), blk[0], blk[1]};
  detail::sort_eigenvalues(ev);
  return ev;
}

template <typename T>
double spectral_radius(const Matrix3T<T>& a) {
  double rho = 0.0;
  for (const auto& l : block_matrix_eigenvalues(a)) rho = std::max(rho, std::abs(l));
  return rho;
}

inline Matrix3 stability_matrix(Scheme scheme, const StabilityParams& sp) {
  return scheme == Scheme::forward_euler ? fe_stability_matrix(sp) : imex_euler_stability_matrix(sp);
}

/// Spectral radius for the scheme, switching to complex arithmetic in the
/// (theta, m) block when lambda has an imaginary part.
inline double scheme_spectral_radius(Scheme scheme, const StabilityParams& sp) {
  if (sp.lambda_imag == 0.0) return spectral_radius(stability_matrix(scheme, sp));
  const std::complex<double> lam(sp.lambda, sp.lambda_imag);
  return scheme == Scheme::forward_euler ? spectral_radius(fe_stability_matrix(sp, lam))
                                         : spectral_radius(imex_euler_stability_matrix(sp, lam));
}

// ---------------------------------------------------------------------------
// Region scans

struct ScanAxis {
  std::string name;  // h, d, r, p, q, lambda (= lambda_re), lambda_im
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 1;

  double value(std::size_t i) const {
    if (count <= 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
};

struct GridCell {
  double x;
  double y;
  double spectral_radius;
};

struct StabilityGrid {
  ScanAxis axis1;
  ScanAxis axis2;
  /// Row-major: axis1 is the outer index, axis2 the inner one.
  std::vector<GridCell> cells;

  double stable_fraction() const {
    if (cells.empty()) return 0.0;
    const auto stable = std::count_if(cells.begin(), cells.end(),
                                      [](const GridCell& c) { return c.spectral_radius <= 1.0; });
    return static_cast<double>(stable) / static_cast<double>(cells.size());
  }
};

inline double& stability_param_ref(StabilityParams& sp, const std::string& name) {
  if (name == "h") return sp.h;
  if (name == "d") return sp.d;
  if (name == "r") return sp.r;
  if (name == "p") return sp.p;
  if (name == "q") return sp.q;
  if (name == "lambda" || name == "lambda_re") return sp.lambda;
  if (name == "lambda_im") return sp.lambda_imag;
  throw AxisError("unknown scan axis '" + name + "' (expected h, d, r, p, q, lambda, lambda_im)");
}

inline StabilityGrid stability_region_scan(Scheme scheme, const StabilityParams& base,
                                           const ScanAxis& axis1, const ScanAxis& axis2) {
  base.validate();
  {
    StabilityParams probe = base;
    double* a = &stability_param_ref(probe, axis1.name);
    double* b = &stability_param_ref(probe, axis2.name);
    if (a == b) throw AxisError("scan axes must name distinct parameters");
  }
  if (axis1.count == 0 || axis2.count == 0) throw AxisError("axis counts must be positive");

  StabilityGrid grid{axis1, axis2, {}};
  grid.cells.reserve(axis1.count * axis2.count);
  for (std::size_t i = 0; i < axis1.count; ++i) {
    for (std::size_t j = 0; j < axis2.count; ++j) {
      StabilityParams sp = base;
      const double x = axis1.value(i);
      const double y = axis2.value(j);
      stability_param_ref(sp, axis1.name) = x;
      stability_param_ref(sp, axis2.name) = y;
      grid.cells.push_back({x, y, scheme_spectral_radius(scheme, sp)});
    }
  }
  return grid;
}

inline void write_grid_csv(const StabilityGrid& grid, std::ostream& os) {
  os << "axis1,axis2,spectral_radius\n";
  for (const auto& c : grid.cells)
    os << format_real(c.x) << ',' << format_real(c.y) << ',' << format_real(c.spectral_radius) << '\n';
}

}  // namespace garkopt
