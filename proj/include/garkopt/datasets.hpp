#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "garkopt/errors.hpp"
#include "garkopt/gark.hpp"
#include "garkopt/matrix.hpp"
#include "garkopt/nn.hpp"

namespace garkopt {

using Vec3 = std::array<double, 3>;

/// Defaults are the conventional chaotic regime (rho = 28, beta = 8/3).
struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double dt = 0.01;
  Vec3 x0 = {1.0, 1.0, 1.0};
  std::size_t n_points = 10000;
  std::size_t transient_skip = 1000;
};

inline Vec3 lorenz63_rhs(const Vec3& s, const LorenzParams& lp) {
  const auto [x, y, z] = s;
  return {lp.sigma * (y - x), x * (lp.rho - z) - y, x * y - lp.beta * z};
}

/// Per-column affine normalization x -> (x - mean) / std.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardization fit(const Matrix& m) {
    Standardization s;
    const auto n = static_cast<double>(m.rows());
    s.mean.assign(m.cols(), 0.0);
    s.stddev.assign(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) s.mean[j] += m(i, j);
    for (auto& mu : s.mean) mu /= n;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) {
        const double e = m(i, j) - s.mean[j];
        s.stddev[j] += e * e;
      }
    for (auto& sd : s.stddev) {
      sd = std::sqrt(sd / n);
      if (sd == 0.0) sd = 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = (m(i, j) - mean[j]) / stddev[j];
    return out;
  }

  Matrix invert(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * stddev[j] + mean[j];
    return out;
  }
};

struct LorenzData {
  Batch pairs;  // inputs S_n, targets S_{n+1}, raw units
  Standardization stats;

  Batch standardized() const {
    return {stats.apply(pairs.inputs), stats.apply(pairs.targets), {}};
  }
};

/// One-step-ahead pairs along a trajectory integrated with classical RK4
/// at step dt, after discarding transient_skip steps.
inline LorenzData lorenz63_generate(const LorenzParams& lp) {
  if (!(lp.dt > 0.0)) throw DomainError("dt must be positive");
  if (lp.n_points < 2) throw DomainError("n_points must be at least 2");

  auto rk4 = [&](const Vec3& s) {
    auto axpy = [](const Vec3& a, double c, const Vec3& b) {
      return Vec3{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]};
    };
    const double h = lp.dt;
    const Vec3 k1 = lorenz63_rhs(s, lp);
    const Vec3 k2 = lorenz63_rhs(axpy(s, 0.5 * h, k1), lp);
    const Vec3 k3 = lorenz63_rhs(axpy(s, 0.5 * h, k2), lp);
    const Vec3 k4 = lorenz63_rhs(axpy(s, h, k3), lp);
    Vec3 out;
    for (int i = 0; i < 3; ++i) out[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (double v : out)
      if (!std::isfinite(v)) throw DivergenceError("Lorenz trajectory became non-finite");
    return out;
  };

  Vec3 s = lp.x0;
  for (std::size_t k = 0; k < lp.transient_skip; ++k) s = rk4(s);

  LorenzData data;
  data.pairs.inputs = Matrix(lp.n_points, 3);
  data.pairs.targets = Matrix(lp.n_points, 3);
  for (std::size_t k = 0; k < lp.n_points; ++k) {
    const Vec3 next = rk4(s);
    for (int j = 0; j < 3; ++j) {
      data.pairs.inputs(k, j) = s[j];
      data.pairs.targets(k, j) = next[j];
    }
    s = next;
  }
  data.stats = Standardization::fit(data.pairs.inputs);
  return data;
}

// ---------------------------------------------------------------------------
// NIST Gauss3

struct Gauss3Params {
  double b1 = 94.9, b2 = 0.009, b3 = 90.1, b4 = 113.0, b5 = 20.0, b6 = 73.8, b7 = 140.0, b8 = 20.0;
  double x_min = 0.0;
  double x_max = 250.0;
};

inline double gauss3_eval(double x, const Gauss3Params& g = {}) {
  const double u = (x - g.b4) / g.b5;
  const double w = (x - g.b7) / g.b8;
  return g.b1 * std::exp(-g.b2 * x) + g.b3 * std::exp(-u * u) + g.b6 * std::exp(-w * w);
}

struct Gauss3Data {
  Batch batch;  // inputs scaled to [0, 1], targets standardized
  double target_mean = 0.0;
  double target_std = 1.0;

  double denormalize(double y) const { return y * target_std + target_mean; }
};

/// n equispaced points on [0, 250].
inline Gauss3Data gauss3_dataset(std::size_t n, const Gauss3Params& g = {}) {
  if (n < 2) throw DomainError("gauss3 dataset needs at least 2 points");
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = g.x_min + (g.x_max - g.x_min) * static_cast<double>(i) / static_cast<double>(n - 1);
    x(i, 0) = (xi - g.x_min) / (g.x_max - g.x_min);
    y(i, 0) = gauss3_eval(xi, g);
  }
  const auto st = Standardization::fit(y);
  return {Batch{x, st.apply(y), {}}, st.mean[0], st.stddev[0]};
}

// ---------------------------------------------------------------------------
// Two spirals

struct SpiralParams {
  std::size_t n_points = 1000;
  double noise_std = 0.05;
  double turns = 1.5;
  std::uint64_t seed = 0;
};

/// Archimedean spirals: class k in {0, 1} at angle k*pi + u*turns*2pi and
/// radius u, u uniform on (0, 1]. Each u is shared by one point of each
/// class, so the classes are balanced and (without noise) antipodal.
inline Batch spiral_dataset(const SpiralParams& sp) {
  if (sp.n_points == 0 || sp.n_points % 2 != 0) throw DomainError("spiral n_points must be even");
  if (sp.noise_std < 0.0) throw DomainError("noise_std must be nonnegative");
  std::mt19937_64 rng(sp.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  constexpr double pi = 3.14159265358979323846;

  Batch b;
  b.inputs = Matrix(sp.n_points, 2);
  b.labels.resize(sp.n_points);
  for (std::size_t i = 0; i < sp.n_points / 2; ++i) {
    const double u = 1.0 - unif(rng);
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t row = 2 * i + k;
      const double phi = static_cast<double>(k) * pi + u * sp.turns * 2.0 * pi;
      const double nx = sp.noise_std * noise(rng);
      const double ny = sp.noise_std * noise(rng);
      b.inputs(row, 0) = u * std::cos(phi) + nx;
      b.inputs(row, 1) = u * std::sin(phi) + ny;
      b.labels[row] = k;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Batching

inline Batch select_rows(const Batch& b, std::span<const std::size_t> rows) {
  Batch out;
  out.inputs = Matrix(rows.size(), b.inputs.cols());
  if (!b.targets.empty()) out.targets = Matrix(rows.size(), b.targets.cols());
  if (!b.labels.empty()) out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::copy(b.inputs.row(r).begin(), b.inputs.row(r).end(), out.inputs.row(i).begin());
    if (!b.targets.empty())
      std::copy(b.targets.row(r).begin(), b.targets.row(r).end(), out.targets.row(i).begin());
    if (!b.labels.empty()) out.labels[i] = b.labels[r];
  }
  return out;
}

/// Leading `fraction` of the rows, and the rest.
inline std::pair<Batch, Batch> split_rows(const Batch& b, double fraction) {
  const auto cut = static_cast<std::size_t>(fraction * static_cast<double>(b.size()));
  std::vector<std::size_t> head(cut), tail(b.size() - cut);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), cut);
  return {select_rows(b, head), select_rows(b, tail)};
}

/// Optional shuffle, then a contiguous split into k parts whose sizes
/// differ by at most one.
inline std::vector<Batch> make_batches(const Batch& b, std::size_t k, std::uint64_t seed,
                                       bool shuffle) {
  const std::size_t n = b.size();
  if (k == 0 || k > n) throw DimensionError("batch count must lie in [1, n_samples]");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  std::vector<Batch> out;
  out.reserve(k);
  std::size_t start = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = n / k + (i < n % k ? 1 : 0);
    out.push_back(select_rows(b, std::span<const std::size_t>(perm).subspan(start, len)));
    start += len;
  }
  return out;
}

/// One sample per row: inputs, then targets (or the class label).
inline void write_dataset_csv(const Batch& b, std::ostream& os) {
  for (std::size_t j = 0; j < b.inputs.cols(); ++j) os << (j ? "," : "") << "x" << j;
  if (b.classification()) {
    os << ",label";
  } else {
    for (std::size_t j = 0; j < b.targets.cols(); ++j) os << ",y" << j;
  }
  os << '\n';
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < b.inputs.cols(); ++j) os << (j ? "," : "") << format_real(b.inputs(i, j));
    if (b.classification()) {
      os << ',' << b.labels[i];
    } else {
      for (std::size_t j = 0; j < b.targets.cols(); ++j) os << ',' << format_real(b.targets(i, j));
    }
    os << '\n';
  }
}

}  // namespace garkopt
