#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "garkopt/errors.hpp"
#include "garkopt/matrix.hpp"

namespace garkopt {

/// Absolute tolerance for every row-sum / order-condition comparison.
inline constexpr double kTableauTolerance = 1e-12;

/// Two-way partitioned, diagonally implicit GARK tableau
///
///   c_E | A_EE  A_EI
///   c_I | A_IE  A_II
///   ----+-----------
///       | b_E   b_I
///
/// The abscissae are not stored: c_E = A_EE * 1 and c_I = A_II * 1.
struct GarkTableau {
  Matrix a_ee;  // s_E x s_E
  Matrix a_ei;  // s_E x s_I
  Matrix a_ie;  // s_I x s_E
  Matrix a_ii;  // s_I x s_I
  std::vector<double> b_e;
  std::vector<double> b_i;

  std::size_t explicit_stages() const noexcept { return b_e.size(); }
  std::size_t implicit_stages() const noexcept { return b_i.size(); }

  std::vector<double> c_explicit() const { return a_ee.row_sums(); }
  std::vector<double> c_implicit() const { return a_ii.row_sums(); }

  friend bool operator==(const GarkTableau&, const GarkTableau&) = default;
};

/// Throws DimensionError unless every block has the shape implied by
/// (s_E, s_I) = (|b_E|, |b_I|).
inline void check_tableau_shapes(const GarkTableau& t) {
  const std::size_t se = t.explicit_stages();
  const std::size_t si = t.implicit_stages();
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw DimensionError(std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" +
                           std::to_string(c));
  };
  if (se == 0 || si == 0) throw DimensionError("tableau needs at least one stage per partition");
  expect(t.a_ee, se, se, "A_EE");
  expect(t.a_ei, se, si, "A_EI");
  expect(t.a_ie, si, se, "A_IE");
  expect(t.a_ii, si, si, "A_II");
}

/// Every violated structural invariant, with its location. Empty means valid.
inline std::vector<std::string> validate_tableau(const GarkTableau& t) {
  check_tableau_shapes(t);
  std::vector<std::string> out;
  auto at = [](const char* name, std::size_t i, std::size_t j) {
    return std::string(name) + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
  };

  for (const auto* m : {&t.a_ee, &t.a_ei, &t.a_ie, &t.a_ii})
    for (double x : m->data())
      if (!std::isfinite(x)) {
        out.emplace_back("non-finite coefficient");
        return out;
      }

  // strict: zero for j >= i; weak: zero for j > i.
  auto triangular = [&](const Matrix& m, bool strict, const char* name) {
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = strict ? i : i + 1; j < m.cols(); ++j)
        if (m(i, j) != 0.0)
          out.push_back(std::string(name) +
                        (strict ? " not strictly lower triangular" : " not lower triangular") +
                        " at " + at(name, i, j));
  };
  triangular(t.a_ee, true, "A_EE");
  triangular(t.a_ei, true, "A_EI");
  triangular(t.a_ie, false, "A_IE");
  triangular(t.a_ii, false, "A_II");

  const auto ce = t.c_explicit();
  const auto ci = t.c_implicit();
  const auto ei = t.a_ei.row_sums();
  const auto ie = t.a_ie.row_sums();
  for (std::size_t i = 0; i < ce.size(); ++i)
    if (std::abs(ei[i] - ce[i]) > kTableauTolerance)
      out.push_back("internal consistency: row " + std::to_string(i) + " of A_EI sums to " +
                    std::to_string(ei[i]) + " but c_E = " + std::to_string(ce[i]));
  for (std::size_t i = 0; i < ci.size(); ++i)
    if (std::abs(ie[i] - ci[i]) > kTableauTolerance)
      out.push_back("internal consistency: row " + std::to_string(i) + " of A_IE sums to " +
                    std::to_string(ie[i]) + " but c_I = " + std::to_string(ci[i]));
  return out;
}

inline void require_valid(const GarkTableau& t) {
  auto v = validate_tableau(t);
  if (!v.empty()) throw InvalidTableau(std::move(v));
}

struct OrderReport {
  bool order1_satisfied = false;
  bool order2_satisfied = false;
  /// condition -> (expected - achieved)
  std::map<std::string, double> residuals;
};

/// Order conditions up to two. Assumes internal consistency, under which the
/// coupling conditions reduce to the per-partition ones.
inline OrderReport check_order_conditions(const GarkTableau& t) {
  require_valid(t);
  const auto ce = t.c_explicit();
  const auto ci = t.c_implicit();
  auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };

  OrderReport rep;
  rep.residuals["sum(b_E) = 1"] = 1.0 - sum(t.b_e);
  rep.residuals["sum(b_I) = 1"] = 1.0 - sum(t.b_i);
  rep.residuals["b_E.c_E = 1/2"] = 0.5 - dot(t.b_e, ce);
  rep.residuals["b_I.c_I = 1/2"] = 0.5 - dot(t.b_i, ci);

  auto ok = [&](const char* key) { return std::abs(rep.residuals.at(key)) <= kTableauTolerance; };
  rep.order1_satisfied = ok("sum(b_E) = 1") && ok("sum(b_I) = 1");
  rep.order2_satisfied = rep.order1_satisfied && ok("b_E.c_E = 1/2") && ok("b_I.c_I = 1/2");
  return rep;
}

// ---------------------------------------------------------------------------
// Built-in tableaus

/// IMEX Euler: forward Euler on (m, v), backward Euler on theta. Applied to
/// the Adam ODE this is discrete Adam.
inline GarkTableau imex_euler_tableau() {
  return {Matrix{{0.0}}, Matrix{{0.0}}, Matrix{{1.0}}, Matrix{{1.0}}, {1.0}, {1.0}};
}

/// Explicit trapezoidal (Heun) coupled with implicit trapezoidal
/// (Crank-Nicolson). Second order.
inline GarkTableau imex_trapezoidal_tableau() {
  return {Matrix{{0.0, 0.0}, {1.0, 0.0}}, Matrix{{0.0, 0.0}, {1.0, 0.0}},
          Matrix{{0.0, 0.0}, {0.5, 0.5}}, Matrix{{0.0, 0.0}, {0.5, 0.5}},
          {0.5, 0.5},                     {0.5, 0.5}};
}

/// Implicit block shared by the two Lobatto-based methods. It carries the
/// three-point Lobatto nodes (0, 1/2, 1) and weights (1/6, 2/3, 1/6). The
/// theta-dynamics of the Adam ODE do not depend on theta, so A_II never
/// enters an update; a diagonally implicit matrix with these nodes is stored
/// in place of the full Lobatto IIIC matrix.
inline Matrix lobatto_implicit_block() {
  return Matrix{{0.0, 0.0, 0.0}, {0.25, 0.25, 0.0}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}};
}

/// SSPRK3 on (m, v) coupled with three-stage Lobatto weights on theta.
/// l22 and l32 are the free entries A_IE[1][1] and A_IE[2][1]; the remaining
/// coupling coefficients are fixed by the third-order conditions, which
/// hold for every (l22, l32).
inline GarkTableau ssprk3_lobatto3c_tableau(double l22 = 0.2, double l32 = 0.1) {
  const double l33 = 2.0 - 8.0 * l22 - 2.0 * l32;
  GarkTableau t;
  t.a_ee = Matrix{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.25, 0.25, 0.0}};
  t.a_ei = Matrix{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.5, 0.0}};
  t.a_ie = Matrix{{0.0, 0.0, 0.0}, {0.5 - l22, l22, 0.0}, {1.0 - l32 - l33, l32, l33}};
  t.a_ii = lobatto_implicit_block();
  t.b_e = {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0};
  t.b_i = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  return t;
}

/// Classical RK4 on (m, v) coupled with three-stage Lobatto weights on
/// theta. alpha splits implicit stage 2 between explicit stages 1 and 2;
/// third order for every alpha and fourth order at alpha = 1/2.
inline GarkTableau rk4_lobatto3c_tableau(double alpha = 0.5) {
  GarkTableau t;
  t.a_ee = Matrix{{0.0, 0.0, 0.0, 0.0}, {0.5, 0.0, 0.0, 0.0}, {0.0, 0.5, 0.0, 0.0},
                  {0.0, 0.0, 1.0, 0.0}};
  t.a_ei = Matrix{{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {0.0, 0.5, 0.0}, {0.0, 1.0, 0.0}};
  t.a_ie = Matrix{{0.0, 0.0, 0.0, 0.0},
                  {0.5 - 0.5 * alpha, 0.5 * alpha, 0.0, 0.0},
                  {2.0 * alpha - 1.0, 1.0 - 2.0 * alpha, 1.0, 0.0}};
  t.a_ii = lobatto_implicit_block();
  t.b_e = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
  t.b_i = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  return t;
}

struct TableauTunables {
  double l22 = 0.2;
  double l32 = 0.1;
  double alpha = 0.5;
};

inline GarkTableau builtin_tableau(std::string_view name, const TableauTunables& tun = {}) {
  if (name == "imex-euler") return imex_euler_tableau();
  if (name == "imex-trapezoidal") return imex_trapezoidal_tableau();
  if (name == "ssprk3-lobattoIIIC") return ssprk3_lobatto3c_tableau(tun.l22, tun.l32);
  if (name == "rk4-lobattoIIIC") return rk4_lobatto3c_tableau(tun.alpha);
  throw UnknownTableau(std::string(name));
}

inline const std::vector<std::string>& builtin_tableau_names() {
  static const std::vector<std::string> names = {"imex-euler", "imex-trapezoidal",
                                                 "ssprk3-lobattoIIIC", "rk4-lobattoIIIC"};
  return names;
}

// ---------------------------------------------------------------------------
// Text format

/// Shortest-safe decimal: 17 significant digits always reparse to the same
/// double.
inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_tableau(const GarkTableau& t) {
  check_tableau_shapes(t);
  std::ostringstream os;
  auto row = [&](std::span<const double> r) {
    for (std::size_t j = 0; j < r.size(); ++j) os << (j ? " " : "") << format_real(r[j]);
    os << '\n';
  };
  auto block = [&](const char* name, const Matrix& m) {
    os << name << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) row(m.row(i));
  };
  os << "s_explicit " << t.explicit_stages() << '\n';
  os << "s_implicit " << t.implicit_stages() << '\n';
  block("A_EE", t.a_ee);
  block("A_EI", t.a_ei);
  block("A_IE", t.a_ie);
  block("A_II", t.a_ii);
  os << "b_E ";
  row(t.b_e);
  os << "b_I ";
  row(t.b_i);
  return os.str();
}

namespace detail {

struct TableauLine {
  std::size_t number;
  std::vector<std::string_view> tokens;
};

inline std::vector<TableauLine> tokenize_lines(std::string_view text) {
  std::vector<TableauLine> out;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    TableauLine tl{lineno, {}};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) tl.tokens.push_back(line.substr(i, j - i));
      i = j;
    }
    if (!tl.tokens.empty()) out.push_back(std::move(tl));
  }
  return out;
}

inline double parse_real(std::string_view tok, std::size_t line) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(line, "not a number: '" + std::string(tok) + "'");
  return x;
}

inline std::size_t parse_count(std::string_view tok, std::size_t line) {
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), n);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || n == 0)
    throw ParseError(line, "expected a positive stage count, got '" + std::string(tok) + "'");
  return n;
}

}  // namespace detail

/// Parses the plain-text tableau format without validating the invariants.
inline GarkTableau parse_tableau_unchecked(std::string_view text) {
  const auto lines = detail::tokenize_lines(text);
  std::size_t pos = 0;
  const std::size_t end_line = lines.empty() ? 1 : lines.back().number + 1;

  auto next = [&](std::string_view expected) -> const detail::TableauLine& {
    if (pos >= lines.size())
      throw ParseError(end_line, "unexpected end of input, expected '" + std::string(expected) + "'");
    const auto& l = lines[pos++];
    if (l.tokens.front() != expected)
      throw ParseError(l.number, "expected '" + std::string(expected) + "', found '" +
                                     std::string(l.tokens.front()) + "'");
    return l;
  };
  auto count = [&](std::string_view key) {
    const auto& l = next(key);
    if (l.tokens.size() != 2) throw ParseError(l.number, std::string(key) + " takes one value");
    return detail::parse_count(l.tokens[1], l.number);
  };
  auto values = [](const detail::TableauLine& l, std::size_t first, std::size_t n,
                   std::string_view what) {
    if (l.tokens.size() - first != n)
      throw ParseError(l.number, std::string(what) + " expects " + std::to_string(n) +
                                     " values, found " + std::to_string(l.tokens.size() - first));
    std::vector<double> out;
    for (std::size_t k = first; k < l.tokens.size(); ++k)
      out.push_back(detail::parse_real(l.tokens[k], l.number));
    return out;
  };
  auto block = [&](std::string_view name, std::size_t rows, std::size_t cols) {
    const auto& header = next(name);
    if (header.tokens.size() != 1) throw ParseError(header.number, "trailing tokens after block name");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (pos >= lines.size())
        throw ParseError(end_line, "unexpected end of input inside " + std::string(name));
      const auto& l = lines[pos++];
      auto r = values(l, 0, cols, std::string(name) + " row");
      std::copy(r.begin(), r.end(), m.row(i).begin());
    }
    return m;
  };
  auto vec = [&](std::string_view name, std::size_t n) {
    const auto& l = next(name);
    return values(l, 1, n, name);
  };

  GarkTableau t;
  const std::size_t se = count("s_explicit");
  const std::size_t si = count("s_implicit");
  t.a_ee = block("A_EE", se, se);
  t.a_ei = block("A_EI", se, si);
  t.a_ie = block("A_IE", si, se);
  t.a_ii = block("A_II", si, si);
  t.b_e = vec("b_E", se);
  t.b_i = vec("b_I", si);
  if (pos != lines.size()) throw ParseError(lines[pos].number, "trailing content after b_I");
  return t;
}

/// Parses and validates. Throws ParseError or InvalidTableau.
inline GarkTableau parse_tableau(std::string_view text) {
  GarkTableau t = parse_tableau_unchecked(text);
  require_valid(t);
  return t;
}

}  // namespace garkopt
