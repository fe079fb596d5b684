#pragma once

// Straightforward reference implementations used to check the library.
// Nothing here shares code with the library beyond the plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "quasitest/core.hpp"

namespace oracle {

using Quad = std::array<double, 4>;

/// All permutations of 0..n-1 with their unnormalized weight prod W(i, pi(i)).
inline std::vector<std::pair<std::vector<std::size_t>, double>> all_weighted_permutations(
    const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::vector<std::pair<std::vector<std::size_t>, double>> out;
  do {
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) prod *= w[i][p[i]];
    out.emplace_back(p, prod);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

inline double permanent_by_enumeration(const std::vector<std::vector<double>>& w) {
  double s = 0.0;
  for (const auto& [p, v] : all_weighted_permutations(w)) s += v;
  return s;
}

/// Quadrant of (px, py) around (cx, cy) as 2*1{px > cx} + 1{py > cy}.
inline int quadrant(double px, double py, double cx, double cy) { return 2 * (px > cx ? 1 : 0) + (py > cy ? 1 : 0); }

/// Expected quadrant counts under P_W by averaging observed counts over the
/// full enumerated permutation law.
inline Quad claim3_expectation(const std::vector<std::vector<double>>& w, const std::vector<double>& xs,
                               const std::vector<double>& ys, double cx, double cy) {
  const auto perms = all_weighted_permutations(w);
  double z = 0.0;
  for (const auto& [p, v] : perms) z += v;
  Quad e{};
  for (const auto& [p, v] : perms) {
    for (std::size_t i = 0; i < xs.size(); ++i) e[quadrant(xs[i], ys[p[i]], cx, cy)] += v / z;
  }
  return e;
}

/// Direct evaluation of the adjusted Hoeffding sum for points (px, py),
/// centers (cx, cy) and a callable expect(cx, cy) -> Quad.
template <typename Expect>
double hoeffding_direct(const std::vector<double>& px, const std::vector<double>& py, const std::vector<double>& cx,
                        const std::vector<double>& cy, Expect expect, std::size_t* used = nullptr) {
  double t = 0.0;
  std::size_t u = 0;
  for (std::size_t c = 0; c < cx.size(); ++c) {
    Quad o{};
    for (std::size_t l = 0; l < px.size(); ++l) o[quadrant(px[l], py[l], cx[c], cy[c])] += 1.0;
    const Quad e = expect(cx[c], cy[c]);
    if (!(e[0] > 1.0 && e[1] > 1.0 && e[2] > 1.0 && e[3] > 1.0)) continue;
    ++u;
    for (int k = 0; k < 4; ++k) t += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
  }
  if (used) *used = u;
  return t;
}

/// Expected counts sum_{i,j} 1{(x_i, y_j) in Q} P_ij by the double loop.
inline Quad pair_prob_expectation(const std::vector<std::vector<double>>& p, const std::vector<double>& xs,
                                  const std::vector<double>& ys, double cx, double cy) {
  Quad e{};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) e[quadrant(xs[i], ys[j], cx, cy)] += p[i][j];
  }
  return e;
}

/// Product-limit estimates for data observed only when x < y. Returns the
/// masses of Y at its sorted distinct values (left truncation by X) and of X
/// at its sorted distinct values (right truncation by Y), via hazards over
/// risk sets {x_i < t <= y_i} and {x_i <= t < y_i}.
struct ProductLimit {
  std::vector<double> y_values, y_mass, x_values, x_mass;
};

inline ProductLimit product_limit(const std::vector<double>& xs, const std::vector<double>& ys) {
  ProductLimit out;
  const std::size_t n = xs.size();
  std::map<double, double> dy, dx;
  for (std::size_t i = 0; i < n; ++i) {
    dy[ys[i]] += 1.0;
    dx[xs[i]] += 1.0;
  }
  double surv = 1.0;
  for (const auto& [t, d] : dy) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += (xs[i] < t && t <= ys[i]) ? 1.0 : 0.0;
    const double next = surv * (1.0 - d / r);
    out.y_values.push_back(t);
    out.y_mass.push_back(surv - next);
    surv = next;
  }
  // Reverse time for X: F(t-) = F(t) * (1 - d(t)/r(t)).
  std::vector<std::pair<double, double>> rev(dx.rbegin(), dx.rend());
  double cdf = 1.0;
  std::vector<double> mass(rev.size());
  for (std::size_t k = 0; k < rev.size(); ++k) {
    const double t = rev[k].first;
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += (xs[i] <= t && t < ys[i]) ? 1.0 : 0.0;
    const double before = cdf * (1.0 - rev[k].second / r);
    mass[k] = cdf - before;
    cdf = before;
  }
  for (std::size_t k = rev.size(); k-- > 0;) {
    out.x_values.push_back(rev[k].first);
    out.x_mass.push_back(mass[k]);
  }
  return out;
}

/// True when some product-limit factor is zero before the last atom, which
/// leaves the estimate undefined beyond it.
inline bool product_limit_degenerate(const std::vector<double>& xs, const std::vector<double>& ys) {
  const auto pl = product_limit(xs, ys);
  for (double m : pl.y_mass) {
    if (!(m > 0.0)) return true;
  }
  for (double m : pl.x_mass) {
    if (!(m > 0.0)) return true;
  }
  return false;
}

/// Kendall's tau-a by merge-sort inversion counting (no ties assumed).
inline double kendall_tau(std::vector<std::pair<double, double>> pts) {
  const std::size_t n = pts.size();
  std::sort(pts.begin(), pts.end());
  std::vector<double> y(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = pts[i].second;
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (y[a] <= y[b]) {
          buf[k++] = y[a++];
        } else {
          inversions += mid - a;
          buf[k++] = y[b++];
        }
      }
      while (a < mid) buf[k++] = y[a++];
      while (b < hi) buf[k++] = y[b++];
    }
    std::swap(y, buf);
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return (pairs - 2.0 * static_cast<double>(inversions)) / pairs;
}

/// Asymptotic Kolmogorov tail P(K > t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
inline double kolmogorov_tail(double t) {
  if (t <= 0.0) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// KS statistic of `values` against a step CDF with the given atoms and
/// masses (evaluated just before and at every atom), and its asymptotic
/// p-value with Stephens' small-sample correction.
inline std::pair<double, double> ks_test_discrete(std::vector<double> values, const std::vector<double>& atoms,
                                                  const std::vector<double>& mass) {
  std::sort(values.begin(), values.end());
  const double m = static_cast<double>(values.size());
  double d = 0.0, f = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double below = static_cast<double>(std::lower_bound(values.begin(), values.end(), atoms[k]) - values.begin()) / m;
    d = std::max(d, std::abs(below - f));
    f += mass[k];
    const double at = static_cast<double>(std::upper_bound(values.begin(), values.end(), atoms[k]) - values.begin()) / m;
    d = std::max(d, std::abs(at - f));
  }
  const double sq = std::sqrt(m);
  return {d, kolmogorov_tail(d * (sq + 0.12 + 0.11 / sq))};
}

/// KS distance between two CDF callables over a set of evaluation points.
template <typename F, typename G>
double sup_distance(const std::vector<double>& points, F f, G g) {
  double d = 0.0;
  for (double t : points) d = std::max(d, std::abs(f(t) - g(t)));
  return d;
}

}  // namespace oracle
