#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "quasitest/bias.hpp"
#include "quasitest/core.hpp"
#include "quasitest/error.hpp"
#include "quasitest/marginals.hpp"
#include "quasitest/permsample.hpp"
#include "quasitest/rng.hpp"

namespace quasitest {

// Quadrant cells are indexed 2*j + k with j = 1{x' > cx}, k = 1{y' > cy}:
// 0 = Q00 (low-left), 1 = Q01 (x low, y high), 2 = Q10, 3 = Q11.
using Cells = std::array<double, 4>;

inline constexpr double kPerturbationVariance = 1e-9;

/// Tie-breaking offsets for quadrant centers, one per x-index and one per
/// y-index. The same realization is reused for the observed sample and every
/// null replicate of a test.
struct CenterPerturbation {
  std::vector<double> dx;
  std::vector<double> dy;

  static CenterPerturbation make(std::size_t n, std::uint64_t seed) {
    Rng rng(seed, stream_id(0, StreamPurpose::Perturbation));
    const double sd = std::sqrt(kPerturbationVariance);
    CenterPerturbation p;
    p.dx.resize(n);
    p.dy.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.dx[i] = sd * rng.normal();
    for (std::size_t i = 0; i < n; ++i) p.dy[i] = sd * rng.normal();
    return p;
  }
};

inline std::vector<std::pair<double, double>> perturb_centers(const Sample& sample, std::uint64_t seed) {
  const auto p = CenterPerturbation::make(sample.size(), seed);
  std::vector<std::pair<double, double>> out(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) out[i] = {sample[i].x + p.dx[i], sample[i].y + p.dy[i]};
  return out;
}

/// Counts of points in each quadrant around (cx, cy).
inline Cells quadrant_observed(std::span<const double> xs, std::span<const double> ys, double cx, double cy) {
  Cells o{};
  for (std::size_t l = 0; l < xs.size(); ++l) o[2 * (xs[l] > cx) + (ys[l] > cy)] += 1.0;
  return o;
}

inline Cells quadrant_observed(const Sample& sample, std::pair<double, double> center) {
  const auto xs = sample.xs();
  const auto ys = sample.ys();
  return quadrant_observed(xs, ys, center.first, center.second);
}

/// 2D prefix sums of cell masses laid out on sorted axes (duplicates allowed);
/// answers the four quadrant masses around any point in O(log n).
class QuadrantMassGrid {
 public:
  QuadrantMassGrid() = default;

  /// `mass` is row-major over (sorted_x index, sorted_y index).
  QuadrantMassGrid(std::vector<double> sorted_x, std::vector<double> sorted_y, std::span<const double> mass)
      : sx_(std::move(sorted_x)), sy_(std::move(sorted_y)) {
    const std::size_t k = sx_.size(), l = sy_.size();
    prefix_.assign((k + 1) * (l + 1), 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < l; ++b) {
        row += mass[a * l + b];
        prefix_[(a + 1) * (l + 1) + b + 1] = prefix_[a * (l + 1) + b + 1] + row;
      }
    }
  }

  double total() const { return prefix_.back(); }

  Cells operator()(double cx, double cy) const {
    const std::size_t l = sy_.size();
    const auto ra = static_cast<std::size_t>(std::upper_bound(sx_.begin(), sx_.end(), cx) - sx_.begin());
    const auto rb = static_cast<std::size_t>(std::upper_bound(sy_.begin(), sy_.end(), cy) - sy_.begin());
    const double low_both = prefix_[ra * (l + 1) + rb];
    const double low_x = prefix_[ra * (l + 1) + l];
    const double low_y = prefix_[sx_.size() * (l + 1) + rb];
    const double all = prefix_.back();
    return {low_both, low_x - low_both, low_y - low_both, all - low_x - low_y + low_both};
  }

 private:
  std::vector<double> sx_;
  std::vector<double> sy_;
  std::vector<double> prefix_;
};

/// Expected counts e_Q = sum_{i,j} 1{(x_i, y_j) in Q} P_ij under the
/// permutation law, for every center, from one O(n^2) table.
class PairProbExpectation {
 public:
  PairProbExpectation(std::span<const double> xs, std::span<const double> ys, const PairAssignmentProbs& p) {
    const std::size_t n = xs.size();
    if (p.size() != n || ys.size() != n) fail(ErrorCode::LengthMismatch, "pair probabilities do not match the sample");
    std::vector<std::size_t> ox(n), oy(n);
    std::iota(ox.begin(), ox.end(), std::size_t{0});
    std::iota(oy.begin(), oy.end(), std::size_t{0});
    std::stable_sort(ox.begin(), ox.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    std::stable_sort(oy.begin(), oy.end(), [&](auto a, auto b) { return ys[a] < ys[b]; });
    std::vector<double> sx(n), sy(n), mass(n * n);
    for (std::size_t a = 0; a < n; ++a) sx[a] = xs[ox[a]];
    for (std::size_t b = 0; b < n; ++b) sy[b] = ys[oy[b]];
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) mass[a * n + b] = p(ox[a], oy[b]);
    }
    grid_ = QuadrantMassGrid(std::move(sx), std::move(sy), mass);
  }

  Cells operator()(double cx, double cy) const { return grid_(cx, cy); }

 private:
  QuadrantMassGrid grid_;
};

/// Support grid of the weighted product measure [Fx Fy]^(w): the weights
/// w(s, t) are evaluated once so that different masses on the same supports
/// (bootstrap re-estimates) reuse them.
class ProductGrid {
 public:
  ProductGrid(std::vector<double> support_x, std::vector<double> support_y, const BiasFunction& w)
      : sx_(std::move(support_x)), sy_(std::move(support_y)), weights_(sx_.size() * sy_.size()) {
    for (std::size_t a = 0; a < sx_.size(); ++a) {
      for (std::size_t b = 0; b < sy_.size(); ++b) weights_[a * sy_.size() + b] = w(sx_[a], sy_[b]);
    }
  }

  const std::vector<double>& support_x() const noexcept { return sx_; }
  const std::vector<double>& support_y() const noexcept { return sy_; }
  double weight(std::size_t a, std::size_t b) const { return weights_[a * sy_.size() + b]; }

  /// Masses of a DiscreteCDF whose support is contained in `axis`, laid out on it.
  static std::vector<double> masses_on(const std::vector<double>& axis, const DiscreteCDF& f) {
    std::vector<double> m(axis.size(), 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) {
      const auto it = std::lower_bound(axis.begin(), axis.end(), f.support()[k]);
      if (it == axis.end() || *it != f.support()[k]) fail(ErrorCode::InvalidArgument, "marginal support is not on the grid");
      m[static_cast<std::size_t>(it - axis.begin())] = f.mass()[k];
    }
    return m;
  }

  /// Joint cell probabilities w(s,t) mx(s) my(t) / Z; throws ZeroNormalizer.
  std::vector<double> joint(std::span<const double> mx, std::span<const double> my) const {
    const std::size_t l = sy_.size();
    std::vector<double> q(weights_.size());
    double z = 0.0;
    for (std::size_t a = 0; a < sx_.size(); ++a) {
      for (std::size_t b = 0; b < l; ++b) z += (q[a * l + b] = weights_[a * l + b] * mx[a] * my[b]);
    }
    if (!(z > 0.0)) fail(ErrorCode::ZeroNormalizer, "the weighted product measure has zero mass");
    for (double& v : q) v /= z;
    return q;
  }

  /// n times the quadrant masses of the normalized measure.
  QuadrantMassGrid expectation(std::span<const double> mx, std::span<const double> my, std::size_t n) const {
    auto q = joint(mx, my);
    for (double& v : q) v *= static_cast<double>(n);
    return QuadrantMassGrid(sx_, sy_, q);
  }

 private:
  std::vector<double> sx_;
  std::vector<double> sy_;
  std::vector<double> weights_;
};

/// Single-center expected counts from pair probabilities, by the direct double sum.
inline Cells expected_from_pair_probs(const PairAssignmentProbs& p, const Sample& sample, std::pair<double, double> center) {
  const std::size_t n = sample.size();
  if (p.size() != n) fail(ErrorCode::LengthMismatch, "pair probabilities do not match the sample");
  Cells e{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      e[2 * (sample[i].x > center.first) + (sample[j].y > center.second)] += p(i, j);
    }
  }
  return e;
}

/// Single-center expected counts n [Fx Fy]^(w)(Q), by the direct double sum.
inline Cells expected_from_marginals(const DiscreteCDF& fx, const DiscreteCDF& fy, const BiasFunction& w,
                                     const Sample& sample, std::pair<double, double> center) {
  Cells e{};
  double z = 0.0;
  for (std::size_t a = 0; a < fx.size(); ++a) {
    for (std::size_t b = 0; b < fy.size(); ++b) {
      const double s = fx.support()[a], t = fy.support()[b];
      const double m = w(s, t) * fx.mass()[a] * fy.mass()[b];
      e[2 * (s > center.first) + (t > center.second)] += m;
      z += m;
    }
  }
  if (!(z > 0.0)) fail(ErrorCode::ZeroNormalizer, "the weighted product measure has zero mass");
  for (double& v : e) v *= static_cast<double>(sample.size()) / z;
  return e;
}

enum class StatisticKind { AdjustedHoeffding, InverseWeighting };

inline std::string to_string(StatisticKind k) {
  return k == StatisticKind::AdjustedHoeffding ? "adjusted-hoeffding" : "inverse-weighting";
}

struct StatisticValue {
  double value = 0.0;
  std::size_t centers_used = 0;
  StatisticKind kind = StatisticKind::AdjustedHoeffding;
};

struct QuadrantCounts {
  Cells observed{};
  Cells expected{};
  bool included = false;
};

/// Weighted dominance sums for many centers at once, O((n + m) log n):
/// low_both = sum of weights with x <= cx and y <= cy, and the two marginals.
/// Buffers are reused across calls.
class QuadrantCounter {
 public:
  struct Sums {
    std::vector<double> low_both;
    std::vector<double> low_x;
    std::vector<double> low_y;
    double total = 0.0;
  };

  const Sums& compute(std::span<const double> px, std::span<const double> py, std::span<const double> pw,
                      std::span<const double> cx, std::span<const double> cy) {
    const std::size_t n = px.size();
    const std::size_t m = cx.size();
    const auto weight = [&](std::size_t l) { return pw.empty() ? 1.0 : pw[l]; };

    point_order_.resize(n);
    std::iota(point_order_.begin(), point_order_.end(), std::size_t{0});
    std::sort(point_order_.begin(), point_order_.end(), [&](auto a, auto b) { return px[a] < px[b]; });
    center_order_.resize(m);
    std::iota(center_order_.begin(), center_order_.end(), std::size_t{0});
    std::sort(center_order_.begin(), center_order_.end(), [&](auto a, auto b) { return cx[a] < cx[b]; });

    // y ranks of points
    sorted_y_.assign(py.begin(), py.end());
    std::sort(sorted_y_.begin(), sorted_y_.end());
    y_rank_.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
      y_rank_[l] = static_cast<std::size_t>(std::lower_bound(sorted_y_.begin(), sorted_y_.end(), py[l]) - sorted_y_.begin());
    }
    // cumulative weights along y (for low_y) and along x (for low_x)
    y_cum_.assign(n + 1, 0.0);
    {
      std::vector<double>& by_rank = tmp_;
      by_rank.assign(n, 0.0);
      for (std::size_t l = 0; l < n; ++l) by_rank[y_rank_[l]] += weight(l);
      for (std::size_t r = 0; r < n; ++r) y_cum_[r + 1] = y_cum_[r] + by_rank[r];
    }
    fenwick_.assign(n + 1, 0.0);

    sums_.low_both.assign(m, 0.0);
    sums_.low_x.assign(m, 0.0);
    sums_.low_y.assign(m, 0.0);
    sums_.total = y_cum_[n];

    std::size_t next = 0;
    double x_acc = 0.0;
    for (std::size_t c : center_order_) {
      while (next < n && px[point_order_[next]] <= cx[c]) {
        const std::size_t l = point_order_[next++];
        x_acc += weight(l);
        for (std::size_t k = y_rank_[l] + 1; k <= n; k += k & (~k + 1)) fenwick_[k] += weight(l);
      }
      const auto rb = static_cast<std::size_t>(std::upper_bound(sorted_y_.begin(), sorted_y_.end(), cy[c]) - sorted_y_.begin());
      double s = 0.0;
      for (std::size_t k = rb; k > 0; k -= k & (~k + 1)) s += fenwick_[k];
      sums_.low_both[c] = s;
      sums_.low_x[c] = x_acc;
      sums_.low_y[c] = y_cum_[rb];
    }
    return sums_;
  }

 private:
  std::vector<std::size_t> point_order_;
  std::vector<std::size_t> center_order_;
  std::vector<double> sorted_y_;
  std::vector<std::size_t> y_rank_;
  std::vector<double> y_cum_;
  std::vector<double> fenwick_;
  std::vector<double> tmp_;
  Sums sums_;
};

inline Cells cells_from_sums(double low_both, double low_x, double low_y, double total) {
  return {low_both, low_x - low_both, low_y - low_both, total - low_x - low_y + low_both};
}

/// Pearson contribution of one center; `included` is false unless all four
/// expected cells exceed one (the low-count filter).
inline double pearson_term(const Cells& o, const Cells& e, double filter_scale, bool& included) {
  included = true;
  for (double v : e) {
    if (!(v * filter_scale > 1.0)) included = false;
  }
  if (!included) return 0.0;
  double t = 0.0;
  for (int c = 0; c < 4; ++c) t += (o[c] - e[c]) * (o[c] - e[c]) / e[c];
  return t;
}

/// Adjusted Hoeffding statistic of points (px, py) with centers (cx, cy) and an
/// expected-count functor `expect(cx, cy) -> Cells`. Returns value 0 with
/// centers_used 0 when every center is filtered; callers decide whether that is fatal.
template <typename Expect>
StatisticValue hoeffding_from_points(QuadrantCounter& counter, std::span<const double> px, std::span<const double> py,
                                     std::span<const double> cx, std::span<const double> cy, const Expect& expect,
                                     std::vector<QuadrantCounts>* detail = nullptr) {
  const auto& s = counter.compute(px, py, {}, cx, cy);
  StatisticValue out{0.0, 0, StatisticKind::AdjustedHoeffding};
  if (detail) detail->resize(cx.size());
  for (std::size_t c = 0; c < cx.size(); ++c) {
    const Cells o = cells_from_sums(s.low_both[c], s.low_x[c], s.low_y[c], s.total);
    const Cells e = expect(cx[c], cy[c]);
    bool inc = false;
    out.value += pearson_term(o, e, 1.0, inc);
    out.centers_used += inc;
    if (detail) (*detail)[c] = {o, e, inc};
  }
  return out;
}

/// Inverse-weighting statistic: observed and expected cell sums of 1/w with
/// expectations from the product of marginal inverse-weighted sums. The low
/// count filter is applied on the scale of n observations (sums times n / total).
inline StatisticValue inverse_weight_from_points(QuadrantCounter& counter, std::span<const double> px,
                                                 std::span<const double> py, std::span<const double> inv_w,
                                                 std::span<const double> cx, std::span<const double> cy,
                                                 std::vector<QuadrantCounts>* detail = nullptr) {
  const auto& s = counter.compute(px, py, inv_w, cx, cy);
  StatisticValue out{0.0, 0, StatisticKind::InverseWeighting};
  const double v = s.total;
  const double scale = static_cast<double>(px.size()) / v;
  if (detail) detail->resize(cx.size());
  for (std::size_t c = 0; c < cx.size(); ++c) {
    const Cells o = cells_from_sums(s.low_both[c], s.low_x[c], s.low_y[c], v);
    const double sx = s.low_x[c], sy = s.low_y[c];
    const Cells e = {sx * sy / v, sx * (v - sy) / v, (v - sx) * sy / v, (v - sx) * (v - sy) / v};
    bool inc = false;
    out.value += pearson_term(o, e, scale, inc);
    out.centers_used += inc;
    if (detail) (*detail)[c] = {o, e, inc};
  }
  return out;
}

namespace provider {
/// Expected counts from P(pi(i) = j).
struct PermutationProbs {
  PairAssignmentProbs probs;
};
/// Expected counts n [Fx Fy]^(w)(Q).
struct BootstrapMarginals {
  DiscreteCDF x;
  DiscreteCDF y;
  BiasFunction w;
};
/// Empirical marginals with w ignored; diagnostics only, it loses power.
struct NaiveEmpirical {};
}  // namespace provider

using ExpectedCountProvider = std::variant<provider::PermutationProbs, provider::BootstrapMarginals, provider::NaiveEmpirical>;

namespace detail {

struct SampleCenters {
  std::vector<double> xs, ys, cx, cy;
};

inline SampleCenters centers_of(const Sample& sample, std::uint64_t seed) {
  SampleCenters c;
  c.xs = sample.xs();
  c.ys = sample.ys();
  const auto p = CenterPerturbation::make(sample.size(), seed);
  c.cx.resize(sample.size());
  c.cy.resize(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    c.cx[i] = c.xs[i] + p.dx[i];
    c.cy[i] = c.ys[i] + p.dy[i];
  }
  return c;
}

inline QuadrantMassGrid marginal_expectation(const DiscreteCDF& fx, const DiscreteCDF& fy, const BiasFunction& w,
                                             std::size_t n) {
  ProductGrid grid(fx.support(), fy.support(), w);
  return grid.expectation(fx.mass(), fy.mass(), n);
}

}  // namespace detail

/// Adjusted Hoeffding statistic of a sample; centers are perturbed with `seed`.
inline StatisticValue adjusted_hoeffding(const Sample& sample, const ExpectedCountProvider& prov, std::uint64_t seed,
                                         std::vector<QuadrantCounts>* detail = nullptr) {
  const auto c = detail::centers_of(sample, seed);
  QuadrantCounter counter;
  StatisticValue v = std::visit(
      [&](const auto& p) -> StatisticValue {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, provider::PermutationProbs>) {
          PairProbExpectation e(c.xs, c.ys, p.probs);
          return hoeffding_from_points(counter, c.xs, c.ys, c.cx, c.cy, e, detail);
        } else if constexpr (std::is_same_v<T, provider::BootstrapMarginals>) {
          const auto e = detail::marginal_expectation(p.x, p.y, p.w, sample.size());
          return hoeffding_from_points(counter, c.xs, c.ys, c.cx, c.cy, e, detail);
        } else {
          const auto e = detail::marginal_expectation(DiscreteCDF::empirical(c.xs), DiscreteCDF::empirical(c.ys),
                                                      BiasFunction(), sample.size());
          return hoeffding_from_points(counter, c.xs, c.ys, c.cx, c.cy, e, detail);
        }
      },
      prov);
  if (v.centers_used == 0) fail(ErrorCode::NoValidCenters, "every quadrant center was filtered (expected count <= 1)");
  return v;
}

/// Inverse-weighting statistic; requires w(x_i, y_i) > 0 at every point.
inline StatisticValue inverse_weight_statistic(const Sample& sample, const BiasFunction& w, std::uint64_t seed,
                                               std::vector<QuadrantCounts>* detail = nullptr) {
  const auto c = detail::centers_of(sample, seed);
  std::vector<double> inv(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double v = w(c.xs[i], c.ys[i]);
    if (!(v > 0.0)) fail(ErrorCode::ZeroWeightAtPoint, "w(x_i, y_i) = 0 at row " + std::to_string(i + 1));
    inv[i] = 1.0 / v;
  }
  QuadrantCounter counter;
  auto v = inverse_weight_from_points(counter, c.xs, c.ys, inv, c.cx, c.cy, detail);
  if (v.centers_used == 0) fail(ErrorCode::NoValidCenters, "every quadrant center was filtered (expected count <= 1)");
  return v;
}

}  // namespace quasitest
