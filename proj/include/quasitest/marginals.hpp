#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quasitest/bias.hpp"
#include "quasitest/core.hpp"
#include "quasitest/error.hpp"

namespace quasitest {

/// Probability masses on a strictly increasing, duplicate-free support.
class DiscreteCDF {
 public:
  DiscreteCDF() = default;

  DiscreteCDF(std::vector<double> support, std::vector<double> mass)
      : support_(std::move(support)), mass_(std::move(mass)) {
    if (support_.size() != mass_.size()) fail(ErrorCode::LengthMismatch, "support and mass differ in length");
    if (support_.empty()) fail(ErrorCode::EmptyInput, "a DiscreteCDF needs at least one atom");
    double total = 0.0;
    for (std::size_t k = 0; k < support_.size(); ++k) {
      if (k > 0 && !(support_[k] > support_[k - 1])) fail(ErrorCode::InvalidArgument, "support must be strictly increasing");
      if (!(mass_[k] > 0.0)) fail(ErrorCode::InvalidArgument, "masses must be positive");
      total += mass_[k];
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidArgument, "masses must sum to 1");
    cumulative_.resize(mass_.size());
    std::partial_sum(mass_.begin(), mass_.end(), cumulative_.begin());
  }

  /// Merges duplicate values, drops zero weights and normalizes.
  static DiscreteCDF from_weighted(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) fail(ErrorCode::LengthMismatch, "values and weights differ in length");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> s, m;
    double total = 0.0;
    for (std::size_t k : order) {
      if (weights[k] < 0.0 || !std::isfinite(weights[k])) fail(ErrorCode::InvalidArgument, "weights must be finite and >= 0");
      if (weights[k] == 0.0) continue;
      if (!s.empty() && s.back() == values[k]) {
        m.back() += weights[k];
      } else {
        s.push_back(values[k]);
        m.push_back(weights[k]);
      }
      total += weights[k];
    }
    if (!(total > 0.0)) fail(ErrorCode::ZeroNormalizer, "all weights are zero");
    for (double& v : m) v /= total;
    // Renormalize once more so the stored masses sum to 1 to rounding.
    const double again = std::accumulate(m.begin(), m.end(), 0.0);
    for (double& v : m) v /= again;
    return DiscreteCDF(std::move(s), std::move(m));
  }

  static DiscreteCDF empirical(std::span<const double> values) {
    std::vector<double> ones(values.size(), 1.0);
    return from_weighted(values, ones);
  }

  std::size_t size() const noexcept { return support_.size(); }
  const std::vector<double>& support() const noexcept { return support_; }
  const std::vector<double>& mass() const noexcept { return mass_; }

  /// Right-continuous F(t) = sum of masses at support points <= t.
  double operator()(double t) const {
    const auto it = std::upper_bound(support_.begin(), support_.end(), t);
    if (it == support_.begin()) return 0.0;
    return std::min(1.0, cumulative_[static_cast<std::size_t>(it - support_.begin()) - 1]);
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m += support_[k] * mass_[k];
    return m;
  }

 private:
  std::vector<double> support_;
  std::vector<double> mass_;
  std::vector<double> cumulative_;
};

inline double cdf_eval(const DiscreteCDF& f, double t) { return f(t); }

/// Kolmogorov (sup-norm) distance; the sup is attained on the union of supports.
inline double cdf_distance(const DiscreteCDF& a, const DiscreteCDF& b) {
  double d = 0.0;
  for (double t : a.support()) d = std::max(d, std::abs(a(t) - b(t)));
  for (double t : b.support()) d = std::max(d, std::abs(a(t) - b(t)));
  return d;
}

struct MarginalPair {
  DiscreteCDF x;
  DiscreteCDF y;
};

/// Inverse-weighting NPMLE marginals for strictly positive w.
inline MarginalPair npmle_inverse_weight(const Sample& sample, const BiasFunction& w) {
  const std::size_t n = sample.size();
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = w(sample[i].x, sample[i].y);
    if (!(v > 0.0)) {
      fail(ErrorCode::ZeroWeightAtPoint, "w(x_i, y_i) = 0 at row " + std::to_string(i + 1));
    }
    inv[i] = 1.0 / v;
  }
  const auto xs = sample.xs();
  const auto ys = sample.ys();
  return {DiscreteCDF::from_weighted(xs, inv), DiscreteCDF::from_weighted(ys, inv)};
}

/// Pooled empirical CDF of all 2n values; consistent for exchangeable pairs
/// under w = 1{x < y}.
inline DiscreteCDF exchangeable_pooled_cdf(const Sample& sample) {
  std::vector<double> all = sample.xs();
  const auto ys = sample.ys();
  all.insert(all.end(), ys.begin(), ys.end());
  return DiscreteCDF::empirical(all);
}

struct IterationTrace {
  std::vector<double> log_likelihood;  // per sweep, up to an additive constant
  std::vector<double> distance;
  bool converged = false;
  std::size_t iterations = 0;
};

struct QiOptions {
  double eps = 1e-6;
  std::size_t max_iter = 500;
};

struct QiEstimate {
  DiscreteCDF x;
  DiscreteCDF y;
  IterationTrace trace;
};

namespace detail {

struct Atoms {
  std::vector<double> values;
  std::vector<double> counts;
  std::vector<std::size_t> index_of_obs;
};

inline Atoms atoms_of(std::span<const double> v) {
  Atoms a;
  a.values.assign(v.begin(), v.end());
  std::sort(a.values.begin(), a.values.end());
  a.values.erase(std::unique(a.values.begin(), a.values.end()), a.values.end());
  a.counts.assign(a.values.size(), 0.0);
  a.index_of_obs.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::lower_bound(a.values.begin(), a.values.end(), v[i]) - a.values.begin());
    a.index_of_obs[i] = k;
    a.counts[k] += 1.0;
  }
  return a;
}

inline double sup_distance_on(const std::vector<double>& p, const std::vector<double>& q) {
  double a = 0.0, b = 0.0, d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    a += p[k];
    b += q[k];
    d = std::max(d, std::abs(a - b));
  }
  return d;
}

}  // namespace detail

/// Alternating inverse-weighting updates for the marginals under
/// quasi-independence. Each half-sweep maximizes the likelihood in one
/// marginal with the other held fixed, so the trace log-likelihood never
/// decreases. Linear weights use an O(n) conditional expectation.
inline QiEstimate estimate_marginals_qi(const Sample& sample, const BiasFunction& w, const QiOptions& opts = {}) {
  if (!(opts.eps > 0.0)) fail(ErrorCode::InvalidArgument, "eps must be positive");
  const std::size_t n = sample.size();
  const auto xs = sample.xs();
  const auto ys = sample.ys();
  const auto ax = detail::atoms_of(xs);
  const auto ay = detail::atoms_of(ys);
  const std::size_t kx = ax.values.size();
  const std::size_t ky = ay.values.size();
  const auto linear = w.linear_coefficients();

  std::vector<double> grid;
  bool any_zero = false;
  if (!linear) {
    grid.resize(kx * ky);
    for (std::size_t a = 0; a < kx; ++a) {
      for (std::size_t b = 0; b < ky; ++b) {
        grid[a * ky + b] = w(ax.values[a], ay.values[b]);
        any_zero = any_zero || grid[a * ky + b] == 0.0;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w(xs[i], ys[i]) > 0.0)) fail(ErrorCode::InfeasibleSample, "w(x_i, y_i) = 0 at row " + std::to_string(i + 1));
  }

  std::vector<double> mx(kx, 0.0), my(ky, 0.0);
  if (any_zero) {
    for (std::size_t a = 0; a < kx; ++a) mx[a] = ax.counts[a] / static_cast<double>(n);
    for (std::size_t b = 0; b < ky; ++b) my[b] = ay.counts[b] / static_cast<double>(n);
  } else {
    double tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double inv = 1.0 / w(xs[i], ys[i]);
      mx[ax.index_of_obs[i]] += inv;
      my[ay.index_of_obs[i]] += inv;
      tot += inv;
    }
    for (double& v : mx) v /= tot;
    for (double& v : my) v /= tot;
  }

  const auto mean_of = [](const std::vector<double>& vals, const std::vector<double>& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < vals.size(); ++k) s += vals[k] * m[k];
    return s;
  };

  std::vector<double> ex(kx), ey(ky);
  const auto update_x = [&]() {
    for (std::size_t a = 0; a < kx; ++a) {
      double e;
      if (linear) {
        e = (*linear)[0] * ax.values[a] + (*linear)[1] * mean_of(ay.values, my) + (*linear)[2];
      } else {
        e = 0.0;
        for (std::size_t b = 0; b < ky; ++b) e += grid[a * ky + b] * my[b];
      }
      if (!(e > 0.0)) {
        fail(ErrorCode::ZeroConditionalExpectation,
             "E[w(x, Y)] = 0 at x = " + std::to_string(ax.values[a]) + " (atom " + std::to_string(a + 1) + ")");
      }
      ex[a] = e;
    }
    double tot = 0.0;
    for (std::size_t a = 0; a < kx; ++a) tot += (mx[a] = ax.counts[a] / ex[a]);
    for (double& v : mx) v /= tot;
  };
  const auto update_y = [&]() {
    const double mean_x = linear ? mean_of(ax.values, mx) : 0.0;
    for (std::size_t b = 0; b < ky; ++b) {
      double e;
      if (linear) {
        e = (*linear)[0] * mean_x + (*linear)[1] * ay.values[b] + (*linear)[2];
      } else {
        e = 0.0;
        for (std::size_t a = 0; a < kx; ++a) e += grid[a * ky + b] * mx[a];
      }
      if (!(e > 0.0)) {
        fail(ErrorCode::ZeroConditionalExpectation,
             "E[w(X, y)] = 0 at y = " + std::to_string(ay.values[b]) + " (atom " + std::to_string(b + 1) + ")");
      }
      ey[b] = e;
    }
    double tot = 0.0;
    for (std::size_t b = 0; b < ky; ++b) tot += (my[b] = ay.counts[b] / ey[b]);
    for (double& v : my) v /= tot;
  };
  const auto log_likelihood = [&]() {
    // ey holds E[w(X, y_b)] under the current mx, so Z = sum_b my(b) ey(b).
    double z = 0.0;
    for (std::size_t b = 0; b < ky; ++b) z += my[b] * ey[b];
    double ll = -static_cast<double>(n) * std::log(z);
    for (std::size_t a = 0; a < kx; ++a) ll += ax.counts[a] * std::log(mx[a]);
    for (std::size_t b = 0; b < ky; ++b) ll += ay.counts[b] * std::log(my[b]);
    return ll;
  };

  QiEstimate out;
  auto& trace = out.trace;
  while (trace.iterations < opts.max_iter) {
    const auto old_x = mx;
    const auto old_y = my;
    update_x();
    update_y();
    ++trace.iterations;
    trace.log_likelihood.push_back(log_likelihood());
    const double d = detail::sup_distance_on(old_x, mx) + detail::sup_distance_on(old_y, my);
    trace.distance.push_back(d);
    if (d < opts.eps) {
      trace.converged = true;
      break;
    }
  }
  out.x = DiscreteCDF::from_weighted(ax.values, mx);
  out.y = DiscreteCDF::from_weighted(ay.values, my);
  return out;
}

/// Log-likelihood (up to a constant) of the sample under [Fx Fy]^(w).
inline double quasi_independence_log_likelihood(const Sample& sample, const BiasFunction& w, const DiscreteCDF& fx,
                                                const DiscreteCDF& fy) {
  double z = 0.0;
  for (std::size_t a = 0; a < fx.size(); ++a) {
    for (std::size_t b = 0; b < fy.size(); ++b) z += w(fx.support()[a], fy.support()[b]) * fx.mass()[a] * fy.mass()[b];
  }
  const auto mass_at = [](const DiscreteCDF& f, double v) {
    const auto it = std::lower_bound(f.support().begin(), f.support().end(), v);
    if (it == f.support().end() || *it != v) return 0.0;
    return f.mass()[static_cast<std::size_t>(it - f.support().begin())];
  };
  double ll = -static_cast<double>(sample.size()) * std::log(z);
  for (const auto& o : sample.observations()) ll += std::log(mass_at(fx, o.x)) + std::log(mass_at(fy, o.y));
  return ll;
}

}  // namespace quasitest
