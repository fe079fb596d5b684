#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quasitest/error.hpp"

namespace quasitest {

/// Largest n for which the enumeration oracles run (10! ~ 3.6M permutations).
inline constexpr std::size_t kDefaultOracleCap = 10;

struct Observation {
  double x = 0.0;
  double y = 0.0;
  std::optional<int> delta;  // 1 = uncensored, 0 = censored
};

/// An ordered list of (x, y) pairs, optionally carrying censoring indicators.
class Sample {
 public:
  Sample() = default;

  explicit Sample(std::vector<Observation> observations, bool censored = false)
      : observations_(std::move(observations)), censored_(censored) {
    if (observations_.size() < 2) {
      fail(ErrorCode::InvalidArgument, "a sample needs at least 2 observations, got " +
                                           std::to_string(observations_.size()));
    }
    for (std::size_t i = 0; i < observations_.size(); ++i) {
      const auto& o = observations_[i];
      if (!std::isfinite(o.x) || !std::isfinite(o.y)) {
        fail(ErrorCode::InvalidArgument, "non-finite value at row " + std::to_string(i + 1));
      }
      if (censored_ != o.delta.has_value()) {
        fail(ErrorCode::InvalidArgument,
             censored_ ? "censored sample is missing delta at row " + std::to_string(i + 1)
                       : "uncensored sample carries delta at row " + std::to_string(i + 1));
      }
      if (o.delta && *o.delta != 0 && *o.delta != 1) {
        fail(ErrorCode::InvalidArgument, "delta must be 0 or 1 at row " + std::to_string(i + 1));
      }
    }
  }

  static Sample from_xy(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) fail(ErrorCode::LengthMismatch, "x and y lengths differ");
    std::vector<Observation> obs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) obs[i] = {xs[i], ys[i], std::nullopt};
    return Sample(std::move(obs));
  }

  std::size_t size() const noexcept { return observations_.size(); }
  bool censored() const noexcept { return censored_; }
  const Observation& operator[](std::size_t i) const { return observations_[i]; }
  const std::vector<Observation>& observations() const noexcept { return observations_; }

  std::vector<double> xs() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = observations_[i].x;
    return out;
  }
  std::vector<double> ys() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = observations_[i].y;
    return out;
  }

  friend bool operator==(const Sample& a, const Sample& b) {
    if (a.censored_ != b.censored_ || a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& p = a.observations_[i];
      const auto& q = b.observations_[i];
      if (p.x != q.x || p.y != q.y || p.delta != q.delta) return false;
    }
    return true;
  }

 private:
  std::vector<Observation> observations_;
  bool censored_ = false;
};

/// A bijection of {0, ..., n-1}; entry i is the y-index paired with x_i.
class Permutation {
 public:
  using index_type = std::uint32_t;

  Permutation() = default;

  explicit Permutation(std::vector<index_type> mapping) : mapping_(std::move(mapping)) {
    std::vector<char> seen(mapping_.size(), 0);
    for (auto v : mapping_) {
      if (v >= mapping_.size() || seen[v]) {
        fail(ErrorCode::InvalidArgument, "mapping is not a bijection");
      }
      seen[v] = 1;
    }
  }

  static Permutation identity(std::size_t n) {
    Permutation p;
    p.mapping_.resize(n);
    std::iota(p.mapping_.begin(), p.mapping_.end(), index_type{0});
    return p;
  }

  std::size_t size() const noexcept { return mapping_.size(); }
  index_type operator[](std::size_t i) const { return mapping_[i]; }
  std::span<const index_type> mapping() const noexcept { return mapping_; }

  bool is_identity() const {
    for (std::size_t i = 0; i < mapping_.size(); ++i) {
      if (mapping_[i] != i) return false;
    }
    return true;
  }

  Permutation inverse() const {
    Permutation p;
    p.mapping_.resize(mapping_.size());
    for (std::size_t i = 0; i < mapping_.size(); ++i) p.mapping_[mapping_[i]] = static_cast<index_type>(i);
    return p;
  }

  /// Exchanges the images of i and j.
  void swap_images(std::size_t i, std::size_t j) { std::swap(mapping_[i], mapping_[j]); }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation& a, const Permutation& b) {
    return a.mapping_ <=> b.mapping_;
  }

 private:
  std::vector<index_type> mapping_;
};

/// log of a non-negative quantity; negative infinity encodes zero.
struct LogReal {
  double value = -std::numeric_limits<double>::infinity();

  static LogReal zero() { return {}; }
  static LogReal from_linear(double v) {
    return {v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity()};
  }
  bool is_zero() const { return value == -std::numeric_limits<double>::infinity(); }
  double linear() const { return std::exp(value); }

  friend LogReal operator*(LogReal a, LogReal b) { return {a.value + b.value}; }
  friend bool operator==(LogReal, LogReal) = default;
};

/// log(sum(exp(v))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double a : v) m = std::max(m, a);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

/// n x n matrix of non-negative weights W(i, j) = w(x_i, y_j), with cached logs.
class WeightMatrix {
 public:
  WeightMatrix() = default;

  WeightMatrix(std::size_t n, std::vector<double> entries) : n_(n), entries_(std::move(entries)) {
    if (entries_.size() != n * n) fail(ErrorCode::LengthMismatch, "weight matrix must be n*n");
    log_entries_.resize(entries_.size());
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const double v = entries_[k];
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "weight matrix entry is not finite");
      if (v < 0.0) fail(ErrorCode::NegativeWeight, "weight matrix entry is negative");
      log_entries_[k] = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }
  }

  /// Row-major construction from nested rows; convenient for small literals.
  static WeightMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    std::vector<double> flat;
    flat.reserve(n * n);
    for (const auto& r : rows) {
      if (r.size() != n) fail(ErrorCode::LengthMismatch, "weight matrix must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return WeightMatrix(n, std::move(flat));
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  double log_at(std::size_t i, std::size_t j) const { return log_entries_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {entries_.data() + i * n_, n_}; }
  std::span<const double> log_row(std::size_t i) const { return {log_entries_.data() + i * n_, n_}; }

  bool diagonal_positive() const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (!(entries_[i * n_ + i] > 0.0)) return false;
    }
    return true;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
  std::vector<double> log_entries_;
};

/// W(i, j) = w(x_i, y_j) for any callable bias `w(x, y)`.
template <typename Bias>
WeightMatrix build_weight_matrix(const Sample& sample, const Bias& w) {
  const std::size_t n = sample.size();
  std::vector<double> entries(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w(sample[i].x, sample[j].y);
      if (v < 0.0) {
        fail(ErrorCode::NegativeWeight, "bias is negative at (x_" + std::to_string(i + 1) +
                                            ", y_" + std::to_string(j + 1) + ")");
      }
      entries[i * n + j] = v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(entries[i * n + i] > 0.0)) {
      fail(ErrorCode::InfeasibleSample, "observed point at row " + std::to_string(i + 1) +
                                            " has zero weight (outside the bias support)");
    }
  }
  return WeightMatrix(n, std::move(entries));
}

/// The permuted sample ((x_i, y_pi(i))). Censored samples are rejected; the
/// permutation tests only ever permute uncensored data.
inline Sample apply_permutation(const Sample& sample, const Permutation& pi) {
  if (pi.size() != sample.size()) fail(ErrorCode::LengthMismatch, "permutation length differs from sample");
  if (sample.censored()) {
    fail(ErrorCode::InvalidArgument, "censored samples cannot be permuted; test the uncensored subsample");
  }
  std::vector<Observation> out(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    out[i] = {sample[i].x, sample[pi[i]].y, sample[pi[i]].delta};
  }
  return Sample(std::move(out), sample.censored());
}

inline LogReal log_perm_weight(const WeightMatrix& w, const Permutation& pi) {
  if (pi.size() != w.size()) fail(ErrorCode::LengthMismatch, "permutation length differs from weight matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) s += w.log_at(i, pi[i]);
  return {s};
}

/// Exact permanent by Ryser's inclusion-exclusion with Gray-code updates, O(2^n n).
inline double permanent_exact(const WeightMatrix& w, std::size_t oracle_cap = kDefaultOracleCap) {
  const std::size_t n = w.size();
  if (n > oracle_cap) {
    fail(ErrorCode::OracleTooLarge, "n = " + std::to_string(n) + " exceeds oracle cap " +
                                        std::to_string(oracle_cap));
  }
  if (n == 0) return 1.0;
  std::vector<double> row_sums(n, 0.0);
  double total = 0.0;
  std::uint64_t gray = 0;
  for (std::uint64_t k = 1; k < (std::uint64_t{1} << n); ++k) {
    const std::uint64_t next = k ^ (k >> 1);
    const std::uint64_t changed = next ^ gray;
    const std::size_t col = static_cast<std::size_t>(std::countr_zero(changed));
    const double sign = (next & changed) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) row_sums[i] += sign * w(i, col);
    gray = next;
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) prod *= row_sums[i];
    const int bits = std::popcount(gray);
    total += ((n - bits) % 2 == 0 ? 1.0 : -1.0) * prod;
  }
  return std::max(total, 0.0);
}

struct WeightedPermutation {
  Permutation permutation;
  double probability = 0.0;
};

/// The full law P_W by enumeration of S_n; zero-probability permutations omitted.
inline std::vector<WeightedPermutation> enumerate_exact_pw(const WeightMatrix& w,
                                                           std::size_t oracle_cap = kDefaultOracleCap) {
  const std::size_t n = w.size();
  if (n > oracle_cap) {
    fail(ErrorCode::OracleTooLarge, "n = " + std::to_string(n) + " exceeds oracle cap " +
                                        std::to_string(oracle_cap));
  }
  std::vector<Permutation::index_type> m(n);
  std::iota(m.begin(), m.end(), Permutation::index_type{0});
  std::vector<std::vector<Permutation::index_type>> perms;
  std::vector<double> logs;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w.log_at(i, m[i]);
    if (s > -std::numeric_limits<double>::infinity()) {
      perms.push_back(m);
      logs.push_back(s);
    }
  } while (std::next_permutation(m.begin(), m.end()));
  if (perms.empty()) fail(ErrorCode::DegenerateLaw, "per(W) = 0: no permutation has positive weight");
  const double log_norm = log_sum_exp(logs);
  std::vector<WeightedPermutation> out;
  out.reserve(perms.size());
  for (std::size_t k = 0; k < perms.size(); ++k) {
    out.push_back({Permutation(std::move(perms[k])), std::exp(logs[k] - log_norm)});
  }
  return out;
}

}  // namespace quasitest
