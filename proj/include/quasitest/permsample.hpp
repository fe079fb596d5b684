#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "quasitest/core.hpp"
#include "quasitest/error.hpp"
#include "quasitest/rng.hpp"

namespace quasitest {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Metropolis-Hastings swap chain settings. `draws` counts retained
/// permutations including the identity kept as draw 0; `thinning` = 0 means 2n.
struct McmcConfig {
  std::size_t draws = 1000;
  std::size_t thinning = 0;
  std::size_t burn_in = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = stream_id(0, StreamPurpose::Mcmc);
  bool accumulate_all_states = true;

  std::size_t resolved_thinning(std::size_t n) const { return thinning > 0 ? thinning : 2 * n; }
};

/// Table of P(pi(i) = j); rows and columns sum to one.
class PairAssignmentProbs {
 public:
  PairAssignmentProbs() = default;
  PairAssignmentProbs(std::size_t n, std::vector<double> probs) : n_(n), probs_(std::move(probs)) {
    if (probs_.size() != n * n) fail(ErrorCode::LengthMismatch, "pair probabilities must be n*n");
  }

  static PairAssignmentProbs identity(std::size_t n) {
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0;
    return {n, std::move(p)};
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return probs_[i * n_ + j]; }
  std::span<const double> data() const noexcept { return probs_; }

  /// Largest |row or column sum - 1|.
  double max_margin_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        r += probs_[i * n_ + j];
        c += probs_[j * n_ + i];
      }
      worst = std::max({worst, std::abs(r - 1.0), std::abs(c - 1.0)});
    }
    return worst;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> probs_;
};

enum class SamplerScheme { Mcmc, Uniform, Monotone, Grid, KouMcCullagh, Exact };

inline std::string to_string(SamplerScheme s) {
  switch (s) {
    case SamplerScheme::Mcmc: return "mcmc";
    case SamplerScheme::Uniform: return "uniform";
    case SamplerScheme::Monotone: return "monotone";
    case SamplerScheme::Grid: return "grid";
    case SamplerScheme::KouMcCullagh: return "kou-mccullagh";
    case SamplerScheme::Exact: return "exact";
  }
  return "unknown";
}

/// Sampled permutations; entry 0 is always the observed coupling (identity).
struct PermutationDraws {
  std::vector<Permutation> permutations;
  std::vector<double> log_target;
  std::optional<std::vector<double>> log_proposal;  // absent for MCMC draws
  SamplerScheme scheme = SamplerScheme::Mcmc;
  std::optional<double> acceptance_rate;
  /// P(pi(i) = j) averaged over every visited chain state, when requested.
  std::optional<PairAssignmentProbs> visited_pair_probs;
  std::size_t dead_ends = 0;
  std::size_t clamp_events = 0;

  std::size_t size() const noexcept { return permutations.size(); }
};

// ---------------------------------------------------------------------------
// MCMC

/// log of P_W(pi^{i<->j}) / P_W(pi), from the four entries touched by the swap.
inline double swap_log_ratio(const WeightMatrix& w, const Permutation& pi, std::size_t i, std::size_t j) {
  return w.log_at(i, pi[j]) + w.log_at(j, pi[i]) - w.log_at(i, pi[i]) - w.log_at(j, pi[j]);
}

/// One Metropolis-Hastings step: propose an ordered pair (i, j) uniformly and
/// accept the swap with probability min(1, ratio). The i == j proposal is an
/// accepted self-move; it keeps the chain aperiodic when every swap would be
/// accepted (constant W), where pure transpositions alternate parity.
/// `pi` must have positive weight.
inline bool mh_swap_step(const WeightMatrix& w, Permutation& pi, Rng& rng) {
  const std::size_t n = pi.size();
  const std::size_t i = rng.index(n);
  const std::size_t j = rng.index(n);
  if (i == j) return true;
  const double lr = swap_log_ratio(w, pi, i, j);
  if (lr >= 0.0 || std::log(rng.uniform_open()) <= lr) {
    pi.swap_images(i, j);
    return true;
  }
  return false;
}

/// Value-returning form of mh_swap_step.
inline std::pair<Permutation, bool> mh_swap_step(const WeightMatrix& w, const Permutation& pi, Rng& rng) {
  Permutation next = pi;
  const bool accepted = mh_swap_step(w, next, rng);
  return {std::move(next), accepted};
}

/// The swap chain started at the identity. Optionally accumulates how long
/// each row spends on each column so that P_ij can be averaged over every
/// visited state in O(1) per step.
class McmcChain {
 public:
  McmcChain(const WeightMatrix& w, Rng rng, bool accumulate)
      : w_(&w), rng_(std::move(rng)), state_(Permutation::identity(w.size())), accumulate_(accumulate) {
    if (!w.diagonal_positive()) fail(ErrorCode::InfeasibleSample, "identity has zero weight: diagonal of W must be positive");
    if (accumulate_) {
      occupancy_.assign(w.size() * w.size(), 0.0);
      since_.assign(w.size(), 0);
    }
  }

  void step() {
    const std::size_t n = state_.size();
    if (n < 2) return;
    const std::size_t i = rng_.index(n);
    const std::size_t j = rng_.index(n);
    ++steps_;
    if (i == j) {
      ++accepted_;
      return;
    }
    const double lr = swap_log_ratio(*w_, state_, i, j);
    if (lr >= 0.0 || std::log(rng_.uniform_open()) <= lr) {
      if (accumulate_) {
        record(i);
        record(j);
      }
      state_.swap_images(i, j);
      ++accepted_;
    }
  }

  void advance(std::size_t k) {
    for (std::size_t s = 0; s < k; ++s) step();
  }

  const Permutation& state() const noexcept { return state_; }
  std::size_t steps() const noexcept { return steps_; }
  double acceptance_rate() const {
    return steps_ == 0 ? 1.0 : static_cast<double>(accepted_) / static_cast<double>(steps_);
  }

  /// Average of 1{pi_t(i) = j} over states t = 0..steps().
  PairAssignmentProbs visited_pair_probs() const {
    if (!accumulate_) fail(ErrorCode::InvalidArgument, "chain was not accumulating visited states");
    const std::size_t n = state_.size();
    std::vector<double> p = occupancy_;
    const double total = static_cast<double>(steps_ + 1);
    for (std::size_t i = 0; i < n; ++i) p[i * n + state_[i]] += static_cast<double>(steps_ + 1 - since_[i]);
    for (double& v : p) v /= total;
    return {n, std::move(p)};
  }

 private:
  void record(std::size_t row) {
    const std::size_t n = state_.size();
    occupancy_[row * n + state_[row]] += static_cast<double>(steps_ - since_[row]);
    since_[row] = steps_;
  }

  const WeightMatrix* w_;
  Rng rng_;
  Permutation state_;
  bool accumulate_;
  std::size_t steps_ = 0;
  std::size_t accepted_ = 0;
  std::vector<double> occupancy_;
  std::vector<std::size_t> since_;
};

struct McmcRunSummary {
  double acceptance_rate = 1.0;
  std::size_t steps = 0;
  std::optional<PairAssignmentProbs> visited_pair_probs;
};

/// Streams retained permutations to `visit(index, pi)` without storing them:
/// the identity first, then every `thinning`-th state after `burn_in` steps.
template <typename Visitor>
McmcRunSummary run_mcmc(const WeightMatrix& w, const McmcConfig& cfg, Visitor&& visit) {
  if (cfg.draws < 1) fail(ErrorCode::InvalidArgument, "McmcConfig.draws must be >= 1");
  McmcChain chain(w, Rng(cfg.seed, cfg.stream), cfg.accumulate_all_states);
  const std::size_t m = cfg.resolved_thinning(w.size());
  visit(std::size_t{0}, Permutation::identity(w.size()));
  for (std::size_t k = 1; k < cfg.draws; ++k) {
    chain.advance(k == 1 ? cfg.burn_in + m : m);
    visit(k, chain.state());
  }
  McmcRunSummary out;
  out.acceptance_rate = chain.acceptance_rate();
  out.steps = chain.steps();
  if (cfg.accumulate_all_states) out.visited_pair_probs = chain.visited_pair_probs();
  return out;
}

inline PermutationDraws sample_permutations_mcmc(const WeightMatrix& w, const McmcConfig& cfg) {
  PermutationDraws draws;
  draws.scheme = SamplerScheme::Mcmc;
  draws.permutations.reserve(cfg.draws);
  draws.log_target.reserve(cfg.draws);
  auto summary = run_mcmc(w, cfg, [&](std::size_t, const Permutation& pi) {
    draws.permutations.push_back(pi);
    draws.log_target.push_back(log_perm_weight(w, pi).value);
  });
  draws.acceptance_rate = summary.acceptance_rate;
  draws.visited_pair_probs = std::move(summary.visited_pair_probs);
  return draws;
}

// ---------------------------------------------------------------------------
// Sequential importance sampling

enum class SisScheme { Uniform, Monotone, Grid, KouMcCullagh };

inline SamplerScheme to_sampler_scheme(SisScheme s) {
  switch (s) {
    case SisScheme::Uniform: return SamplerScheme::Uniform;
    case SisScheme::Monotone: return SamplerScheme::Monotone;
    case SisScheme::Grid: return SamplerScheme::Grid;
    case SisScheme::KouMcCullagh: return SamplerScheme::KouMcCullagh;
  }
  return SamplerScheme::Uniform;
}

struct SisOptions {
  std::size_t grid_size = 10;  // G equidistant exponents 0, 1/(G-1), ..., 1
};

namespace detail {

/// Rows ordered by decreasing variance of their finite log-weights, ties by index.
inline std::vector<std::size_t> variance_row_order(const WeightMatrix& w) {
  const std::size_t n = w.size();
  std::vector<double> var(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0, s2 = 0.0;
    std::size_t k = 0;
    for (double l : w.log_row(i)) {
      if (l == kNegInf) continue;
      s += l;
      s2 += l * l;
      ++k;
    }
    if (k > 1) {
      const double mean = s / static_cast<double>(k);
      var[i] = std::max(0.0, s2 / static_cast<double>(k) - mean * mean);
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
  return order;
}

inline std::vector<double> grid_exponents(std::size_t g) {
  if (g < 2) return {1.0};
  std::vector<double> a(g);
  for (std::size_t k = 0; k < g; ++k) a[k] = static_cast<double>(k) / static_cast<double>(g - 1);
  return a;
}

struct SequentialResult {
  double log_proposal = 0.0;
  double log_target = 0.0;
  bool dead = false;
  std::size_t clamps = 0;
};

/// Builds (or, when `forced` is given, scores) one permutation row by row.
/// `alpha` is the weight exponent of a Grid component; other schemes ignore it.
class SequentialSampler {
 public:
  SequentialSampler(const WeightMatrix& w, SisScheme scheme) : w_(&w), scheme_(scheme), n_(w.size()) {
    if (scheme == SisScheme::Monotone || scheme == SisScheme::Grid) {
      order_ = variance_row_order(w);
    } else {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
    }
    if (scheme == SisScheme::KouMcCullagh) {
      base_col_sums_.assign(n_, 0.0);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) base_col_sums_[j] += w(i, j);
      }
    }
    used_.resize(n_);
    scores_.resize(n_);
  }

  /// Exactly one of `rng` (sample) and `forced` (score a given permutation) is set.
  SequentialResult run(double alpha, Rng* rng, const Permutation* forced,
                       std::vector<Permutation::index_type>* out) {
    SequentialResult res;
    std::fill(used_.begin(), used_.end(), 0);
    if (scheme_ == SisScheme::KouMcCullagh) col_sums_ = base_col_sums_;
    if (out) out->assign(n_, 0);
    for (std::size_t step = 0; step < n_; ++step) {
      const std::size_t r = order_[step];
      double max_score = kNegInf;
      for (std::size_t j = 0; j < n_; ++j) {
        scores_[j] = used_[j] ? kNegInf : log_score(r, j, alpha, res.clamps);
        max_score = std::max(max_score, scores_[j]);
      }
      if (max_score == kNegInf) {
        res.dead = true;
        res.log_target = kNegInf;
        if (forced) res.log_proposal = kNegInf;
        if (out) fill_rest(step, *out);
        return res;
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (scores_[j] != kNegInf) total += std::exp(scores_[j] - max_score);
      }
      std::size_t pick = 0;
      if (forced) {
        pick = (*forced)[r];
        if (scores_[pick] == kNegInf) {
          res.dead = true;
          res.log_proposal = kNegInf;
          res.log_target = kNegInf;
          return res;
        }
      } else {
        double u = rng->uniform() * total;
        pick = n_;
        for (std::size_t j = 0; j < n_; ++j) {
          if (scores_[j] == kNegInf) continue;
          pick = j;
          u -= std::exp(scores_[j] - max_score);
          if (u < 0.0) break;
        }
      }
      res.log_proposal += scores_[pick] - max_score - std::log(total);
      res.log_target += w_->log_at(r, pick);
      used_[pick] = 1;
      if (scheme_ == SisScheme::KouMcCullagh) {
        for (std::size_t j = 0; j < n_; ++j) col_sums_[j] -= (*w_)(r, j);
      }
      if (out) (*out)[r] = static_cast<Permutation::index_type>(pick);
    }
    return res;
  }

 private:
  void fill_rest(std::size_t step, std::vector<Permutation::index_type>& out) {
    std::size_t j = 0;
    for (std::size_t rest = step; rest < n_; ++rest) {
      while (used_[j]) ++j;
      used_[j] = 1;
      out[order_[rest]] = static_cast<Permutation::index_type>(j);
    }
  }

  double log_score(std::size_t r, std::size_t j, double alpha, std::size_t& clamps) const {
    const double lw = w_->log_at(r, j);
    switch (scheme_) {
      case SisScheme::Uniform:
        return 0.0;
      case SisScheme::Monotone:
        return lw;
      case SisScheme::Grid:
        if (lw == kNegInf) return kNegInf;
        return alpha * lw;
      case SisScheme::KouMcCullagh: {
        if (lw == kNegInf) return kNegInf;
        // Column sum over the rows still unassigned, including r.
        const double wij = (*w_)(r, j);
        const double c = std::max(col_sums_[j], wij);
        const double floor = std::numeric_limits<double>::epsilon() * c;
        double denom = c - wij;
        if (denom <= floor) {
          denom = floor;
          ++clamps;
        }
        return lw - std::log(denom);
      }
    }
    return kNegInf;
  }

  const WeightMatrix* w_;
  SisScheme scheme_;
  std::size_t n_;
  std::vector<std::size_t> order_;
  std::vector<double> base_col_sums_;
  std::vector<double> col_sums_;
  std::vector<char> used_;
  std::vector<double> scores_;
};

}  // namespace detail

/// Exact log P_IS(pi) for a scheme; Grid is the equal mixture over its exponents.
inline double sis_log_proposal(const WeightMatrix& w, SisScheme scheme, const Permutation& pi,
                               const SisOptions& opts = {}) {
  if (pi.size() != w.size()) fail(ErrorCode::LengthMismatch, "permutation length differs from weight matrix");
  if (scheme == SisScheme::Uniform) return -std::lgamma(static_cast<double>(w.size()) + 1.0);
  detail::SequentialSampler sampler(w, scheme);
  if (scheme != SisScheme::Grid) return sampler.run(1.0, nullptr, &pi, nullptr).log_proposal;
  const auto alphas = detail::grid_exponents(opts.grid_size);
  std::vector<double> comps;
  comps.reserve(alphas.size());
  for (double a : alphas) comps.push_back(sampler.run(a, nullptr, &pi, nullptr).log_proposal);
  return log_sum_exp(comps) - std::log(static_cast<double>(alphas.size()));
}

/// `draws` permutations from a sequential importance proposal; draw 0 is the
/// identity scored under the same proposal. Dead ends are kept as weight-zero
/// draws so that log P_IS stays exact.
inline PermutationDraws sis_sample(const WeightMatrix& w, SisScheme scheme, std::size_t draws, std::uint64_t seed,
                                   const SisOptions& opts = {},
                                   std::uint64_t stream = stream_id(0, StreamPurpose::ImportanceSampling)) {
  if (draws < 1) fail(ErrorCode::InvalidArgument, "sis_sample needs at least one draw");
  const std::size_t n = w.size();
  PermutationDraws out;
  out.scheme = to_sampler_scheme(scheme);
  out.permutations.reserve(draws);
  out.log_target.reserve(draws);
  std::vector<double> log_prop;
  log_prop.reserve(draws);

  const Permutation id = Permutation::identity(n);
  out.permutations.push_back(id);
  out.log_target.push_back(log_perm_weight(w, id).value);
  log_prop.push_back(sis_log_proposal(w, scheme, id, opts));

  detail::SequentialSampler sampler(w, scheme);
  const auto alphas = detail::grid_exponents(opts.grid_size);
  Rng rng(seed, stream);
  std::vector<Permutation::index_type> mapping;
  const double uniform_lp = -std::lgamma(static_cast<double>(n) + 1.0);
  std::size_t live = 0;
  for (std::size_t b = 1; b < draws; ++b) {
    const double alpha = scheme == SisScheme::Grid ? alphas[rng.index(alphas.size())] : 1.0;
    auto res = sampler.run(alpha, &rng, nullptr, &mapping);
    Permutation pi(std::move(mapping));
    out.clamp_events += res.clamps;
    if (res.dead) {
      ++out.dead_ends;
      out.log_target.push_back(kNegInf);
      log_prop.push_back(res.log_proposal);
    } else {
      out.log_target.push_back(res.log_target);
      if (scheme == SisScheme::Uniform) {
        log_prop.push_back(uniform_lp);
      } else if (scheme == SisScheme::Grid) {
        log_prop.push_back(sis_log_proposal(w, scheme, pi, opts));
      } else {
        log_prop.push_back(res.log_proposal);
      }
      ++live;
    }
    out.permutations.push_back(std::move(pi));
    mapping = {};
  }
  if (draws > 1 && live == 0) fail(ErrorCode::AllDrawsDead, "every importance draw reached a dead end");
  out.log_proposal = std::move(log_prop);
  return out;
}

/// Oracle sampler drawing directly from the enumerated law P_W (n <= cap).
/// The stored proposal is P_W up to one dyadic-rounded constant, so every
/// log_target - log_proposal is bitwise identical and importance weights cancel.
inline PermutationDraws sample_permutations_exact(const WeightMatrix& w, std::size_t draws, std::uint64_t seed,
                                                  std::size_t oracle_cap = kDefaultOracleCap,
                                                  std::uint64_t stream = stream_id(0, StreamPurpose::ImportanceSampling)) {
  if (draws < 1) fail(ErrorCode::InvalidArgument, "need at least one draw");
  const auto law = enumerate_exact_pw(w, oracle_cap);
  std::vector<double> cdf(law.size());
  double acc = 0.0;
  std::vector<double> logs;
  for (std::size_t k = 0; k < law.size(); ++k) {
    acc += law[k].probability;
    cdf[k] = acc;
    logs.push_back(log_perm_weight(w, law[k].permutation).value);
  }
  const double log_norm = std::ldexp(std::round(std::ldexp(log_sum_exp(logs), 20)), -20);
  PermutationDraws out;
  out.scheme = SamplerScheme::Exact;
  std::vector<double> lp;
  Rng rng(seed, stream);
  for (std::size_t b = 0; b < draws; ++b) {
    Permutation pi;
    if (b == 0) {
      pi = Permutation::identity(w.size());
    } else {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      if (it == cdf.end()) --it;
      pi = law[static_cast<std::size_t>(it - cdf.begin())].permutation;
    }
    const double lt = log_perm_weight(w, pi).value;
    out.permutations.push_back(std::move(pi));
    out.log_target.push_back(lt);
    lp.push_back(lt - log_norm);
  }
  out.log_proposal = std::move(lp);
  return out;
}

/// Self-normalizable importance weights exp(log_target - log_proposal - max);
/// all ones for MCMC draws.
inline std::vector<double> importance_weights(const PermutationDraws& d) {
  std::vector<double> wts(d.size(), 1.0);
  if (!d.log_proposal) return wts;
  std::vector<double> lr(d.size());
  double m = kNegInf;
  for (std::size_t b = 0; b < d.size(); ++b) {
    lr[b] = d.log_target[b] == kNegInf ? kNegInf : d.log_target[b] - (*d.log_proposal)[b];
    m = std::max(m, lr[b]);
  }
  if (m == kNegInf) fail(ErrorCode::ZeroTotalWeight, "all importance weights vanish");
  for (std::size_t b = 0; b < d.size(); ++b) wts[b] = lr[b] == kNegInf ? 0.0 : std::exp(lr[b] - m);
  return wts;
}

/// Coefficient of variation of P_W / P_IS over the sampled draws (identity excluded).
inline double importance_weight_cv(const PermutationDraws& d) {
  if (!d.log_proposal || d.size() < 3) return 0.0;
  const auto wts = importance_weights(d);
  double s = 0.0, s2 = 0.0;
  const double k = static_cast<double>(d.size() - 1);
  for (std::size_t b = 1; b < d.size(); ++b) {
    s += wts[b];
    s2 += wts[b] * wts[b];
  }
  const double mean = s / k;
  if (mean == 0.0) return std::numeric_limits<double>::infinity();
  const double var = std::max(0.0, s2 / k - mean * mean);
  return std::sqrt(var) / mean;
}

/// P-hat_ij from draws: plain average for MCMC, self-normalized for IS.
inline PairAssignmentProbs estimate_pair_probs(const PermutationDraws& d) {
  if (d.size() == 0) fail(ErrorCode::EmptyInput, "no draws");
  const std::size_t n = d.permutations.front().size();
  const auto wts = importance_weights(d);
  double total = 0.0;
  std::vector<double> p(n * n, 0.0);
  for (std::size_t b = 0; b < d.size(); ++b) {
    if (wts[b] == 0.0) continue;
    total += wts[b];
    const auto& pi = d.permutations[b];
    for (std::size_t i = 0; i < n; ++i) p[i * n + pi[i]] += wts[b];
  }
  if (!(total > 0.0)) fail(ErrorCode::ZeroTotalWeight, "all draws carry zero weight");
  for (double& v : p) v /= total;
  return {n, std::move(p)};
}

/// Exact P_ij by enumeration (n <= cap).
inline PairAssignmentProbs exact_pair_probs(const WeightMatrix& w, std::size_t oracle_cap = kDefaultOracleCap) {
  const std::size_t n = w.size();
  std::vector<double> p(n * n, 0.0);
  for (const auto& [pi, prob] : enumerate_exact_pw(w, oracle_cap)) {
    for (std::size_t i = 0; i < n; ++i) p[i * n + pi[i]] += prob;
  }
  return {n, std::move(p)};
}

/// Diagnostic dump: draw_index,log_target,log_proposal,acceptance_rate.
inline void write_draws_csv(std::ostream& os, const PermutationDraws& d) {
  os << "draw_index,log_target,log_proposal,acceptance_rate\n";
  os << std::setprecision(17);
  for (std::size_t b = 0; b < d.size(); ++b) {
    os << b << ',' << d.log_target[b] << ',';
    if (d.log_proposal) os << (*d.log_proposal)[b];
    os << ',';
    if (d.acceptance_rate) os << *d.acceptance_rate;
    os << '\n';
  }
}

}  // namespace quasitest
