#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "quasitest/bias.hpp"
#include "quasitest/core.hpp"
#include "quasitest/error.hpp"
#include "quasitest/marginals.hpp"
#include "quasitest/parallel.hpp"
#include "quasitest/permsample.hpp"
#include "quasitest/rng.hpp"
#include "quasitest/stats.hpp"

namespace quasitest {

enum class TestMethod {
  PermutationMcmc,
  PermutationIs,
  /// Importance test whose proposal is the enumerated law itself (n <= oracle cap).
  PermutationExact,
  Bootstrap,
};

enum class MarginalEstimator { Npmle, ExchangeablePooled, QiIterative };

/// Source of expected counts for the adjusted Hoeffding statistic in permutation tests.
enum class ExpectedMode { PairProbs, NaiveEmpirical };

inline std::string to_string(TestMethod m) {
  switch (m) {
    case TestMethod::PermutationMcmc: return "perm-mcmc";
    case TestMethod::PermutationIs: return "perm-is";
    case TestMethod::PermutationExact: return "perm-exact";
    case TestMethod::Bootstrap: return "bootstrap";
  }
  return "unknown";
}

inline std::string to_string(MarginalEstimator e) {
  switch (e) {
    case MarginalEstimator::Npmle: return "npmle";
    case MarginalEstimator::ExchangeablePooled: return "exchangeable";
    case MarginalEstimator::QiIterative: return "qi";
  }
  return "unknown";
}

inline std::string to_string(SisScheme s) { return to_string(to_sampler_scheme(s)); }

struct TestConfig {
  TestMethod method = TestMethod::PermutationMcmc;
  SisScheme scheme = SisScheme::Uniform;
  SisOptions sis;
  MarginalEstimator estimator = MarginalEstimator::QiIterative;
  StatisticKind statistic = StatisticKind::AdjustedHoeffding;
  ExpectedMode expected = ExpectedMode::PairProbs;
  std::size_t B = 1000;
  std::uint64_t seed = 0;
  /// `draws` and `seed` are overridden by B + 1 and `seed`.
  McmcConfig mcmc;
  QiOptions qi;
  std::size_t oracle_cap = kDefaultOracleCap;
  /// Keep T_0..T_B (and IS weights) in the report.
  bool keep_null_statistics = false;
};

struct Diagnostics {
  std::size_t centers_used = 0;
  std::optional<double> mcmc_acceptance_rate;
  std::optional<double> is_weight_cv;
  std::optional<std::size_t> marginal_iterations;
  std::optional<bool> marginal_converged;
  std::optional<double> pair_prob_margin_error;
  std::optional<std::size_t> dead_ends;
  std::optional<std::size_t> clamp_events;
  std::optional<std::size_t> uncensored_n;
  std::optional<bool> censoring_tail_extrapolated;
  std::size_t replicates_failed = 0;
  std::string expected_counts;
  std::vector<std::string> warnings;
};

struct TestReport {
  StatisticValue statistic;
  double p_value = 1.0;
  std::size_t B = 0;
  std::string method;
  std::uint64_t seed = 0;
  Diagnostics diagnostics;
  std::vector<double> null_statistics;  // T_0..T_B when requested
  std::vector<double> null_weights;     // IS weights when requested
};

/// (1/(B+1)) sum_{i=0}^{B} 1{T_i >= T_0}, T[0] being the observed value.
inline double p_value_plain(std::span<const double> t) {
  if (t.empty()) fail(ErrorCode::EmptyInput, "no statistics");
  std::size_t hits = 0;
  for (double v : t) hits += v >= t[0];
  return static_cast<double>(hits) / static_cast<double>(t.size());
}

/// Self-normalized weighted proportion of T_i >= T_0, identity term included.
inline double p_value_weighted(std::span<const double> t, std::span<const double> weights) {
  if (t.size() != weights.size()) fail(ErrorCode::LengthMismatch, "statistics and weights differ in length");
  double hit = 0.0, total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    total += weights[i];
    if (t[i] >= t[0]) hit += weights[i];
  }
  if (!(total > 0.0)) fail(ErrorCode::ZeroTotalWeight, "all importance weights vanish");
  return hit / total;
}

/// Scores permuted couplings (x_i, y_pi(i)) with centers perturbed per index,
/// the y-offset travelling with its y-value.
class PermutationScorer {
 public:
  PermutationScorer(const Sample& sample, const WeightMatrix& w, StatisticKind kind, std::uint64_t seed,
                    const PairAssignmentProbs* probs)
      : w_(&w), kind_(kind), xs_(sample.xs()), ys_(sample.ys()) {
    const auto p = CenterPerturbation::make(sample.size(), seed);
    dy_ = p.dy;
    cx_.resize(xs_.size());
    for (std::size_t i = 0; i < xs_.size(); ++i) cx_[i] = xs_[i] + p.dx[i];
    py_.resize(xs_.size());
    cy_.resize(xs_.size());
    inv_.resize(xs_.size());
    if (kind_ == StatisticKind::AdjustedHoeffding) {
      if (probs) {
        grid_ = QuadrantMassGrid();
        pair_ = PairProbExpectation(xs_, ys_, *probs);
      } else {
        grid_ = detail::marginal_expectation(DiscreteCDF::empirical(xs_), DiscreteCDF::empirical(ys_), BiasFunction(),
                                             xs_.size());
      }
    }
  }

  StatisticValue score(const Permutation& pi) {
    const std::size_t n = xs_.size();
    for (std::size_t i = 0; i < n; ++i) {
      py_[i] = ys_[pi[i]];
      cy_[i] = ys_[pi[i]] + dy_[pi[i]];
    }
    if (kind_ == StatisticKind::InverseWeighting) {
      for (std::size_t i = 0; i < n; ++i) inv_[i] = 1.0 / (*w_)(i, pi[i]);
      return inverse_weight_from_points(counter_, xs_, py_, inv_, cx_, cy_);
    }
    if (pair_) return hoeffding_from_points(counter_, xs_, py_, cx_, cy_, *pair_);
    return hoeffding_from_points(counter_, xs_, py_, cx_, cy_, grid_);
  }

 private:
  const WeightMatrix* w_;
  StatisticKind kind_;
  std::vector<double> xs_, ys_, dy_, cx_, py_, cy_, inv_;
  std::optional<PairProbExpectation> pair_;
  QuadrantMassGrid grid_;
  QuadrantCounter counter_;
};

namespace detail {

struct ResolvedInput {
  Sample sample;
  BiasFunction bias;
};

/// Censored input is replaced by its uncensored subsample under the
/// Kaplan-Meier composite weight; other input passes through.
inline ResolvedInput resolve_censoring(const Sample& sample, const BiasFunction& bias, Diagnostics& diag) {
  if (!sample.censored()) return {sample, bias};
  auto adj = censoring_weight(sample);
  diag.uncensored_n = adj.uncensored.size();
  diag.censoring_tail_extrapolated = adj.tail_extrapolated;
  if (adj.tail_extrapolated) diag.warnings.push_back("survival tail carried forward beyond the last observed duration");
  return {std::move(adj.uncensored), std::move(adj.bias)};
}

inline void require_positive_matrix(const WeightMatrix& w) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!(w(i, j) > 0.0)) {
        fail(ErrorCode::EstimatorNotApplicable, "inverse weighting needs w > 0 on every pairing; w(x_" +
                                                    std::to_string(i + 1) + ", y_" + std::to_string(j + 1) + ") = 0");
      }
    }
  }
}

inline void require_valid_observed(const StatisticValue& t0) {
  if (t0.centers_used == 0) fail(ErrorCode::NoValidCenters, "every quadrant center was filtered (expected count <= 1)");
}

/// Shared tail of the permutation tests: score every draw and form the p-value.
inline TestReport score_draws(const Sample& sample, const WeightMatrix& w, const TestConfig& cfg,
                              const PermutationDraws& draws, const PairAssignmentProbs* probs, bool weighted,
                              Diagnostics diag) {
  PermutationScorer scorer(sample, w, cfg.statistic, cfg.seed, probs);
  const auto weights = importance_weights(draws);
  std::vector<double> t(draws.size(), 0.0);
  StatisticValue t0;
  for (std::size_t b = 0; b < draws.size(); ++b) {
    if (weights[b] == 0.0) continue;
    const auto v = scorer.score(draws.permutations[b]);
    if (b == 0) t0 = v;
    t[b] = v.value;
  }
  require_valid_observed(t0);
  TestReport r;
  r.statistic = t0;
  r.p_value = weighted ? p_value_weighted(t, weights) : p_value_plain(t);
  r.B = cfg.B;
  r.seed = cfg.seed;
  diag.centers_used = t0.centers_used;
  r.diagnostics = std::move(diag);
  if (cfg.keep_null_statistics) {
    r.null_statistics = std::move(t);
    if (weighted) r.null_weights = weights;
  }
  return r;
}

}  // namespace detail

/// Weighted permutation test with the Metropolis-Hastings swap chain.
inline TestReport wp_test(const Sample& input, const BiasFunction& bias, const TestConfig& cfg) {
  Diagnostics diag;
  auto [sample, w_fn] = detail::resolve_censoring(input, bias, diag);
  const WeightMatrix w = build_weight_matrix(sample, w_fn);
  if (cfg.statistic == StatisticKind::InverseWeighting) detail::require_positive_matrix(w);

  McmcConfig mc = cfg.mcmc;
  mc.draws = cfg.B + 1;
  mc.seed = cfg.seed;
  const bool need_probs = cfg.statistic == StatisticKind::AdjustedHoeffding && cfg.expected == ExpectedMode::PairProbs;
  mc.accumulate_all_states = mc.accumulate_all_states && need_probs;
  const auto draws = sample_permutations_mcmc(w, mc);

  std::optional<PairAssignmentProbs> probs;
  if (need_probs) {
    probs = draws.visited_pair_probs ? *draws.visited_pair_probs : estimate_pair_probs(draws);
    diag.expected_counts = draws.visited_pair_probs ? "pair-probs:all-visited-states" : "pair-probs:retained-draws";
    diag.pair_prob_margin_error = probs->max_margin_error();
  } else if (cfg.statistic == StatisticKind::AdjustedHoeffding) {
    diag.expected_counts = "naive-empirical";
    diag.warnings.push_back("naive empirical expectations ignore w and lose power");
  }
  diag.mcmc_acceptance_rate = draws.acceptance_rate;
  auto r = detail::score_draws(sample, w, cfg, draws, probs ? &*probs : nullptr, false, std::move(diag));
  r.method = to_string(TestMethod::PermutationMcmc);
  return r;
}

/// Importance-sampling permutation test with a sequential proposal (or the
/// exact law when cfg.method is PermutationExact).
inline TestReport is_test(const Sample& input, const BiasFunction& bias, const TestConfig& cfg) {
  Diagnostics diag;
  auto [sample, w_fn] = detail::resolve_censoring(input, bias, diag);
  const WeightMatrix w = build_weight_matrix(sample, w_fn);
  if (cfg.statistic == StatisticKind::InverseWeighting) detail::require_positive_matrix(w);

  const bool exact = cfg.method == TestMethod::PermutationExact;
  const auto draws = exact ? sample_permutations_exact(w, cfg.B + 1, cfg.seed, cfg.oracle_cap)
                           : sis_sample(w, cfg.scheme, cfg.B + 1, cfg.seed, cfg.sis);
  std::optional<PairAssignmentProbs> probs;
  if (cfg.statistic == StatisticKind::AdjustedHoeffding) {
    if (cfg.expected == ExpectedMode::PairProbs) {
      probs = estimate_pair_probs(draws);
      diag.expected_counts = "pair-probs:importance-weighted";
      diag.pair_prob_margin_error = probs->max_margin_error();
    } else {
      diag.expected_counts = "naive-empirical";
      diag.warnings.push_back("naive empirical expectations ignore w and lose power");
    }
  }
  diag.is_weight_cv = importance_weight_cv(draws);
  diag.dead_ends = draws.dead_ends;
  diag.clamp_events = draws.clamp_events;
  auto r = detail::score_draws(sample, w, cfg, draws, probs ? &*probs : nullptr, true, std::move(diag));
  r.method = exact ? to_string(TestMethod::PermutationExact) : to_string(TestMethod::PermutationIs) + ":" + to_string(cfg.scheme);
  return r;
}

struct MarginalFit {
  DiscreteCDF x;
  DiscreteCDF y;
  std::optional<IterationTrace> trace;
};

/// Marginal estimate used by the bootstrap; checks applicability to `w`.
inline MarginalFit estimate_marginals(const Sample& sample, const BiasFunction& w, MarginalEstimator est,
                                      const QiOptions& qi = {}) {
  switch (est) {
    case MarginalEstimator::Npmle: {
      for (const auto& a : sample.observations()) {
        for (const auto& b : sample.observations()) {
          if (!(w(a.x, b.y) > 0.0)) {
            fail(ErrorCode::EstimatorNotApplicable, "npmle needs a strictly positive bias function");
          }
        }
      }
      auto m = npmle_inverse_weight(sample, w);
      return {std::move(m.x), std::move(m.y), std::nullopt};
    }
    case MarginalEstimator::ExchangeablePooled: {
      if (!w.is<bias::Truncation>()) {
        fail(ErrorCode::EstimatorNotApplicable, "the exchangeable pooled estimator needs w(x,y) = 1{x<y}");
      }
      auto f = exchangeable_pooled_cdf(sample);
      return {f, f, std::nullopt};
    }
    case MarginalEstimator::QiIterative: {
      auto q = estimate_marginals_qi(sample, w, qi);
      return {std::move(q.x), std::move(q.y), std::move(q.trace)};
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown marginal estimator");
}

namespace detail {

/// n [Fx Fy]^(w) quadrant masses restricted to atoms carrying mass.
inline QuadrantMassGrid compact_expectation(const ProductGrid& grid, std::span<const double> mx,
                                            std::span<const double> my, std::size_t n) {
  std::vector<std::size_t> ia, ib;
  for (std::size_t a = 0; a < mx.size(); ++a) {
    if (mx[a] > 0.0) ia.push_back(a);
  }
  for (std::size_t b = 0; b < my.size(); ++b) {
    if (my[b] > 0.0) ib.push_back(b);
  }
  std::vector<double> sx(ia.size()), sy(ib.size()), q(ia.size() * ib.size());
  for (std::size_t a = 0; a < ia.size(); ++a) sx[a] = grid.support_x()[ia[a]];
  for (std::size_t b = 0; b < ib.size(); ++b) sy[b] = grid.support_y()[ib[b]];
  double z = 0.0;
  for (std::size_t a = 0; a < ia.size(); ++a) {
    for (std::size_t b = 0; b < ib.size(); ++b) {
      z += (q[a * ib.size() + b] = grid.weight(ia[a], ib[b]) * mx[ia[a]] * my[ib[b]]);
    }
  }
  if (!(z > 0.0)) fail(ErrorCode::ZeroNormalizer, "the weighted product measure has zero mass");
  const double scale = static_cast<double>(n) / z;
  for (double& v : q) v *= scale;
  return QuadrantMassGrid(std::move(sx), std::move(sy), q);
}

}  // namespace detail

/// Bootstrap test: resample from the estimated [Fx Fy]^(w) by exact inversion
/// over the support grid, re-estimating the marginals on every replicate.
inline TestReport bootstrap_test(const Sample& sample, const BiasFunction& w, const TestConfig& cfg) {
  if (sample.censored()) {
    fail(ErrorCode::EstimatorNotApplicable, "the bootstrap test does not accept censored input");
  }
  const std::size_t n = sample.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w(sample[i].x, sample[i].y) > 0.0)) {
      fail(ErrorCode::InfeasibleSample, "w(x_i, y_i) = 0 at row " + std::to_string(i + 1));
    }
  }
  Diagnostics diag;
  const bool iw = cfg.statistic == StatisticKind::InverseWeighting;
  if (iw && !w.strictly_positive()) {
    fail(ErrorCode::EstimatorNotApplicable, "inverse weighting needs a strictly positive bias function");
  }
  const auto fit = estimate_marginals(sample, w, cfg.estimator, cfg.qi);
  if (fit.trace) {
    diag.marginal_iterations = fit.trace->iterations;
    diag.marginal_converged = fit.trace->converged;
    if (!fit.trace->converged) diag.warnings.push_back("marginal estimation did not converge");
  }
  if (cfg.estimator == MarginalEstimator::QiIterative) {
    diag.warnings.push_back("qi-iterative marginals are consistent only under the null; power may be low");
  }
  diag.expected_counts = "bootstrap-marginals:" + to_string(cfg.estimator);

  const ProductGrid grid(fit.x.support(), fit.y.support(), w);
  const auto q = grid.joint(fit.x.mass(), fit.y.mass());
  std::vector<double> cum(q.size());
  std::partial_sum(q.begin(), q.end(), cum.begin());
  const std::size_t ly = grid.support_y().size();

  const auto perturb = CenterPerturbation::make(n, cfg.seed);
  QuadrantCounter counter;
  std::vector<double> xs(n), ys(n), cx(n), cy(n), inv(n);

  const auto score = [&](const QuadrantMassGrid* expect) {
    for (std::size_t i = 0; i < n; ++i) {
      cx[i] = xs[i] + perturb.dx[i];
      cy[i] = ys[i] + perturb.dy[i];
    }
    if (iw) {
      for (std::size_t i = 0; i < n; ++i) inv[i] = 1.0 / w(xs[i], ys[i]);
      return inverse_weight_from_points(counter, xs, ys, inv, cx, cy);
    }
    return hoeffding_from_points(counter, xs, ys, cx, cy, *expect);
  };

  xs = sample.xs();
  ys = sample.ys();
  std::optional<QuadrantMassGrid> e0;
  if (!iw) e0 = detail::compact_expectation(grid, grid.masses_on(grid.support_x(), fit.x), grid.masses_on(grid.support_y(), fit.y), n);
  const auto t0 = score(e0 ? &*e0 : nullptr);
  detail::require_valid_observed(t0);

  std::vector<double> t{t0.value};
  t.reserve(cfg.B + 1);
  Rng rng(cfg.seed, stream_id(0, StreamPurpose::Bootstrap));
  const double total = cum.back();
  for (std::size_t b = 0; b < cfg.B; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::upper_bound(cum.begin(), cum.end(), rng.uniform() * total);
      if (it == cum.end()) --it;
      const auto cell = static_cast<std::size_t>(it - cum.begin());
      xs[i] = grid.support_x()[cell / ly];
      ys[i] = grid.support_y()[cell % ly];
    }
    try {
      std::optional<QuadrantMassGrid> e;
      if (!iw) {
        const auto rep = estimate_marginals(Sample::from_xy(xs, ys), w, cfg.estimator, cfg.qi);
        e = detail::compact_expectation(grid, grid.masses_on(grid.support_x(), rep.x),
                                        grid.masses_on(grid.support_y(), rep.y), n);
      }
      t.push_back(score(e ? &*e : nullptr).value);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::InvalidArgument) throw;
      ++diag.replicates_failed;
    }
  }
  if (diag.replicates_failed > 0) {
    diag.warnings.push_back(std::to_string(diag.replicates_failed) + " bootstrap replicates failed and were dropped");
  }

  TestReport r;
  r.statistic = t0;
  r.p_value = p_value_plain(t);
  r.B = cfg.B;
  r.seed = cfg.seed;
  r.method = to_string(TestMethod::Bootstrap) + ":" + to_string(cfg.estimator);
  diag.centers_used = t0.centers_used;
  r.diagnostics = std::move(diag);
  if (cfg.keep_null_statistics) r.null_statistics = std::move(t);
  return r;
}

/// Dispatches on cfg.method.
inline TestReport run_test(const Sample& sample, const BiasFunction& w, const TestConfig& cfg) {
  switch (cfg.method) {
    case TestMethod::PermutationMcmc: return wp_test(sample, w, cfg);
    case TestMethod::PermutationIs:
    case TestMethod::PermutationExact: return is_test(sample, w, cfg);
    case TestMethod::Bootstrap: return bootstrap_test(sample, w, cfg);
  }
  fail(ErrorCode::InvalidArgument, "unknown test method");
}

struct BinomialInterval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact (Clopper-Pearson) interval for k successes in m trials.
inline BinomialInterval clopper_pearson(std::size_t k, std::size_t m, double level = 0.95) {
  if (m == 0) return {0.0, 1.0};
  const double a = (1.0 - level) / 2.0;
  BinomialInterval ci;
  const double kk = static_cast<double>(k), mm = static_cast<double>(m);
  ci.lo = k == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(kk, mm - kk + 1.0), a);
  ci.hi = k == m ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(kk + 1.0, mm - kk), 1.0 - a);
  return ci;
}

struct RejectionRate {
  double rate = 0.0;
  BinomialInterval ci;
  std::size_t rejections = 0;
  std::size_t completed = 0;
  double mean_runtime_s = 0.0;
  std::vector<double> p_values;       // NaN for failed replicates
  std::vector<std::string> failures;  // "replicate k: message"
};

/// Draws a dataset from a replicate-specific stream.
using SampleGenerator = std::function<Sample(Rng&)>;

/// Seed of the test run on replicate `r` of a study seeded with `seed`.
inline std::uint64_t replicate_test_seed(std::uint64_t seed, std::size_t r) {
  return splitmix64(seed ^ stream_id(r, StreamPurpose::TestSeed));
}

/// Runs the configured test on `reps` generated datasets and rejects when p <= alpha.
inline RejectionRate null_rejection_rate(const SampleGenerator& generator, const BiasFunction& w, const TestConfig& cfg,
                                         double alpha, std::size_t reps, std::size_t threads = 0) {
  if (reps < 1) fail(ErrorCode::InvalidArgument, "reps must be >= 1");
  RejectionRate out;
  out.p_values.assign(reps, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> runtime(reps, 0.0);
  std::vector<std::string> errors(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng(cfg.seed, stream_id(r, StreamPurpose::Generator));
    TestConfig c = cfg;
    c.seed = replicate_test_seed(cfg.seed, r);
    c.keep_null_statistics = false;
    try {
      const Sample s = generator(rng);
      const auto start = std::chrono::steady_clock::now();
      out.p_values[r] = run_test(s, w, c).p_value;
      runtime[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } catch (const Error& e) {
      errors[r] = std::string(to_string(e.code())) + ": " + e.what();
    }
  });
  double time = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (std::isnan(out.p_values[r])) {
      out.failures.push_back("replicate " + std::to_string(r + 1) + ": " + errors[r]);
      continue;
    }
    ++out.completed;
    time += runtime[r];
    out.rejections += out.p_values[r] <= alpha;
  }
  if (out.completed > 0) {
    out.rate = static_cast<double>(out.rejections) / static_cast<double>(out.completed);
    out.mean_runtime_s = time / static_cast<double>(out.completed);
  }
  out.ci = clopper_pearson(out.rejections, out.completed);
  return out;
}

}  // namespace quasitest
