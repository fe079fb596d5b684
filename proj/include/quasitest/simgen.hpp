#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "quasitest/bias.hpp"
#include "quasitest/core.hpp"
#include "quasitest/error.hpp"
#include "quasitest/procedures.hpp"
#include "quasitest/rng.hpp"

namespace quasitest {

namespace marginal {
struct Normal {
  double mean = 0.0;
  double sd = 1.0;
};
struct Exponential {
  double rate = 1.0;
};
/// Survival exp(-(t/scale)^shape).
struct Weibull {
  double shape = 1.0;
  double scale = 1.0;
};
struct Uniform {
  double a = 0.0;
  double b = 1.0;
};
/// exp(N(meanlog, sdlog^2)).
struct LogNormal {
  double meanlog = 0.0;
  double sdlog = 1.0;
};
}  // namespace marginal

using Marginal = std::variant<marginal::Normal, marginal::Exponential, marginal::Weibull, marginal::Uniform,
                              marginal::LogNormal>;

inline void validate(const Marginal& m) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        bool ok = true;
        if constexpr (std::is_same_v<T, marginal::Normal>) ok = d.sd > 0.0;
        else if constexpr (std::is_same_v<T, marginal::Exponential>) ok = d.rate > 0.0;
        else if constexpr (std::is_same_v<T, marginal::Weibull>) ok = d.shape > 0.0 && d.scale > 0.0;
        else if constexpr (std::is_same_v<T, marginal::Uniform>) ok = d.a < d.b;
        else ok = d.sdlog > 0.0;
        if (!ok) fail(ErrorCode::InvalidParameter, "invalid marginal parameters");
      },
      m);
}

/// Inverse CDF at u in (0, 1).
inline double quantile(const Marginal& m, double u) {
  return std::visit(
      [u](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, marginal::Normal>) {
          return d.mean + d.sd * boost::math::quantile(boost::math::normal(), u);
        } else if constexpr (std::is_same_v<T, marginal::Exponential>) {
          return -std::log1p(-u) / d.rate;
        } else if constexpr (std::is_same_v<T, marginal::Weibull>) {
          return d.scale * std::pow(-std::log1p(-u), 1.0 / d.shape);
        } else if constexpr (std::is_same_v<T, marginal::Uniform>) {
          return d.a + (d.b - d.a) * u;
        } else {
          return std::exp(d.meanlog + d.sdlog * boost::math::quantile(boost::math::normal(), u));
        }
      },
      m);
}

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace model {
/// Standard bivariate normal with correlation rho.
struct BivariateNormal {
  double rho = 0.0;
};
struct GaussianCopula {
  double rho = 0.0;
  Marginal x = marginal::Normal{};
  Marginal y = marginal::Normal{};
};
/// theta >= 1.
struct Gumbel {
  double theta = 1.0;
  Marginal x = marginal::Normal{};
  Marginal y = marginal::Normal{};
};
/// theta > -1, theta != 0.
struct Clayton {
  double theta = 1.0;
  Marginal x = marginal::Normal{};
  Marginal y = marginal::Normal{};
};
/// Clayton(theta1) with probability p, else Clayton(theta2).
struct ClaytonMixture {
  double theta1 = 0.5;
  double theta2 = -0.5;
  double p = 0.5;
  Marginal x = marginal::Normal{};
  Marginal y = marginal::Normal{};
};
/// (exp Z1, exp Z2) with Z standard bivariate normal, correlation rho.
struct LogNormal {
  double rho = 0.0;
};
/// Uniform on {(x, y) in [0,1]^2 : |x - y| < delta}.
struct UniformStrip {
  double delta = 0.3;
};
}  // namespace model

struct GeneratorSpec {
  using Model = std::variant<model::BivariateNormal, model::GaussianCopula, model::Gumbel, model::Clayton,
                             model::ClaytonMixture, model::LogNormal, model::UniformStrip>;
  Model model = model::BivariateNormal{};
  /// Keep only population pairs with y >= x before any biased sampling.
  bool retain_y_ge_x = false;

  void validate() const {
    std::visit(
        [](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          const auto rho_ok = [](double r) {
            if (!(std::abs(r) < 1.0)) fail(ErrorCode::InvalidParameter, "correlation must satisfy |rho| < 1");
          };
          const auto clayton_ok = [](double t) {
            if (!(t > -1.0) || t == 0.0) fail(ErrorCode::InvalidParameter, "Clayton theta must be > -1 and nonzero");
          };
          if constexpr (std::is_same_v<T, model::BivariateNormal> || std::is_same_v<T, model::LogNormal>) {
            rho_ok(m.rho);
          } else if constexpr (std::is_same_v<T, model::GaussianCopula>) {
            rho_ok(m.rho);
            quasitest::validate(m.x);
            quasitest::validate(m.y);
          } else if constexpr (std::is_same_v<T, model::Gumbel>) {
            if (!(m.theta >= 1.0)) fail(ErrorCode::InvalidParameter, "Gumbel theta must be >= 1");
            quasitest::validate(m.x);
            quasitest::validate(m.y);
          } else if constexpr (std::is_same_v<T, model::Clayton>) {
            clayton_ok(m.theta);
            quasitest::validate(m.x);
            quasitest::validate(m.y);
          } else if constexpr (std::is_same_v<T, model::ClaytonMixture>) {
            clayton_ok(m.theta1);
            clayton_ok(m.theta2);
            if (!(m.p >= 0.0 && m.p <= 1.0)) fail(ErrorCode::InvalidParameter, "mixture weight must lie in [0, 1]");
            quasitest::validate(m.x);
            quasitest::validate(m.y);
          } else {
            if (!(m.delta > 0.0)) fail(ErrorCode::InvalidParameter, "strip width must be positive");
          }
        },
        model);
  }
};

namespace detail {

inline std::pair<double, double> correlated_normals(double rho, Rng& rng) {
  const double z1 = rng.normal();
  const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
  return {z1, z2};
}

/// Positive alpha-stable variable with Laplace transform exp(-s^alpha), 0 < alpha <= 1.
inline double positive_stable(double alpha, Rng& rng) {
  if (alpha == 1.0) return 1.0;
  const double u = std::numbers::pi * rng.uniform_open();
  const double e = rng.exponential();
  return std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha) *
         std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
}

/// (U, V) from the Clayton copula by conditional inversion.
inline std::pair<double, double> clayton_uv(double theta, Rng& rng) {
  const double u = rng.uniform_open();
  const double t = rng.uniform_open();
  double v = std::pow((std::pow(t, -theta / (1.0 + theta)) - 1.0) * std::pow(u, -theta) + 1.0, -1.0 / theta);
  v = std::clamp(v, std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon() / 2);
  return {u, v};
}

inline std::pair<double, double> gumbel_uv(double theta, Rng& rng) {
  const double alpha = 1.0 / theta;
  const double s = positive_stable(alpha, rng);
  const auto transform = [&](double e) {
    const double u = std::exp(-std::pow(e / s, alpha));
    return std::clamp(u, std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon() / 2);
  };
  const double e1 = rng.exponential();
  const double e2 = rng.exponential();
  return {transform(e1), transform(e2)};
}

inline std::pair<double, double> draw_pair(const GeneratorSpec::Model& m, Rng& rng) {
  return std::visit(
      [&rng](const auto& s) -> std::pair<double, double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, model::BivariateNormal>) {
          return correlated_normals(s.rho, rng);
        } else if constexpr (std::is_same_v<T, model::GaussianCopula>) {
          const auto [z1, z2] = correlated_normals(s.rho, rng);
          const auto u = [](double z) {
            return std::clamp(standard_normal_cdf(z), std::numeric_limits<double>::min(),
                              1.0 - std::numeric_limits<double>::epsilon() / 2);
          };
          return {quantile(s.x, u(z1)), quantile(s.y, u(z2))};
        } else if constexpr (std::is_same_v<T, model::Gumbel>) {
          const auto [u, v] = gumbel_uv(s.theta, rng);
          return {quantile(s.x, u), quantile(s.y, v)};
        } else if constexpr (std::is_same_v<T, model::Clayton>) {
          const auto [u, v] = clayton_uv(s.theta, rng);
          return {quantile(s.x, u), quantile(s.y, v)};
        } else if constexpr (std::is_same_v<T, model::ClaytonMixture>) {
          const double theta = rng.uniform() < s.p ? s.theta1 : s.theta2;
          const auto [u, v] = clayton_uv(theta, rng);
          return {quantile(s.x, u), quantile(s.y, v)};
        } else if constexpr (std::is_same_v<T, model::LogNormal>) {
          const auto [z1, z2] = correlated_normals(s.rho, rng);
          return {std::exp(z1), std::exp(z2)};
        } else {
          for (;;) {
            const double x = rng.uniform();
            const double y = rng.uniform();
            if (std::abs(x - y) < s.delta) return {x, y};
          }
        }
      },
      m);
}

inline std::pair<double, double> draw_population_pair(const GeneratorSpec& spec, Rng& rng) {
  for (;;) {
    auto p = draw_pair(spec.model, rng);
    if (!spec.retain_y_ge_x || p.second >= p.first) return p;
  }
}

}  // namespace detail

/// n independent pairs from the population law F_XY.
inline Sample draw_unbiased(const GeneratorSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  std::vector<Observation> obs(n);
  for (auto& o : obs) {
    const auto [x, y] = detail::draw_population_pair(spec, rng);
    o = {x, y, std::nullopt};
  }
  return Sample(std::move(obs));
}

/// Right censoring of left-truncated pairs: C ~ Gamma(shape, scale) measured
/// from entry x; the observed y is min(y, x + C) with delta = 1{y <= x + C}.
struct GammaCensoring {
  double shape = 2.0;
  double scale = 1.0;
};

struct BiasedSampler {
  GeneratorSpec generator;
  BiasFunction bias;
  /// Upper bound of w on the support; defaults to the family's own bound.
  std::optional<double> w_bound;
  std::optional<GammaCensoring> censoring;
};

struct BiasedDraw {
  Sample sample;
  double acceptance_rate = 1.0;
};

inline constexpr std::size_t kAcceptanceProbe = 1'000'000;

namespace detail {

/// Draws from the length-biased lognormal (x + y) f(x, y) exactly: it is an
/// equal mixture of lognormals whose log-means are shifted by (1, rho) and (rho, 1).
inline std::pair<double, double> draw_sum_biased_lognormal(double rho, Rng& rng) {
  const bool first = rng.uniform() < 0.5;
  const auto [z1, z2] = correlated_normals(rho, rng);
  return first ? std::pair{std::exp(z1 + 1.0), std::exp(z2 + rho)} : std::pair{std::exp(z1 + rho), std::exp(z2 + 1.0)};
}

inline bool has_exact_path(const BiasedSampler& s) {
  return s.bias.is<bias::SumXY>() && std::holds_alternative<model::LogNormal>(s.generator.model) &&
         !s.generator.retain_y_ge_x;
}

}  // namespace detail

/// n pairs from f^(w) = w f / E[w]. Acceptance sampling against w_bound,
/// except for the length-biased lognormal, which has an exact sampler.
inline BiasedDraw draw_biased(const BiasedSampler& s, std::size_t n, Rng& rng) {
  s.generator.validate();
  std::vector<Observation> obs;
  obs.reserve(n);
  BiasedDraw out;
  if (detail::has_exact_path(s)) {
    const double rho = std::get<model::LogNormal>(s.generator.model).rho;
    while (obs.size() < n) {
      const auto [x, y] = detail::draw_sum_biased_lognormal(rho, rng);
      obs.push_back({x, y, std::nullopt});
    }
  } else {
    const double bound = s.w_bound.value_or(s.bias.upper_bound());
    if (!std::isfinite(bound) || !(bound > 0.0)) {
      fail(ErrorCode::InvalidParameter, "a finite positive w_bound is required for " + s.bias.name());
    }
    std::size_t proposals = 0;
    while (obs.size() < n) {
      const auto [x, y] = detail::draw_population_pair(s.generator, rng);
      ++proposals;
      const double wv = s.bias(x, y);
      if (wv > bound) {
        fail(ErrorCode::BoundViolated, "w = " + std::to_string(wv) + " exceeds the bound " + std::to_string(bound));
      }
      if (wv > 0.0 && rng.uniform() * bound < wv) obs.push_back({x, y, std::nullopt});
      if (proposals % kAcceptanceProbe == 0 &&
          static_cast<double>(obs.size()) < 1e-6 * static_cast<double>(proposals)) {
        fail(ErrorCode::AcceptanceTooLow, "acceptance rate below 1e-6 after " + std::to_string(proposals) + " proposals");
      }
    }
    out.acceptance_rate = static_cast<double>(n) / static_cast<double>(proposals);
  }
  if (s.censoring) {
    if (!s.bias.is<bias::Truncation>()) fail(ErrorCode::InvalidParameter, "censoring applies to truncated sampling only");
    std::gamma_distribution<double> gamma(s.censoring->shape, s.censoring->scale);
    for (auto& o : obs) {
      const double c = gamma(rng);
      if (o.y <= o.x + c) {
        o.delta = 1;
      } else {
        o.y = o.x + c;
        o.delta = 0;
      }
    }
    out.sample = Sample(std::move(obs), true);
  } else {
    out.sample = Sample(std::move(obs));
  }
  return out;
}

/// Gamma scale giving the target censoring fraction among truncated pairs,
/// found by bisection on log scale over a fixed probe (deterministic in seed).
inline GammaCensoring calibrate_censoring(const GeneratorSpec& spec, double target = 0.275, double shape = 2.0,
                                          std::size_t probe = 10'000, std::uint64_t seed = 0) {
  BiasedSampler s{spec, BiasFunction(bias::Truncation{}), std::nullopt, std::nullopt};
  Rng rng(seed, stream_id(0, StreamPurpose::Censoring));
  const auto pairs = draw_biased(s, probe, rng).sample;
  std::vector<double> gaps(probe);
  for (std::size_t i = 0; i < probe; ++i) gaps[i] = pairs[i].y - pairs[i].x;
  // Common random numbers: C = scale * G with G ~ Gamma(shape, 1) fixed.
  std::gamma_distribution<double> gamma(shape, 1.0);
  std::vector<double> g(probe);
  for (auto& v : g) v = gamma(rng);
  const auto censored_fraction = [&](double scale) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < probe; ++i) c += scale * g[i] < gaps[i];
    return static_cast<double>(c) / static_cast<double>(probe);
  };
  double lo = -20.0, hi = 20.0;  // log scale
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censored_fraction(std::exp(mid)) > target ? lo : hi) = mid;
  }
  return {shape, std::exp(0.5 * (lo + hi))};
}

// ---------------------------------------------------------------------------
// Power studies

struct PowerRow {
  std::string model;
  BiasedSampler sampler;
  TestConfig config;
  std::size_t n = 100;
};

struct PowerResult {
  PowerRow row;
  RejectionRate result;
  std::string error;  // non-empty when the whole row failed
};

inline std::string method_label(const TestConfig& c) {
  switch (c.method) {
    case TestMethod::PermutationMcmc: return "WP";
    case TestMethod::PermutationIs: return "WPIS:" + to_string(c.scheme);
    case TestMethod::PermutationExact: return "WP-exact";
    case TestMethod::Bootstrap: return "Bootstrap:" + to_string(c.estimator);
  }
  return "unknown";
}

inline RejectionRate run_power_row(const PowerRow& row, double alpha, std::size_t reps, std::size_t threads = 0) {
  const auto gen = [&row](Rng& rng) { return draw_biased(row.sampler, row.n, rng).sample; };
  return null_rejection_rate(gen, row.sampler.bias, row.config, alpha, reps, threads);
}

/// One rejection rate per row; a failing row is recorded and the run continues.
inline std::vector<PowerResult> power_table(const std::vector<PowerRow>& rows, double alpha, std::size_t reps,
                                            std::size_t threads = 0) {
  std::vector<PowerResult> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    PowerResult r{row, {}, {}};
    try {
      r.result = run_power_row(row, alpha, reps, threads);
    } catch (const Error& e) {
      r.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_power_csv(std::ostream& os, const std::vector<PowerResult>& rows, double alpha, std::size_t reps) {
  os << "model,bias,method,statistic,n,B,reps,alpha,rate,ci_lo,ci_hi,mean_runtime_s\n";
  for (const auto& r : rows) {
    const auto& c = r.row.config;
    os << r.row.model << ',' << r.row.sampler.bias.name() << (r.row.sampler.censoring ? "+censored" : "") << ','
       << method_label(c) << ',' << to_string(c.statistic) << ',' << r.row.n << ',' << c.B << ',' << reps << ','
       << alpha << ',';
    if (!r.error.empty()) {
      os << "NA,NA,NA,NA\n";
      continue;
    }
    os << std::setprecision(6) << r.result.rate << ',' << r.result.ci.lo << ',' << r.result.ci.hi << ','
       << r.result.mean_runtime_s << '\n';
  }
}

inline void write_power_text(std::ostream& os, const std::vector<PowerResult>& rows) {
  for (const auto& r : rows) {
    os << std::left << std::setw(22) << r.row.model << std::setw(18) << method_label(r.row.config) << std::setw(20)
       << to_string(r.row.config.statistic);
    if (!r.error.empty()) {
      os << "failed: " << r.error << '\n';
      continue;
    }
    os << std::fixed << std::setprecision(3) << r.result.rate << "  [" << r.result.ci.lo << ", " << r.result.ci.hi
       << "]  " << std::setprecision(4) << r.result.mean_runtime_s << " s/test";
    if (!r.result.failures.empty()) os << "  (" << r.result.failures.size() << " failed)";
    os << '\n' << std::defaultfloat;
  }
}

// ---------------------------------------------------------------------------
// Presets

namespace preset {

inline std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline GeneratorSpec norm(double rho) { return {model::BivariateNormal{rho}, false}; }

/// Lifetime model, first reading: X ~ exponential with mean 5, Y ~ Weibull(shape 3, scale 8.5).
inline GeneratorSpec ld_main(double rho) {
  return {model::GaussianCopula{rho, marginal::Exponential{0.2}, marginal::Weibull{3.0, 8.5}}, false};
}

/// Lifetime model, second reading: X ~ exponential with rate 5, Y ~ Weibull(shape 8.5, scale 3).
inline GeneratorSpec ld_alt(double rho) {
  return {model::GaussianCopula{rho, marginal::Exponential{5.0}, marginal::Weibull{8.5, 3.0}}, false};
}

/// X ~ Weibull(0.5, 4), Y ~ U[0, 16], both with mean 8, population kept where y >= x.
inline GeneratorSpec cnorm(double rho) {
  return {model::GaussianCopula{rho, marginal::Weibull{0.5, 4.0}, marginal::Uniform{0.0, 16.0}}, true};
}

inline GeneratorSpec gumbel(double theta) { return {model::Gumbel{theta}, false}; }
inline GeneratorSpec clayton(double theta) { return {model::Clayton{theta}, false}; }
inline GeneratorSpec clayton_mix() { return {model::ClaytonMixture{0.5, -0.5, 0.5}, false}; }
inline GeneratorSpec lognormal(double rho) { return {model::LogNormal{rho}, false}; }

inline TestConfig wp(std::size_t b, StatisticKind k = StatisticKind::AdjustedHoeffding) {
  TestConfig c;
  c.method = TestMethod::PermutationMcmc;
  c.B = b;
  c.statistic = k;
  return c;
}

inline TestConfig is(SisScheme s, std::size_t b, StatisticKind k = StatisticKind::AdjustedHoeffding) {
  TestConfig c = wp(b, k);
  c.method = TestMethod::PermutationIs;
  c.scheme = s;
  return c;
}

inline TestConfig boot(MarginalEstimator e, std::size_t b, StatisticKind k = StatisticKind::AdjustedHoeffding) {
  TestConfig c = wp(b, k);
  c.method = TestMethod::Bootstrap;
  c.estimator = e;
  return c;
}

inline PowerRow truncated(std::string name, GeneratorSpec g, TestConfig c, std::size_t n = 100) {
  return {std::move(name), {std::move(g), BiasFunction(bias::Truncation{}), std::nullopt, std::nullopt}, c, n};
}

inline std::vector<PowerRow> table1_null(std::size_t b = 1000) { return {truncated("Norm(0)", norm(0.0), wp(b))}; }

/// Uncensored columns (WP and exchangeable bootstrap, n = 100) and the
/// censored WP column (n = 200) with Gamma censoring calibrated per model.
inline std::vector<PowerRow> table1(std::size_t b = 1000, bool with_censoring = true) {
  std::vector<std::pair<std::string, GeneratorSpec>> models;
  for (double r : {-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9}) models.emplace_back("Norm(" + fmt(r) + ")", norm(r));
  models.emplace_back("GC(1.6)", gumbel(1.6));
  models.emplace_back("CC(0.5)", clayton(0.5));
  models.emplace_back("LD(0)", ld_main(0.0));
  models.emplace_back("LD(0.4)", ld_main(0.4));
  models.emplace_back("CLmix", clayton_mix());
  for (double r : {-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9}) models.emplace_back("CNorm(" + fmt(r) + ")", cnorm(r));

  std::vector<PowerRow> rows;
  for (const auto& [name, g] : models) {
    rows.push_back(truncated(name, g, wp(b)));
    rows.push_back(truncated(name, g, boot(MarginalEstimator::ExchangeablePooled, b)));
    if (with_censoring) {
      auto row = truncated(name, g, wp(b), 200);
      row.sampler.censoring = calibrate_censoring(g);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// LogNormal rows of the strictly positive table, w(x,y) = x + y, both statistics.
inline std::vector<PowerRow> table2_lognormal(std::size_t b = 1000) {
  std::vector<PowerRow> rows;
  for (double r : {0.0, 0.2}) {
    const std::string name = "LogNormal(" + fmt(r) + ")";
    for (auto k : {StatisticKind::AdjustedHoeffding, StatisticKind::InverseWeighting}) {
      std::vector<TestConfig> cfgs = {is(SisScheme::KouMcCullagh, b, k), is(SisScheme::Uniform, b, k),
                                      is(SisScheme::Monotone, b, k),     is(SisScheme::Grid, b, k),
                                      wp(b, k),                          boot(MarginalEstimator::Npmle, b, k)};
      for (auto& c : cfgs) {
        rows.push_back({name, {lognormal(r), BiasFunction(bias::SumXY{}), std::nullopt, std::nullopt}, c, 100});
      }
    }
  }
  return rows;
}

/// Gaussian rows: Norm(rho) sampled under w proportional to the Norm(-rho) density.
inline std::vector<PowerRow> table2_gaussian(std::size_t b = 1000) {
  std::vector<PowerRow> rows;
  for (double r : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9}) {
    const std::string name = "Norm(" + fmt(r) + ")";
    for (auto k : {StatisticKind::AdjustedHoeffding, StatisticKind::InverseWeighting}) {
      std::vector<TestConfig> cfgs = {is(SisScheme::KouMcCullagh, b, k), is(SisScheme::Uniform, b, k),
                                      is(SisScheme::Monotone, b, k),     is(SisScheme::Grid, b, k),
                                      wp(b, k),                          boot(MarginalEstimator::Npmle, b, k)};
      for (auto& c : cfgs) {
        rows.push_back({name, {norm(r), BiasFunction(bias::GaussianDensityProduct{-r}), std::nullopt, std::nullopt}, c, 100});
      }
    }
  }
  return rows;
}

/// Exchangeable bootstrap on both readings of the lifetime model.
inline std::vector<PowerRow> ld_readings(std::size_t b = 1000) {
  std::vector<PowerRow> rows;
  for (double r : {0.0, 0.4}) {
    rows.push_back(truncated("LD-main(" + fmt(r) + ")", ld_main(r), wp(b)));
    rows.push_back(truncated("LD-main(" + fmt(r) + ")", ld_main(r), boot(MarginalEstimator::ExchangeablePooled, b)));
    rows.push_back(truncated("LD-alt(" + fmt(r) + ")", ld_alt(r), wp(b)));
    rows.push_back(truncated("LD-alt(" + fmt(r) + ")", ld_alt(r), boot(MarginalEstimator::ExchangeablePooled, b)));
  }
  return rows;
}

inline std::vector<std::string> names() {
  return {"table1-null", "table1", "table1-uncensored", "table2-lognormal", "table2-gaussian", "ld-readings"};
}

inline std::vector<PowerRow> by_name(const std::string& name, std::size_t b = 1000) {
  if (name == "table1-null") return table1_null(b);
  if (name == "table1") return table1(b, true);
  if (name == "table1-uncensored") return table1(b, false);
  if (name == "table2-lognormal") return table2_lognormal(b);
  if (name == "table2-gaussian") return table2_gaussian(b);
  if (name == "ld-readings") return ld_readings(b);
  fail(ErrorCode::InvalidArgument, "unknown preset '" + name + "'");
}

}  // namespace preset

}  // namespace quasitest
