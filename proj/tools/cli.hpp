#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "quasitest/quasitest.hpp"

namespace quasitest::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidParameter: return kUsage;
    case ErrorCode::DegenerateLaw:
    case ErrorCode::OracleTooLarge:
    case ErrorCode::DeadEnd:
    case ErrorCode::AllDrawsDead:
    case ErrorCode::ZeroTotalWeight:
    case ErrorCode::NoValidCenters:
    case ErrorCode::ZeroNormalizer:
    case ErrorCode::ZeroConditionalExpectation:
    case ErrorCode::BoundViolated:
    case ErrorCode::AcceptanceTooLow: return kNumerical;
    default: return kData;
  }
}

/// 64-bit FNV-1a of a byte string.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::ostringstream hex;
  hex << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(ss.str());
  return hex.str();
}

/// --bias values: constant | truncation | sum | gauss-prod:RHO | strip:DELTA |
/// huji[:CAP:HORIZON] | censoring | table:PATH. `censoring` resolves to the
/// Kaplan-Meier composite at test time and is returned as truncation here.
inline BiasFunction parse_bias(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidParameter, "bad number '" + s + "' in --bias " + spec);
    }
  };
  if (head == "constant" && rest.empty()) return BiasFunction(bias::Constant{});
  if ((head == "truncation" || head == "censoring") && rest.empty()) return BiasFunction(bias::Truncation{});
  if (head == "sum" && rest.empty()) return BiasFunction(bias::SumXY{});
  if (head == "gauss-prod" && !rest.empty()) return BiasFunction(bias::GaussianDensityProduct{number(rest)});
  if (head == "strip" && !rest.empty()) return BiasFunction(bias::StripIndicator{number(rest)});
  if (head == "huji") {
    if (rest.empty()) return BiasFunction(bias::HujiStyle{});
    const auto c2 = rest.find(':');
    if (c2 == std::string::npos) fail(ErrorCode::InvalidParameter, "use --bias huji or huji:CAP:HORIZON");
    return BiasFunction(bias::HujiStyle{number(rest.substr(0, c2)), number(rest.substr(c2 + 1))});
  }
  if (head == "table" && !rest.empty()) return load_tabulated_grid(rest);
  fail(ErrorCode::InvalidParameter, "unknown --bias '" + spec + "'");
}

inline TestMethod parse_method(const std::string& s) {
  if (s == "perm-mcmc") return TestMethod::PermutationMcmc;
  if (s == "perm-is") return TestMethod::PermutationIs;
  if (s == "perm-exact") return TestMethod::PermutationExact;
  if (s == "bootstrap") return TestMethod::Bootstrap;
  fail(ErrorCode::InvalidParameter, "unknown --method '" + s + "'");
}

inline SisScheme parse_scheme(const std::string& s) {
  if (s == "uniform") return SisScheme::Uniform;
  if (s == "monotone") return SisScheme::Monotone;
  if (s == "grid") return SisScheme::Grid;
  if (s == "kou-mccullagh") return SisScheme::KouMcCullagh;
  fail(ErrorCode::InvalidParameter, "unknown --scheme '" + s + "'");
}

inline MarginalEstimator parse_estimator(const std::string& s) {
  if (s == "npmle") return MarginalEstimator::Npmle;
  if (s == "exchangeable") return MarginalEstimator::ExchangeablePooled;
  if (s == "qi") return MarginalEstimator::QiIterative;
  fail(ErrorCode::InvalidParameter, "unknown --estimator '" + s + "'");
}

inline StatisticKind parse_statistic(const std::string& s) {
  if (s == "hoeffding") return StatisticKind::AdjustedHoeffding;
  if (s == "iw") return StatisticKind::InverseWeighting;
  fail(ErrorCode::InvalidParameter, "unknown --statistic '" + s + "'");
}

struct InputOptions {
  std::string path;
  std::string delimiter = ",";
  bool no_header = false;

  void add_to(CLI::App& app) {
    app.add_option("-i,--input", path, "CSV with columns x,y[,delta]")->required();
    app.add_option("--delimiter", delimiter, "field delimiter")->capture_default_str();
    app.add_flag("--no-header", no_header, "input has no header row (x,y[,delta] by position)");
  }

  Sample load() const {
    if (delimiter.size() != 1) fail(ErrorCode::InvalidParameter, "--delimiter must be a single character");
    return read_sample(InputSpec{path, delimiter[0], !no_header});
  }
};

struct TestOptions {
  InputOptions input;
  std::string bias = "truncation";
  std::string method = "perm-mcmc";
  std::string scheme = "uniform";
  std::string estimator = "qi";
  std::string statistic = "hoeffding";
  std::size_t B = 1000;
  std::uint64_t seed = 1;
  std::size_t thinning = 0;
  std::size_t burn_in = 0;
  bool naive = false;
  std::string manifest;
};

struct MarginalOptions {
  InputOptions input;
  std::string bias = "truncation";
  std::string estimator = "qi";
  double eps = 1e-6;
  std::size_t max_iter = 500;
};

struct SimulateOptions {
  std::string preset;
  std::string config;
  std::size_t reps = 500;
  double alpha = 0.05;
  std::size_t B = 1000;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::string out;
};

struct DrawsOptions {
  InputOptions input;
  std::string bias = "truncation";
  std::string sampler = "mcmc";
  std::size_t B = 100;
  std::uint64_t seed = 1;
  std::size_t thinning = 0;
  std::string out;
  std::string scatter;
};

/// Canonical argument vector for a resolved test run; replaying it
/// reproduces the run.
inline std::vector<std::string> canonical_test_args(const TestOptions& o) {
  std::vector<std::string> a = {"test", "--input", o.input.path, "--delimiter", o.input.delimiter, "--bias", o.bias,
                                "--method", o.method, "--scheme", o.scheme, "--estimator", o.estimator,
                                "--statistic", o.statistic, "--B", std::to_string(o.B), "--seed", std::to_string(o.seed),
                                "--thinning", std::to_string(o.thinning), "--burn-in", std::to_string(o.burn_in)};
  if (o.input.no_header) a.push_back("--no-header");
  if (o.naive) a.push_back("--naive-expectations");
  return a;
}

inline int cmd_test(const TestOptions& o, std::ostream& out, std::ostream& err) {
  const Sample sample = o.input.load();
  const BiasFunction w = parse_bias(o.bias);
  const bool censoring = o.bias == "censoring";
  if (censoring && !sample.censored()) fail(ErrorCode::InvalidArgument, "--bias censoring needs a delta column");
  if (!censoring && sample.censored()) {
    fail(ErrorCode::InvalidArgument, "input has a delta column; use --bias censoring");
  }
  TestConfig cfg;
  cfg.method = parse_method(o.method);
  cfg.scheme = parse_scheme(o.scheme);
  cfg.estimator = parse_estimator(o.estimator);
  cfg.statistic = parse_statistic(o.statistic);
  cfg.expected = o.naive ? ExpectedMode::NaiveEmpirical : ExpectedMode::PairProbs;
  cfg.B = o.B;
  cfg.seed = o.seed;
  cfg.mcmc.thinning = o.thinning;
  cfg.mcmc.burn_in = o.burn_in;
  if (o.naive) err << "warning: naive empirical expectations ignore the bias function and lose power\n";
  const auto report = run_test(sample, w, cfg);
  out << to_json(report).dump(2) << '\n';
  if (!o.manifest.empty()) {
    nlohmann::ordered_json m;
    m["version"] = kVersion;
    m["command"] = "test";
    m["seed"] = o.seed;
    m["input"] = o.input.path;
    m["input_digest"] = file_digest(o.input.path);
    m["resolved"] = {{"bias", o.bias},           {"method", o.method},   {"scheme", o.scheme},
                     {"estimator", o.estimator}, {"statistic", o.statistic}, {"B", o.B},
                     {"thinning", o.thinning},   {"burn_in", o.burn_in}, {"naive_expectations", o.naive},
                     {"delimiter", o.input.delimiter}, {"header", !o.input.no_header}};
    m["args"] = canonical_test_args(o);
    std::ofstream f(o.manifest);
    if (!f) fail(ErrorCode::IoError, "cannot write manifest '" + o.manifest + "'");
    f << m.dump(2) << '\n';
  }
  return kOk;
}

inline void write_cdf(std::ostream& out, const std::string& variable, const DiscreteCDF& f) {
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    acc += f.mass()[k];
    out << variable << ',' << f.support()[k] << ',' << f.mass()[k] << ',' << std::min(acc, 1.0) << '\n';
  }
}

inline int cmd_marginals(const MarginalOptions& o, std::ostream& out, std::ostream& err) {
  const Sample sample = o.input.load();
  const BiasFunction w = parse_bias(o.bias);
  QiOptions qi{o.eps, o.max_iter};
  const auto fit = estimate_marginals(sample, w, parse_estimator(o.estimator), qi);
  if (fit.trace && !fit.trace->converged) {
    err << "warning: no convergence after " << fit.trace->iterations << " sweeps\n";
  }
  out << std::setprecision(17) << "variable,value,mass,cdf\n";
  write_cdf(out, "x", fit.x);
  write_cdf(out, "y", fit.y);
  return kOk;
}

namespace detail {

inline GeneratorSpec model_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  const double rho = j.value("rho", 0.0);
  const double theta = j.value("theta", 1.0);
  if (type == "norm") return preset::norm(rho);
  if (type == "lognormal") return preset::lognormal(rho);
  if (type == "gumbel") return preset::gumbel(theta);
  if (type == "clayton") return preset::clayton(theta);
  if (type == "clayton-mix") return preset::clayton_mix();
  if (type == "ld-main") return preset::ld_main(rho);
  if (type == "ld-alt") return preset::ld_alt(rho);
  if (type == "cnorm") return preset::cnorm(rho);
  if (type == "strip") return {model::UniformStrip{j.value("delta", 0.3)}, false};
  fail(ErrorCode::InvalidParameter, "unknown model type '" + type + "'");
}

/// {"rows": [{"name", "model": {"type", ...}, "bias", "method", "scheme",
///  "estimator", "statistic", "n", "B", "censoring": bool, "w_bound"}]}
inline std::vector<PowerRow> rows_from_config(const std::string& path, std::size_t default_b) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
  std::vector<PowerRow> rows;
  try {
    for (const auto& r : j.at("rows")) {
      PowerRow row;
      row.sampler.generator = model_from_json(r.at("model"));
      row.sampler.bias = parse_bias(r.value("bias", std::string("truncation")));
      if (r.contains("w_bound")) row.sampler.w_bound = r.at("w_bound").get<double>();
      row.config.method = parse_method(r.value("method", std::string("perm-mcmc")));
      row.config.scheme = parse_scheme(r.value("scheme", std::string("uniform")));
      row.config.estimator = parse_estimator(r.value("estimator", std::string("qi")));
      row.config.statistic = parse_statistic(r.value("statistic", std::string("hoeffding")));
      row.config.B = r.value("B", default_b);
      row.n = r.value("n", std::size_t{100});
      if (r.value("censoring", false)) row.sampler.censoring = calibrate_censoring(row.sampler.generator);
      row.model = r.value("name", r.at("model").at("type").get<std::string>());
      rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
  return rows;
}

}  // namespace detail

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  if (o.preset.empty() == o.config.empty()) fail(ErrorCode::InvalidParameter, "give exactly one of --preset or --config");
  auto rows = o.preset.empty() ? detail::rows_from_config(o.config, o.B) : preset::by_name(o.preset, o.B);
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k].config.seed = splitmix64(o.seed + k);
  for (const auto& r : rows) {
    if (r.sampler.censoring) {
      err << "calibrated censoring for " << r.model << ": Gamma(shape " << r.sampler.censoring->shape << ", scale "
          << r.sampler.censoring->scale << ")\n";
    }
  }
  const auto results = power_table(rows, o.alpha, o.reps, o.threads);
  write_power_text(err, results);
  if (o.out.empty()) {
    write_power_csv(out, results, o.alpha, o.reps);
  } else {
    std::ofstream f(o.out);
    if (!f) fail(ErrorCode::IoError, "cannot write '" + o.out + "'");
    write_power_csv(f, results, o.alpha, o.reps);
  }
  return kOk;
}

inline int cmd_draws(const DrawsOptions& o, std::ostream& out, std::ostream&) {
  const Sample input = o.input.load();
  Sample sample = input;
  BiasFunction w = parse_bias(o.bias);
  if (o.bias == "censoring") {
    auto adj = censoring_weight(input);
    sample = std::move(adj.uncensored);
    w = std::move(adj.bias);
  }
  const WeightMatrix wm = build_weight_matrix(sample, w);
  PermutationDraws d;
  if (o.sampler == "mcmc") {
    McmcConfig cfg;
    cfg.draws = o.B + 1;
    cfg.seed = o.seed;
    cfg.thinning = o.thinning;
    cfg.accumulate_all_states = false;
    d = sample_permutations_mcmc(wm, cfg);
  } else {
    d = sis_sample(wm, parse_scheme(o.sampler), o.B + 1, o.seed);
  }
  const auto write_to = [](const std::string& path, auto&& writer) {
    std::ofstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot write '" + path + "'");
    writer(f);
  };
  if (!o.out.empty()) write_to(o.out, [&](std::ostream& f) { write_draws_csv(f, d); });
  if (!o.scatter.empty()) {
    write_to(o.scatter, [&](std::ostream& f) {
      f << std::setprecision(17) << "draw_index,i,x,y\n";
      for (std::size_t b = 0; b < d.size(); ++b) {
        if (d.log_target[b] == kNegInf) continue;
        for (std::size_t i = 0; i < sample.size(); ++i) {
          f << b << ',' << i + 1 << ',' << sample[i].x << ',' << sample[d.permutations[b][i]].y << '\n';
        }
      }
    });
  }
  nlohmann::ordered_json s;
  s["sampler"] = to_string(d.scheme);
  s["draws"] = d.size();
  s["seed"] = o.seed;
  if (d.acceptance_rate) s["acceptance_rate"] = *d.acceptance_rate;
  if (d.log_proposal) {
    s["is_weight_cv"] = importance_weight_cv(d);
    s["dead_ends"] = d.dead_ends;
    s["clamp_events"] = d.clamp_events;
  }
  out << s.dump(2) << '\n';
  return kOk;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
  const auto args = m.at("args").get<std::vector<std::string>>();
  const std::string input = m.at("input").get<std::string>();
  if (file_digest(input) != m.at("input_digest").get<std::string>()) {
    fail(ErrorCode::InvalidArgument, "input '" + input + "' does not match the manifest digest");
  }
  if (m.value("version", std::string()) != kVersion) {
    err << "warning: manifest written by version " << m.value("version", std::string("?")) << ", running "
        << kVersion << '\n';
  }
  return run_cli(args, out, err);
}

/// Entry point shared by the executable and the tests. `args` excludes argv[0].
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tests of quasi-independence under biased sampling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TestOptions t;
  auto* test = app.add_subcommand("test", "run a test and print a JSON report");
  t.input.add_to(*test);
  test->add_option("--bias", t.bias, "constant|truncation|sum|gauss-prod:RHO|strip:D|huji|censoring|table:PATH")
      ->capture_default_str();
  test->add_option("--method", t.method, "perm-mcmc|perm-is|perm-exact|bootstrap")->capture_default_str();
  test->add_option("--scheme", t.scheme, "importance proposal: uniform|monotone|grid|kou-mccullagh")
      ->capture_default_str();
  test->add_option("--estimator", t.estimator, "bootstrap marginals: npmle|exchangeable|qi")->capture_default_str();
  test->add_option("--statistic", t.statistic, "hoeffding|iw")->capture_default_str();
  test->add_option("-B,--B", t.B, "number of permutations or bootstrap samples")->capture_default_str();
  test->add_option("--seed", t.seed, "random seed")->capture_default_str();
  test->add_option("--thinning", t.thinning, "MCMC steps between retained draws (0 = 2n)")->capture_default_str();
  test->add_option("--burn-in", t.burn_in, "MCMC burn-in steps")->capture_default_str();
  test->add_flag("--naive-expectations", t.naive, "diagnostic: empirical expectations ignoring w");
  test->add_option("--manifest", t.manifest, "write a replayable run manifest");

  MarginalOptions mo;
  auto* marg = app.add_subcommand("marginals", "estimate marginal CDFs; CSV variable,value,mass,cdf");
  mo.input.add_to(*marg);
  marg->add_option("--bias", mo.bias, "bias function")->capture_default_str();
  marg->add_option("--estimator", mo.estimator, "npmle|exchangeable|qi")->capture_default_str();
  marg->add_option("--eps", mo.eps, "convergence threshold (qi)")->capture_default_str();
  marg->add_option("--max-iter", mo.max_iter, "maximum sweeps (qi)")->capture_default_str();

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "power study; CSV to stdout or --out");
  sim->add_option("--preset", so.preset, "table1-null|table1|table1-uncensored|table2-lognormal|table2-gaussian|ld-readings");
  sim->add_option("--config", so.config, "JSON file with a rows array");
  sim->add_option("--reps", so.reps, "replications per row")->capture_default_str();
  sim->add_option("--alpha", so.alpha, "significance level")->capture_default_str();
  sim->add_option("-B,--B", so.B, "resamples per test")->capture_default_str();
  sim->add_option("--seed", so.seed, "random seed")->capture_default_str();
  sim->add_option("--threads", so.threads, "worker threads (0 = QUASITEST_THREADS or all cores)");
  sim->add_option("--out", so.out, "output CSV path");

  DrawsOptions d;
  auto* draws = app.add_subcommand("draws", "sample permutations; JSON summary, CSV dumps");
  d.input.add_to(*draws);
  draws->add_option("--bias", d.bias, "bias function")->capture_default_str();
  draws->add_option("--sampler", d.sampler, "mcmc|uniform|monotone|grid|kou-mccullagh")->capture_default_str();
  draws->add_option("-B,--B", d.B, "draws besides the identity")->capture_default_str();
  draws->add_option("--seed", d.seed, "random seed")->capture_default_str();
  draws->add_option("--thinning", d.thinning, "MCMC steps between draws (0 = 2n)")->capture_default_str();
  draws->add_option("--out", d.out, "draws CSV: draw_index,log_target,log_proposal,acceptance_rate");
  draws->add_option("--scatter", d.scatter, "scatter CSV: draw_index,i,x,y");

  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "re-run a manifest written by test --manifest");
  replay->add_option("manifest", manifest_path, "manifest JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*test) return cmd_test(t, out, err);
    if (*marg) return cmd_marginals(mo, out, err);
    if (*sim) return cmd_simulate(so, out, err);
    if (*draws) return cmd_draws(d, out, err);
    if (*replay) return cmd_replay(manifest_path, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kUsage;
}

}  // namespace quasitest::cli
