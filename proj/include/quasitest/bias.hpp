#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "quasitest/core.hpp"
#include "quasitest/error.hpp"

namespace quasitest {

/// Right-continuous, non-increasing step function with S = 1 before the first jump.
class StepSurvival {
 public:
  StepSurvival() = default;

  StepSurvival(std::vector<double> jump_times, std::vector<double> values)
      : jump_times_(std::move(jump_times)), values_(std::move(values)) {
    if (jump_times_.size() != values_.size()) fail(ErrorCode::LengthMismatch, "jump times and values differ in length");
    double prev_t = -std::numeric_limits<double>::infinity();
    double prev_v = 1.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!(jump_times_[k] > prev_t)) fail(ErrorCode::InvalidArgument, "jump times must be strictly increasing");
      if (values_[k] < 0.0 || values_[k] > prev_v) {
        fail(ErrorCode::InvalidArgument, "survival values must be non-increasing in [0, 1]");
      }
      prev_t = jump_times_[k];
      prev_v = values_[k];
    }
  }

  /// Constant S = 1.
  static StepSurvival unit() { return {}; }

  double operator()(double t) const {
    const auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
    if (it == jump_times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
  }

  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Largest duration seen when the curve was estimated; beyond it the last
  /// value is carried forward.
  double support_end() const noexcept { return support_end_; }
  void set_support_end(double t) { support_end_ = t; }

 private:
  std::vector<double> jump_times_;
  std::vector<double> values_;
  double support_end_ = std::numeric_limits<double>::infinity();
};

/// Product-limit estimator. At tied times events are counted before the risk
/// set drops, so subjects censored at t are still at risk at t.
inline StepSurvival kaplan_meier(std::span<const double> durations, std::span<const int> events) {
  if (durations.empty()) fail(ErrorCode::EmptyInput, "kaplan_meier needs at least one duration");
  if (durations.size() != events.size()) fail(ErrorCode::LengthMismatch, "durations and events differ in length");
  const std::size_t n = durations.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (!(durations[i] >= 0.0) || !std::isfinite(durations[i])) {
      fail(ErrorCode::InvalidArgument, "durations must be finite and non-negative (row " + std::to_string(i + 1) + ")");
    }
    if (events[i] != 0 && events[i] != 1) fail(ErrorCode::InvalidArgument, "events must be 0 or 1");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return durations[a] < durations[b]; });

  std::vector<double> times;
  std::vector<double> values;
  double s = 1.0;
  std::size_t at_risk = n;
  for (std::size_t k = 0; k < n;) {
    const double t = durations[order[k]];
    std::size_t d = 0;
    std::size_t leaving = 0;
    while (k < n && durations[order[k]] == t) {
      d += static_cast<std::size_t>(events[order[k]]);
      ++leaving;
      ++k;
    }
    if (d > 0) {
      // (r - d) / r is correctly rounded, unlike 1 - d / r.
      s *= static_cast<double>(at_risk - d) / static_cast<double>(at_risk);
      times.push_back(t);
      values.push_back(s);
    }
    at_risk -= leaving;
  }
  StepSurvival out(std::move(times), std::move(values));
  out.set_support_end(durations[order.back()]);
  return out;
}

namespace bias {

struct Constant {};
/// w(x, y) = 1{x < y}.
struct Truncation {};
/// w(x, y) = x + y (length bias on the total).
struct SumXY {};
/// Unnormalized standard bivariate normal density with correlation rho.
struct GaussianDensityProduct {
  double rho = 0.0;
};
/// w(x, y) = 1{|y - x| < delta}.
struct StripIndicator {
  double delta = 1.0;
};
/// w(x, y) = min(horizon - x - y, cap) * 1{x + y < horizon}.
struct HujiStyle {
  double cap = 18.0;
  double horizon = 65.0;
};
/// w(x, y) = 1{x < y} * S(y - x) for a censoring survival curve S.
struct CensoringComposite {
  StepSurvival survival;
};
/// Nearest-neighbour lookup on a rectangular grid.
struct TabulatedGrid {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;  // row-major, xs.size() x ys.size()
};

}  // namespace bias

/// A non-negative weight function w(x, y) from the built-in families.
class BiasFunction {
 public:
  using Kind = std::variant<bias::Constant, bias::Truncation, bias::SumXY, bias::GaussianDensityProduct,
                            bias::StripIndicator, bias::HujiStyle, bias::CensoringComposite,
                            bias::TabulatedGrid>;

  BiasFunction() : kind_(bias::Constant{}) {}
  BiasFunction(Kind kind) : kind_(std::move(kind)) {  // NOLINT(google-explicit-constructor)
    if (const auto* g = std::get_if<bias::GaussianDensityProduct>(&kind_)) {
      if (!(std::abs(g->rho) < 1.0)) fail(ErrorCode::InvalidParameter, "gaussian bias needs |rho| < 1");
    }
    if (const auto* t = std::get_if<bias::TabulatedGrid>(&kind_)) {
      if (t->xs.empty() || t->ys.empty() || t->values.size() != t->xs.size() * t->ys.size()) {
        fail(ErrorCode::InvalidParameter, "tabulated grid must be rectangular and non-empty");
      }
      if (!std::is_sorted(t->xs.begin(), t->xs.end()) || !std::is_sorted(t->ys.begin(), t->ys.end())) {
        fail(ErrorCode::InvalidParameter, "tabulated grid axes must be sorted");
      }
      for (double v : t->values) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::NegativeWeight, "tabulated weights must be finite and >= 0");
      }
    }
  }

  const Kind& kind() const noexcept { return kind_; }

  template <typename T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind_);
  }

  /// Throws NegativeWeight where the family is negative (SumXY, HujiStyle off-range).
  double operator()(double x, double y) const {
    const double v = std::visit([&](const auto& k) { return eval(k, x, y); }, kind_);
    if (v < 0.0) {
      fail(ErrorCode::NegativeWeight, name() + " is negative at (" + std::to_string(x) + ", " +
                                          std::to_string(y) + ")");
    }
    return v;
  }

  /// True when w > 0 wherever it is defined (inverse weighting is possible).
  bool strictly_positive() const {
    return is<bias::Constant>() || is<bias::SumXY>() || is<bias::GaussianDensityProduct>();
  }

  /// sup w when the family is bounded, else infinity.
  double upper_bound() const {
    return std::visit(
        [](const auto& k) -> double {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, bias::SumXY>) {
            return std::numeric_limits<double>::infinity();
          } else if constexpr (std::is_same_v<T, bias::HujiStyle>) {
            return k.cap;
          } else if constexpr (std::is_same_v<T, bias::TabulatedGrid>) {
            return *std::max_element(k.values.begin(), k.values.end());
          } else {
            return 1.0;
          }
        },
        kind_);
  }

  /// Coefficients (a_x, a_y, b) when w = a_x x + a_y y + b.
  std::optional<std::array<double, 3>> linear_coefficients() const {
    if (is<bias::SumXY>()) return std::array<double, 3>{1.0, 1.0, 0.0};
    if (is<bias::Constant>()) return std::array<double, 3>{0.0, 0.0, 1.0};
    return std::nullopt;
  }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, bias::Constant>) return "constant";
          else if constexpr (std::is_same_v<T, bias::Truncation>) return "truncation";
          else if constexpr (std::is_same_v<T, bias::SumXY>) return "sum";
          else if constexpr (std::is_same_v<T, bias::GaussianDensityProduct>) {
            std::ostringstream os;
            os << "gauss-prod:" << k.rho;
            return os.str();
          } else if constexpr (std::is_same_v<T, bias::StripIndicator>) {
            std::ostringstream os;
            os << "strip:" << k.delta;
            return os.str();
          } else if constexpr (std::is_same_v<T, bias::HujiStyle>) return "huji";
          else if constexpr (std::is_same_v<T, bias::CensoringComposite>) return "censoring";
          else return "table";
        },
        kind_);
  }

 private:
  static double eval(const bias::Constant&, double, double) { return 1.0; }
  static double eval(const bias::Truncation&, double x, double y) { return x < y ? 1.0 : 0.0; }
  static double eval(const bias::SumXY&, double x, double y) { return x + y; }
  static double eval(const bias::GaussianDensityProduct& g, double x, double y) {
    const double q = (x * x - 2.0 * g.rho * x * y + y * y) / (1.0 - g.rho * g.rho);
    return std::exp(-0.5 * q);
  }
  static double eval(const bias::StripIndicator& s, double x, double y) {
    return std::abs(y - x) < s.delta ? 1.0 : 0.0;
  }
  static double eval(const bias::HujiStyle& h, double x, double y) {
    return x + y < h.horizon ? std::min(h.horizon - x - y, h.cap) : 0.0;
  }
  static double eval(const bias::CensoringComposite& c, double x, double y) {
    return x < y ? c.survival(y - x) : 0.0;
  }
  static double eval(const bias::TabulatedGrid& t, double x, double y) {
    const auto nearest = [](const std::vector<double>& axis, double v) {
      const auto it = std::lower_bound(axis.begin(), axis.end(), v);
      if (it == axis.begin()) return std::size_t{0};
      if (it == axis.end()) return axis.size() - 1;
      const auto hi = static_cast<std::size_t>(it - axis.begin());
      return (v - axis[hi - 1] <= axis[hi] - v) ? hi - 1 : hi;
    };
    return t.values[nearest(t.xs, x) * t.ys.size() + nearest(t.ys, y)];
  }

  Kind kind_;
};

inline double evaluate(const BiasFunction& w, double x, double y) { return w(x, y); }

struct CensoringAdjustment {
  BiasFunction bias;
  Sample uncensored;
  /// True when some permuted pair (x_i, y_j) falls beyond the last observed
  /// duration, where the survival tail is carried forward.
  bool tail_extrapolated = false;
};

/// Weight 1{x<y} S(y-x) with S the Kaplan-Meier estimate of the censoring
/// survival from {(y_i - x_i, 1 - delta_i)}, plus the uncensored subsample.
inline CensoringAdjustment censoring_weight(const Sample& sample) {
  if (!sample.censored()) fail(ErrorCode::InvalidArgument, "censoring_weight needs a sample with delta indicators");
  std::vector<double> durations(sample.size());
  std::vector<int> events(sample.size());
  std::vector<Observation> kept;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& o = sample[i];
    if (!(o.x < o.y)) {
      fail(ErrorCode::NonTruncatedInput, "row " + std::to_string(i + 1) + " violates x < y");
    }
    durations[i] = o.y - o.x;
    events[i] = 1 - *o.delta;
    if (*o.delta == 1) kept.push_back({o.x, o.y, std::nullopt});
  }
  if (kept.size() < 2) {
    fail(ErrorCode::TooFewUncensored, "need at least 2 uncensored observations, got " + std::to_string(kept.size()));
  }
  StepSurvival s = kaplan_meier(durations, events);
  const double end = s.support_end();
  bool extrapolated = false;
  for (const auto& a : kept) {
    for (const auto& b : kept) {
      if (a.x < b.y && b.y - a.x > end) extrapolated = true;
    }
  }
  return {BiasFunction(bias::CensoringComposite{std::move(s)}), Sample(std::move(kept)), extrapolated};
}

/// Reads a `x,y,w` CSV into a rectangular nearest-neighbour grid.
inline BiasFunction load_tabulated_grid(std::istream& in, const std::string& source = "grid") {
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, source + ": empty file");
  ++row;
  {
    std::string h;
    for (char c : line) {
      if (c != ' ' && c != '\r' && c != '\t') h.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (h != "x,y,w") fail(ErrorCode::ParseError, source + ": row 1: header must be x,y,w");
  }
  std::map<std::pair<double, double>, double> cells;
  std::vector<double> xs, ys;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string f[3];
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, f[k], ',')) fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": expected 3 fields");
    }
    double v[3];
    for (int k = 0; k < 3; ++k) {
      try {
        std::size_t pos = 0;
        v[k] = std::stod(f[k], &pos);
        if (f[k].find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": bad number '" + f[k] + "'");
      }
    }
    if (v[2] < 0.0) fail(ErrorCode::NegativeWeight, source + ": row " + std::to_string(row) + ": negative weight");
    if (!cells.emplace(std::make_pair(v[0], v[1]), v[2]).second) {
      fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": duplicate grid point");
    }
    xs.push_back(v[0]);
    ys.push_back(v[1]);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  if (cells.size() != xs.size() * ys.size() || cells.empty()) {
    fail(ErrorCode::ParseError, source + ": grid is not rectangular");
  }
  std::vector<double> values;
  values.reserve(cells.size());
  for (double x : xs) {
    for (double y : ys) values.push_back(cells.at({x, y}));
  }
  return BiasFunction(bias::TabulatedGrid{std::move(xs), std::move(ys), std::move(values)});
}

inline BiasFunction load_tabulated_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  return load_tabulated_grid(in, path);
}

}  // namespace quasitest
