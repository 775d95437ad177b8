#include "pfgmm/penalty.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace pfgmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, std::string_view key) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("penalty: cannot parse value for '" + std::string(key) + "': " + text);
  }
  return value;
}

double deriv_at_zero(const PenaltySpec& spec) {
  return spec.family == PenaltyFamily::HardThreshold ? 2.0 * spec.lambda : spec.lambda;
}

}  // namespace

void PenaltySpec::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidParameter("penalty lambda must be > 0");
  if (family == PenaltyFamily::Scad && !(shape > 2.0)) {
    throw InvalidParameter("SCAD shape a must exceed 2");
  }
  if (family == PenaltyFamily::Mcp && !(shape > 1.0)) {
    throw InvalidParameter("MCP shape gamma must exceed 1");
  }
}

PenaltySpec parse_penalty(std::string_view text) {
  const auto colon = text.find(':');
  const std::string family = trim(text.substr(0, colon));
  PenaltySpec spec;
  if (family == "scad") {
    spec = PenaltySpec::scad(0.1);
  } else if (family == "mcp") {
    spec = PenaltySpec::mcp(0.1);
  } else if (family == "l1" || family == "lasso") {
    spec = PenaltySpec::l1(0.1);
  } else if (family == "hard") {
    spec = PenaltySpec::hard(0.1);
  } else {
    throw ConfigError("unknown penalty family '" + family + "'");
  }
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string item = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("penalty: expected key=value, got " + item);
      const std::string key = trim(std::string_view(item).substr(0, eq));
      const double value = parse_number(trim(std::string_view(item).substr(eq + 1)), key);
      if (key == "lambda") {
        spec.lambda = value;
      } else if (key == "a" && spec.family == PenaltyFamily::Scad) {
        spec.shape = value;
      } else if (key == "gamma" && spec.family == PenaltyFamily::Mcp) {
        spec.shape = value;
      } else {
        throw ConfigError("penalty: unknown key '" + key + "' for family " + family);
      }
    }
  }
  try {
    spec.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("penalty: ") + e.what());
  }
  return spec;
}

std::string to_string(const PenaltySpec& spec) {
  auto fmt = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  switch (spec.family) {
    case PenaltyFamily::Scad: return "scad:lambda=" + fmt(spec.lambda) + ",a=" + fmt(spec.shape);
    case PenaltyFamily::Mcp: return "mcp:lambda=" + fmt(spec.lambda) + ",gamma=" + fmt(spec.shape);
    case PenaltyFamily::L1: return "l1:lambda=" + fmt(spec.lambda);
    case PenaltyFamily::HardThreshold: return "hard:lambda=" + fmt(spec.lambda);
  }
  return "?";
}

std::vector<PenaltyPiece> pieces(const PenaltySpec& spec) {
  const double lam = spec.lambda;
  switch (spec.family) {
    case PenaltyFamily::Scad: {
      const double a = spec.shape;
      return {
          {0.0, lam, 0.0, lam, 0.0},
          {lam, a * lam, -lam * lam / (2.0 * (a - 1.0)), a * lam / (a - 1.0), -1.0 / (2.0 * (a - 1.0))},
          {a * lam, kInf, (a + 1.0) * lam * lam / 2.0, 0.0, 0.0},
      };
    }
    case PenaltyFamily::Mcp: {
      const double g = spec.shape;
      return {
          {0.0, g * lam, 0.0, lam, -1.0 / (2.0 * g)},
          {g * lam, kInf, g * lam * lam / 2.0, 0.0, 0.0},
      };
    }
    case PenaltyFamily::L1:
      return {{0.0, kInf, 0.0, lam, 0.0}};
    case PenaltyFamily::HardThreshold:
      return {
          {0.0, lam, 0.0, 2.0 * lam, -1.0},
          {lam, kInf, lam * lam, 0.0, 0.0},
      };
  }
  return {};
}

double pen_value(const PenaltySpec& spec, double t) {
  if (!(t >= 0.0)) throw InvalidParameter("pen_value needs t >= 0");
  for (const auto& pc : pieces(spec)) {
    if (t <= pc.hi) return pc.c0 + pc.c1 * t + pc.c2 * t * t;
  }
  return 0.0;
}

double pen_deriv(const PenaltySpec& spec, double t) {
  if (!(t > 0.0)) throw InvalidParameter("pen_deriv needs t > 0");
  for (const auto& pc : pieces(spec)) {
    if (t <= pc.hi) return std::max(0.0, pc.c1 + 2.0 * pc.c2 * t);
  }
  return 0.0;
}

double max_concavity(const PenaltySpec& spec, double lo, double hi) {
  double out = 0.0;
  for (const auto& pc : pieces(spec)) {
    if (pc.lo <= hi && pc.hi >= lo) out = std::max(out, -2.0 * pc.c2);
  }
  return out;
}

double zeta(const PenaltySpec& spec, std::span<const double> beta_S) {
  double out = 0.0;
  for (double b : beta_S) {
    if (b == 0.0) throw InvalidParameter("zeta is defined near nonzero coordinates only");
    const double t = std::abs(b);
    out = std::max(out, max_concavity(spec, t, t));
  }
  return out;
}

ScalarMinimum minimize_penalized_quadratic(const PenaltySpec& spec, double a, double b,
                                           double weight) {
  if (!(a > 0.0)) {
    if (a == 0.0 && b == 0.0) return {0.0, 0.0};
    throw InvalidParameter("minimize_penalized_quadratic needs a > 0");
  }
  if (weight == 0.0) {
    const double t = -b / (2.0 * a);
    return {t, a * t * t + b * t};
  }
  ScalarMinimum best{0.0, 0.0};
  auto consider = [&](double t, double value) {
    if (value < best.value || (value == best.value && std::abs(t) < std::abs(best.t))) {
      best = {t, value};
    }
  };
  for (const auto& pc : pieces(spec)) {
    const double quad = a + weight * pc.c2;
    for (const double sign : {1.0, -1.0}) {
      const double lin = sign * b + weight * pc.c1;
      auto eval = [&](double u) { return quad * u * u + lin * u + weight * pc.c0; };
      consider(sign * pc.lo, eval(pc.lo));
      if (std::isfinite(pc.hi)) consider(sign * pc.hi, eval(pc.hi));
      if (quad > 0.0) {
        const double u = -lin / (2.0 * quad);
        if (u > pc.lo && u < pc.hi) consider(sign * u, eval(u));
      }
    }
  }
  return best;
}

bool AssumptionReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const AssumptionCheck& c) { return !c.has_verdict || c.pass; });
}

const AssumptionCheck* AssumptionReport::find(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

AssumptionReport check_assumptions_PA(const PenaltySpec& spec, int n, int p, int s, double d_n,
                                      std::span<const double> beta0_S) {
  spec.validate();
  if (n < 1 || p < 1 || s < 0) throw InvalidParameter("check_assumptions_PA: bad dimensions");
  AssumptionReport report;
  if (s == 0) {
    for (const char* name : {"P1", "P2", "P3", "A1.deriv_s2", "A2.dim", "A2.zeta"}) {
      report.checks.push_back({name, 0.0, 0.0, true, true});
    }
    return report;
  }
  if (!(d_n > 0.0)) throw InvalidParameter("check_assumptions_PA: d_n must be positive");

  // (P1) concave, nondecreasing, P(0) = 0, on a grid out to well past the kinks.
  {
    const double top = 4.0 * std::max(spec.lambda * std::max(spec.shape, 1.0), d_n);
    double worst = 0.0;
    constexpr int kGrid = 400;
    double prev = pen_value(spec, 0.0);
    worst = std::max(worst, std::abs(prev));
    for (int k = 1; k <= kGrid; ++k) {
      const double t1 = top * (k - 1) / kGrid;
      const double t2 = top * k / kGrid;
      const double cur = pen_value(spec, t2);
      worst = std::max(worst, prev - cur);  // decrease
      for (int m = 0; m <= kGrid; m += 40) {
        const double t0 = top * m / kGrid;
        const double mid = 0.5 * (t0 + t2);
        worst = std::max(worst, 0.5 * (pen_value(spec, t0) + cur) - pen_value(spec, mid));
      }
      prev = cur;
      (void)t1;
    }
    report.checks.push_back({"P1", worst, 1e-12, worst <= 1e-12, true});
  }

  const double dpen = pen_deriv(spec, d_n);
  const double sd = static_cast<double>(s);
  const double logp = std::log(static_cast<double>(std::max(p, 2)));
  const double dim_rate = sd * std::sqrt(logp / n);

  // sup zeta over the d_n/4 ball around beta0_S.
  double ball_zeta = 0.0;
  if (beta0_S.empty()) {
    ball_zeta = max_concavity(spec, 1.75 * d_n, kInf);
  } else {
    for (double b : beta0_S) {
      const double t = std::abs(b);
      ball_zeta = std::max(ball_zeta, max_concavity(spec, std::max(0.0, t - 0.25 * d_n), t + 0.25 * d_n));
    }
  }

  report.checks.push_back({"P2", std::sqrt(sd) * dpen, d_n, std::sqrt(sd) * dpen < d_n, true});
  report.checks.push_back({"P3", ball_zeta, 1.0, ball_zeta < 1.0, true});
  report.checks.push_back({"A1.deriv_s2", dpen * sd * sd, 1.0, dpen * sd * sd <= 1.0, true});
  report.checks.push_back(
      {"A1.deriv_rate", dpen, 1.0 / std::sqrt(static_cast<double>(n) * sd), true, false});
  const double composite = sd * dpen + dim_rate + sd * sd * sd * std::log(sd) / n;
  report.checks.push_back({"A1.composite", composite, deriv_at_zero(spec), true, false});
  report.checks.push_back({"A2.dim", dim_rate, d_n, dim_rate < d_n, true});
  const double zeta_bound = 1.0 / std::sqrt(sd * logp);
  report.checks.push_back({"A2.zeta", ball_zeta, zeta_bound, ball_zeta < zeta_bound, true});
  return report;
}

}  // namespace pfgmm
