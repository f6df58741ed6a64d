#include "ceg/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ceg/error.hpp"

namespace ceg {

namespace {

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct Normal {
  double mu, sigma;
  bool truncated;
};

Normal normal_params(const HoldingTimeSpec& s) {
  const auto p = s.values();
  return {p.at(0), p.at(1), s.convention == "mean_sd_truncated"};
}

double exp_rate(const HoldingTimeSpec& s) {
  const double p = s.params.at(0).value();
  return s.convention == "mean" ? 1.0 / p : p;
}

std::pair<double, double> weibull_shape_scale(const HoldingTimeSpec& s) {
  const auto p = s.values();
  if (s.convention == "scale_shape") return {p.at(1), p.at(0)};
  return {p.at(0), p.at(1)};
}

void require_family(const HoldingTimeSpec& s) {
  switch (s.family) {
    case Family::exponential:
    case Family::normal:
    case Family::weibull:
    case Family::empirical_grid:
      return;
  }
  throw UnsupportedFamilyError("unsupported holding-time family");
}

// Knots of an empirical grid as (t, f) pairs.
std::vector<std::pair<double, double>> knots(const HoldingTimeSpec& s) {
  const auto p = s.values();
  std::vector<std::pair<double, double>> k;
  for (std::size_t i = 0; i + 1 < p.size(); i += 2) k.emplace_back(p[i], p[i + 1]);
  return k;
}

double empirical_density(const HoldingTimeSpec& s, double t) {
  const auto k = knots(s);
  if (k.empty() || t < k.front().first || t > k.back().first) return 0.0;
  for (std::size_t i = 1; i < k.size(); ++i) {
    if (t <= k[i].first) {
      const double w = (t - k[i - 1].first) / (k[i].first - k[i - 1].first);
      return k[i - 1].second + w * (k[i].second - k[i - 1].second);
    }
  }
  return k.back().second;
}

double empirical_cdf(const HoldingTimeSpec& s, double t) {
  const auto k = knots(s);
  double area = 0.0;
  for (std::size_t i = 1; i < k.size(); ++i) {
    const auto [a, fa] = k[i - 1];
    const auto [b, fb] = k[i];
    if (t <= a) break;
    const double hi = std::min(t, b);
    const double fhi = fa + (hi - a) / (b - a) * (fb - fa);
    area += 0.5 * (fa + fhi) * (hi - a);
  }
  return std::min(area, 1.0);
}

double empirical_sample(const HoldingTimeSpec& s, std::mt19937_64& rng) {
  const auto k = knots(s);
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < k.size(); ++i)
    cum.push_back(cum.back() + 0.5 * (k[i - 1].second + k[i].second) * (k[i].first - k[i - 1].first));
  const double u = std::uniform_real_distribution<double>(0.0, cum.back())(rng);
  std::size_t i = 1;
  while (i + 1 < k.size() && u > cum[i]) ++i;
  const auto [a, fa] = k[i - 1];
  const auto [b, fb] = k[i];
  const double r = u - cum[i - 1];
  const double slope = (fb - fa) / (b - a);
  double x;
  if (std::abs(slope) < 1e-14) {
    x = fa > 0 ? r / fa : 0.0;
  } else {
    const double disc = std::max(0.0, fa * fa + 2.0 * slope * r);
    x = (-fa + std::sqrt(disc)) / slope;
  }
  return std::clamp(a + x, a, b);
}

}  // namespace

double density(const HoldingTimeSpec& spec, double t) {
  require_family(spec);
  if (t < 0) return 0.0;
  switch (spec.family) {
    case Family::exponential: {
      const double rate = exp_rate(spec);
      return rate * std::exp(-rate * t);
    }
    case Family::normal: {
      const auto n = normal_params(spec);
      const double d = std_normal_pdf((t - n.mu) / n.sigma) / n.sigma;
      return n.truncated ? d / (1.0 - std_normal_cdf(-n.mu / n.sigma)) : d;
    }
    case Family::weibull: {
      const auto [k, scale] = weibull_shape_scale(spec);
      if (t == 0.0) {
        if (k < 1) return std::numeric_limits<double>::infinity();
        return k == 1 ? 1.0 / scale : 0.0;
      }
      const double x = t / scale;
      return (k / scale) * std::pow(x, k - 1) * std::exp(-std::pow(x, k));
    }
    case Family::empirical_grid:
      return empirical_density(spec, t);
  }
  throw UnsupportedFamilyError("unsupported holding-time family");
}

double cdf(const HoldingTimeSpec& spec, double t) {
  require_family(spec);
  if (t < 0) return 0.0;
  switch (spec.family) {
    case Family::exponential:
      return -std::expm1(-exp_rate(spec) * t);
    case Family::normal: {
      const auto n = normal_params(spec);
      const double z = std_normal_cdf((t - n.mu) / n.sigma);
      if (!n.truncated) return z;
      const double lo = std_normal_cdf(-n.mu / n.sigma);
      return (z - lo) / (1.0 - lo);
    }
    case Family::weibull: {
      const auto [k, scale] = weibull_shape_scale(spec);
      return -std::expm1(-std::pow(t / scale, k));
    }
    case Family::empirical_grid:
      return empirical_cdf(spec, t);
  }
  throw UnsupportedFamilyError("unsupported holding-time family");
}

double mean(const HoldingTimeSpec& spec) {
  require_family(spec);
  switch (spec.family) {
    case Family::exponential:
      return 1.0 / exp_rate(spec);
    case Family::normal: {
      const auto n = normal_params(spec);
      const double a = n.mu / n.sigma;
      if (n.truncated) return n.mu + n.sigma * std_normal_pdf(a) / std_normal_cdf(a);
      // E[max(0, X)]
      return n.mu * std_normal_cdf(a) + n.sigma * std_normal_pdf(a);
    }
    case Family::weibull: {
      const auto [k, scale] = weibull_shape_scale(spec);
      return scale * std::tgamma(1.0 + 1.0 / k);
    }
    case Family::empirical_grid: {
      // t * f(t) is quadratic on each segment, so Simpson's rule is exact.
      const auto k = knots(spec);
      double m = 0.0;
      for (std::size_t i = 1; i < k.size(); ++i) {
        const auto [a, fa] = k[i - 1];
        const auto [b, fb] = k[i];
        const double c = 0.5 * (a + b);
        m += (b - a) / 6.0 * (a * fa + 4.0 * c * 0.5 * (fa + fb) + b * fb);
      }
      return m;
    }
  }
  throw UnsupportedFamilyError("unsupported holding-time family");
}

double sample(const HoldingTimeSpec& spec, std::mt19937_64& rng) {
  require_family(spec);
  switch (spec.family) {
    case Family::exponential:
      return std::exponential_distribution<double>(exp_rate(spec))(rng);
    case Family::normal: {
      const auto n = normal_params(spec);
      if (!n.truncated) return std::max(0.0, std::normal_distribution<double>(n.mu, n.sigma)(rng));
      // Inverse CDF by bisection keeps the cost bounded for any mu/sigma.
      const double lo = std_normal_cdf(-n.mu / n.sigma);
      const double u = lo + (1.0 - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      double a = 0.0, b = std::max(n.mu, 0.0) + 40.0 * n.sigma;
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, b); ++it) {
        const double m = 0.5 * (a + b);
        (std_normal_cdf((m - n.mu) / n.sigma) < u ? a : b) = m;
      }
      return 0.5 * (a + b);
    }
    case Family::weibull: {
      const auto [k, scale] = weibull_shape_scale(spec);
      return std::weibull_distribution<double>(k, scale)(rng);
    }
    case Family::empirical_grid:
      return empirical_sample(spec, rng);
  }
  throw UnsupportedFamilyError("unsupported holding-time family");
}

// ---------------------------------------------------------------- mixtures

double HoldingMixture::density(double t) const {
  double d = 0.0;
  for (const auto& [w, s] : components) d += w * ceg::density(s, t);
  return d;
}

double HoldingMixture::mean() const {
  double m = 0.0;
  for (const auto& [w, s] : components) m += w * ceg::mean(s);
  return m;
}

double HoldingMixture::sample(std::mt19937_64& rng) const {
  if (components.empty()) return 0.0;
  if (components.size() == 1) return ceg::sample(components.front().second, rng);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (const auto& [w, s] : components) {
    if (u < w) return ceg::sample(s, rng);
    u -= w;
  }
  return ceg::sample(components.back().second, rng);
}

// ---------------------------------------------------------------- grids

DensityGrid::DensityGrid(double dt, std::vector<double> values) : dt_(dt), values_(std::move(values)) {
  if (!(dt_ > 0) || values_.size() < 2) throw ValidationError("density grid needs dt > 0 and >= 2 nodes");
}

double DensityGrid::at(double t) const {
  if (t < 0 || t > t_max()) return 0.0;
  const double x = t / dt_;
  const auto j = static_cast<std::size_t>(std::floor(x));
  if (j + 1 >= values_.size()) return values_.back();
  const double w = x - static_cast<double>(j);
  return (1.0 - w) * values_[j] + w * values_[j + 1];
}

double DensityGrid::integral() const {
  double s = 0.0;
  for (std::size_t j = 1; j < values_.size(); ++j) s += 0.5 * (values_[j - 1] + values_[j]) * dt_;
  return s;
}

double DensityGrid::cdf(double t) const {
  if (t <= 0) return 0.0;
  double s = 0.0;
  for (std::size_t j = 1; j < values_.size(); ++j) {
    const double a = static_cast<double>(j - 1) * dt_;
    if (t >= a + dt_) {
      s += 0.5 * (values_[j - 1] + values_[j]) * dt_;
    } else {
      const double h = t - a;
      s += 0.5 * (values_[j - 1] + at(t)) * h;
      break;
    }
  }
  return s;
}

std::string DensityGrid::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "t,density\n";
  for (std::size_t j = 0; j < values_.size(); ++j) os << static_cast<double>(j) * dt_ << ',' << values_[j] << '\n';
  return os.str();
}

namespace {

double node_weight(std::size_t j, std::size_t n) { return (j == 0 || j + 1 == n) ? 0.5 : 1.0; }

DensityGrid from_masses(std::vector<double> masses, double dt, const char* what) {
  double total = 0.0;
  for (double m : masses) total += m;
  if (1.0 - total > kGridMassDeficitLimit) {
    std::ostringstream os;
    os << what << ": grid holds only " << total << " of the probability mass (deficit "
       << 1.0 - total << " > " << kGridMassDeficitLimit
       << "); increase the grid horizon (--grid-tmax) or refine the step (--grid-dt)";
    throw ResolutionError(os.str());
  }
  const std::size_t n = masses.size();
  std::vector<double> values(n);
  for (std::size_t j = 0; j < n; ++j) values[j] = masses[j] / (total * node_weight(j, n) * dt);
  return DensityGrid(dt, std::move(values));
}

}  // namespace

std::vector<double> grid_masses(const DensityGrid& grid) {
  const auto v = grid.values();
  std::vector<double> m(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) m[j] = v[j] * node_weight(j, v.size()) * grid.dt();
  return m;
}

DensityGrid discretize(const HoldingTimeSpec& spec, const GridConfig& config) {
  if (!(config.dt > 0) || !(config.t_max > config.dt)) {
    throw ValidationError("grid needs 0 < dt < t_max");
  }
  const auto n = static_cast<std::size_t>(std::llround(config.t_max / config.dt)) + 1;
  std::vector<double> masses(n);
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double upper = (j + 1 == n) ? static_cast<double>(j) * config.dt
                                      : (static_cast<double>(j) + 0.5) * config.dt;
    const double c = cdf(spec, upper);
    masses[j] = std::max(0.0, c - prev);
    prev = c;
  }
  return from_masses(std::move(masses), config.dt, spec.canonical().c_str());
}

DensityGrid convolve(const DensityGrid& a, const DensityGrid& b) {
  if (std::abs(a.dt() - b.dt()) > 1e-12 * a.dt()) throw ValidationError("grids have different steps");
  const auto ma = grid_masses(a);
  const auto mb = grid_masses(b);
  const std::size_t n = std::max(ma.size(), mb.size());
  auto support = [](const std::vector<double>& m) {
    std::size_t last = 0;
    for (std::size_t j = 0; j < m.size(); ++j)
      if (m[j] != 0.0) last = j;
    return last;
  };
  const std::size_t la = support(ma), lb = support(mb);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i <= la; ++i) {
    const double x = ma[i];
    if (x == 0.0) continue;
    const std::size_t jmax = std::min(lb, n - 1 - i);
    for (std::size_t j = 0; j <= jmax; ++j) out[i + j] += x * mb[j];
  }
  return from_masses(std::move(out), a.dt(), "convolution");
}

DensityGrid convolve(std::span<const HoldingTimeSpec> specs, const GridConfig& config) {
  if (specs.empty()) throw ValidationError("convolve needs at least one holding-time spec");
  DensityGrid acc = discretize(specs.front(), config);
  for (std::size_t i = 1; i < specs.size(); ++i) acc = convolve(acc, discretize(specs[i], config));
  return acc;
}

double joint_timed_path_probability(const CegGraph& graph, const TimedPath& path) {
  double p = 1.0;
  for (const auto& step : path.steps) {
    const auto& e = graph.edge(step.edge);
    if (e.from != step.vertex) throw ValidationError("timed path step does not leave its vertex");
    if (step.holding < 0) throw ValidationError("negative holding time on a timed path");
    p *= e.prob.value();
    if (!graph.vertex(step.vertex).timed) continue;
    if (!e.holding) throw IncompleteModelError("timed edge '" + e.id + "' has no holding-time spec");
    p *= density(*e.holding, step.holding);
  }
  return p;
}

}  // namespace ceg
