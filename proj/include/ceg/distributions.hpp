#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ceg/model.hpp"

namespace ceg {

/// Density of the holding time at `t` under the spec's convention. For the
/// censored normal the atom at zero is not part of the density.
double density(const HoldingTimeSpec& spec, double t);
/// P(H <= t), including any atom at zero.
double cdf(const HoldingTimeSpec& spec, double t);
double mean(const HoldingTimeSpec& spec);
double sample(const HoldingTimeSpec& spec, std::mt19937_64& rng);

/// Finite mixture of holding-time specs (merged parallel edges of an SMP).
struct HoldingMixture {
  std::vector<std::pair<double, HoldingTimeSpec>> components;

  bool empty() const noexcept { return components.empty(); }
  double density(double t) const;
  double mean() const;
  double sample(std::mt19937_64& rng) const;
};

struct GridConfig {
  double dt = 0.01;
  double t_max = 200.0;
};

inline constexpr double kGridMassDeficitLimit = 1e-3;

/// Density tabulated on the uniform grid t_j = j * dt, j = 0..n-1. Values are
/// normalized so the trapezoid integral over [0, t_max] is one.
class DensityGrid {
 public:
  DensityGrid(double dt, std::vector<double> values);

  double dt() const noexcept { return dt_; }
  double t_max() const noexcept { return dt_ * static_cast<double>(values_.size() - 1); }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  /// Linear interpolation between grid nodes; zero outside [0, t_max].
  double at(double t) const;
  double integral() const;
  /// Trapezoid integral over [0, t].
  double cdf(double t) const;
  /// "t,density" rows with a header line.
  std::string to_csv() const;

 private:
  double dt_;
  std::vector<double> values_;
};

/// Per-node probability masses implied by a grid (trapezoid weights).
std::vector<double> grid_masses(const DensityGrid& grid);

/// Bins the spec onto the grid by CDF differences over the trapezoid cells,
/// so atoms and integrable singularities at zero are handled.
/// Throws ResolutionError if more than 1e-3 of the mass lies beyond t_max.
DensityGrid discretize(const HoldingTimeSpec& spec, const GridConfig& config);

/// Discrete convolution with trapezoid weights. Both grids must share dt;
/// the result keeps the longer support.
DensityGrid convolve(const DensityGrid& a, const DensityGrid& b);

/// Density of the sum of independent holding times.
DensityGrid convolve(std::span<const HoldingTimeSpec> specs, const GridConfig& config);

/// Product over steps of transition probability and holding density; steps
/// leaving untimed vertices contribute their probability only.
double joint_timed_path_probability(const CegGraph& graph, const TimedPath& path);

}  // namespace ceg
