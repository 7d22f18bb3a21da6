#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cavcool/types.hpp"

namespace cavcool {

/// Normalized spectral density I(δ) of a broadband drive, ∫ I dδ = 1.
///
/// Shapes:
///  - flat band: 1/(hi − lo) on the open interval (lo, hi);
///  - table: piecewise-linear through (δ_k, I_k), zero outside;
///  - delta comb: monochromatic components (δ_k, w_k), each seen through a
///    Lorentzian of FWHM `linewidth` (the cavity linewidth), so a single
///    tooth at resonance gives the golden-rule rate 4|Γ|²/κ.
class SpectralDensity {
 public:
  enum class Shape { flat, table, comb };

  static SpectralDensity flat_band(double lo, double hi) {
    require(std::isfinite(lo) && std::isfinite(hi), "non-finite band edge");
    require(hi > lo, "flat band needs positive width");
    SpectralDensity s;
    s.shape_ = Shape::flat;
    s.points_ = {{lo, 1.0 / (hi - lo)}, {hi, 1.0 / (hi - lo)}};
    return s;
  }

  static SpectralDensity table(std::vector<std::pair<double, double>> points) {
    require(points.size() >= 2, "tabulated density needs at least two points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      require(points[i].second >= 0.0, "spectral density must be nonnegative");
      if (i) require(points[i].first > points[i - 1].first, "tabulated detunings must increase");
    }
    SpectralDensity s;
    s.shape_ = Shape::table;
    s.points_ = std::move(points);
    const double total = s.integral();
    require(std::abs(total - 1.0) <= 1e-9, "tabulated density integrates to " + std::to_string(total) + ", not 1");
    return s;
  }

  static SpectralDensity delta_comb(std::vector<std::pair<double, double>> teeth, double linewidth) {
    require(!teeth.empty(), "delta comb needs at least one tooth");
    require(linewidth > 0.0, "comb linewidth must be positive");
    double total = 0.0;
    for (const auto& [d, w] : teeth) {
      require(std::isfinite(d) && w >= 0.0, "invalid comb tooth");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-9, "comb weights sum to " + std::to_string(total) + ", not 1");
    SpectralDensity s;
    s.shape_ = Shape::comb;
    s.points_ = std::move(teeth);
    s.linewidth_ = linewidth;
    return s;
  }

  Shape shape() const { return shape_; }
  const std::vector<std::pair<double, double>>& points() const { return points_; }
  double linewidth() const { return linewidth_; }

  double operator()(double delta) const {
    switch (shape_) {
      case Shape::flat:
        return (delta > points_.front().first && delta < points_.back().first) ? points_.front().second : 0.0;
      case Shape::table: {
        if (delta < points_.front().first || delta > points_.back().first) return 0.0;
        auto it = std::upper_bound(points_.begin(), points_.end(), delta,
                                   [](double d, const auto& p) { return d < p.first; });
        if (it == points_.end()) return points_.back().second;
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double f = (delta - lo.first) / (hi.first - lo.first);
        return lo.second + f * (hi.second - lo.second);
      }
      case Shape::comb: {
        const double half = 0.5 * linewidth_;
        double v = 0.0;
        for (const auto& [d, w] : points_) v += w * (half / pi) / ((delta - d) * (delta - d) + half * half);
        return v;
      }
    }
    return 0.0;
  }

  /// ∫ I(δ) dδ, exact for each shape.
  double integral() const {
    switch (shape_) {
      case Shape::flat: return (points_.back().first - points_.front().first) * points_.front().second;
      case Shape::table: {
        double s = 0.0;
        for (std::size_t i = 1; i < points_.size(); ++i)
          s += 0.5 * (points_[i].second + points_[i - 1].second) * (points_[i].first - points_[i - 1].first);
        return s;
      }
      case Shape::comb: {
        double s = 0.0;
        for (const auto& p : points_) s += p.second;
        return s;
      }
    }
    return 0.0;
  }

  /// Lower edge of the support (−∞ for a comb).
  double support_lo() const {
    return shape_ == Shape::comb ? -std::numeric_limits<double>::infinity() : points_.front().first;
  }
  double support_hi() const {
    return shape_ == Shape::comb ? std::numeric_limits<double>::infinity() : points_.back().first;
  }

  std::string describe() const {
    switch (shape_) {
      case Shape::flat:
        return "flat(" + std::to_string(points_.front().first) + ", " + std::to_string(points_.back().first) + ")";
      case Shape::table: return "table(" + std::to_string(points_.size()) + " points)";
      case Shape::comb:
        return "comb(" + std::to_string(points_.size()) + " teeth, linewidth " + std::to_string(linewidth_) + ")";
    }
    return {};
  }

 private:
  Shape shape_ = Shape::flat;
  std::vector<std::pair<double, double>> points_;
  double linewidth_ = 0.0;
};

/// Flat band of height 1/(3B) on ((ε_1)_00 + lo·B, (ε_1)_00 + hi·B).
inline SpectralDensity make_flat_band(double field, double eps1_00, double lo = 0.5, double hi = 3.5) {
  require(field > 0.0, "band unit B must be positive");
  require(hi > lo, "non-positive band width");
  return SpectralDensity::flat_band(eps1_00 + lo * field, eps1_00 + hi * field);
}

}  // namespace cavcool
