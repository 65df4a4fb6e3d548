#pragma once

#include <array>

namespace terratile {

/// Transverse Mercator on an ellipsoid via the sixth-order Krueger series.
/// Coordinates are relative to the central meridian: x is meters east of it,
/// y meters north of the equator, both already multiplied by the scale factor.
/// Accurate to well under a millimeter within a few degrees of the meridian.
class TransverseMercator {
 public:
  TransverseMercator(double equatorial_radius, double flattening, double scale_factor);

  /// GRS80 with the UTM scale factor 0.9996.
  static const TransverseMercator& utm_grs80();

  struct Projected {
    double x;
    double y;
  };
  struct Geographic {
    double lat;
    double lon;
  };

  Projected forward(double lat_deg, double lon_deg, double lon0_deg) const;
  Geographic inverse(double x, double y, double lon0_deg) const;

  double scale_factor() const { return k0_; }

 private:
  double e_;         // first eccentricity
  double e2_;        // e^2
  double k0_;
  double rect_radius_;  // A: radius of the rectifying sphere
  std::array<double, 6> alpha_{};
  std::array<double, 6> beta_{};
};

}  // namespace terratile
