#include "terratile/transverse_mercator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace terratile {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Conformal latitude tangent from geodetic latitude tangent.
double taupf(double tau, double e) {
  const double tau1 = std::hypot(1.0, tau);
  const double sig = std::sinh(e * std::atanh(e * tau / tau1));
  return std::hypot(1.0, sig) * tau - sig * tau1;
}

// Inverse of taupf by Newton iteration.
double tauf(double taup, double e, double e2) {
  const double e2m = 1.0 - e2;
  double tau = taup / e2m;
  for (int i = 0; i < 8; ++i) {
    const double taupa = taupf(tau, e);
    const double dtau = (taup - taupa) * (1.0 + e2m * tau * tau) /
                        (e2m * std::hypot(1.0, tau) * std::hypot(1.0, taupa));
    tau += dtau;
    if (std::abs(dtau) < 1e-15 * std::max(1.0, std::abs(tau))) break;
  }
  return tau;
}

}  // namespace

TransverseMercator::TransverseMercator(double a, double f, double k0) : k0_(k0) {
  e2_ = f * (2.0 - f);
  e_ = std::sqrt(e2_);
  const double n = f / (2.0 - f);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
  rect_radius_ = a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);

  alpha_ = {
      n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
      13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
      61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
      49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
      34729 * n5 / 80640 - 3418889 * n6 / 1995840,
      212378941 * n6 / 319334400,
  };
  beta_ = {
      n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
      n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
      17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
      4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
      4583 * n5 / 161280 - 108847 * n6 / 3991680,
      20648693 * n6 / 638668800,
  };
}

const TransverseMercator& TransverseMercator::utm_grs80() {
  static const TransverseMercator tm(6378137.0, 1.0 / 298.257222101, 0.9996);
  return tm;
}

TransverseMercator::Projected TransverseMercator::forward(double lat_deg, double lon_deg,
                                                          double lon0_deg) const {
  double dlon = lon_deg - lon0_deg;
  dlon = std::remainder(dlon, 360.0);
  const double phi = lat_deg * kDeg;
  const double lam = dlon * kDeg;

  const double tau = std::tan(phi);
  const double taup = std::abs(lat_deg) == 90.0 ? std::copysign(1e300, lat_deg) : taupf(tau, e_);
  const double xip = std::atan2(taup, std::cos(lam));
  const double etap = std::asinh(std::sin(lam) / std::hypot(taup, std::cos(lam)));

  double xi = xip;
  double eta = etap;
  for (int j = 1; j <= 6; ++j) {
    const double a = alpha_[j - 1];
    xi += a * std::sin(2 * j * xip) * std::cosh(2 * j * etap);
    eta += a * std::cos(2 * j * xip) * std::sinh(2 * j * etap);
  }
  return {k0_ * rect_radius_ * eta, k0_ * rect_radius_ * xi};
}

TransverseMercator::Geographic TransverseMercator::inverse(double x, double y,
                                                           double lon0_deg) const {
  const double xi = y / (k0_ * rect_radius_);
  const double eta = x / (k0_ * rect_radius_);

  double xip = xi;
  double etap = eta;
  for (int j = 1; j <= 6; ++j) {
    const double b = beta_[j - 1];
    xip -= b * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    etap -= b * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }
  const double sinh_etap = std::sinh(etap);
  const double cos_xip = std::cos(xip);
  const double taup = std::sin(xip) / std::hypot(sinh_etap, cos_xip);
  const double lam = std::atan2(sinh_etap, cos_xip);
  const double tau = tauf(taup, e_, e2_);
  return {std::atan(tau) / kDeg, lon0_deg + lam / kDeg};
}

}  // namespace terratile
