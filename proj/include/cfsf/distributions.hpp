#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace cfsf {

enum class Link { logit, probit };

template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  return std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

// Standard normal quantile. Acklam's rational approximation followed by one
// Halley step against erfc, which brings the error to a few ulps.
template <typename Scalar>
Scalar normal_quantile(Scalar p) {
  if (!(p > Scalar(0))) return -std::numeric_limits<Scalar>::infinity();
  if (!(p < Scalar(1))) return std::numeric_limits<Scalar>::infinity();
  // 1 - p is exact above one half, and the lower tail keeps full relative accuracy.
  if (p > Scalar(0.5)) return -normal_quantile(Scalar(1) - p);

  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                          1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                          6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                          -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                          3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  const double pd = static_cast<double>(p);
  double x;
  if (pd < p_low) {
    const double q = std::sqrt(-2.0 * std::log(pd));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (pd <= 1.0 - p_low) {
    const double q = pd - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-pd));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  Scalar xs = static_cast<Scalar>(x);
  const Scalar e = normal_cdf(xs) - p;
  const Scalar u = e * std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * std::exp(xs * xs / Scalar(2));
  xs = xs - u / (Scalar(1) + xs * u / Scalar(2));
  return xs;
}

template <typename Scalar>
Scalar logistic_cdf(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar link_cdf(Link link, Scalar index) {
  return link == Link::logit ? logistic_cdf(index) : normal_cdf(index);
}

inline const char* to_string(Link link) { return link == Link::logit ? "logit" : "probit"; }

}  // namespace cfsf
