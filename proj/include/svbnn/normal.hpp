#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace svbnn {

inline double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
  static const double inv_sqrt2 = 0.7071067811865475244;
  return 0.5 * std::erfc(-x * inv_sqrt2);
}

// Standard normal quantile, Wichura's algorithm AS 241 (PPND16) with one
// Newton polish step against norm_cdf. Accurate to full double precision for
// p away from the extreme tails, which is all the samplers need: their inputs
// come from uniforms on (0, 1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("norm_quantile: p must lie in [0, 1]");
  }

  const double q = p - 0.5;
  double r;
  double x;
  if (std::fabs(q) <= 0.425) {
    static const double a[8] = {
        3.3871328727963666080e+0, 1.3314166789178437745e+2,
        1.9715909503065514427e+3, 1.3731693765509461125e+4,
        4.5921953931549871457e+4, 6.7265770927008700853e+4,
        3.3430575583588128105e+4, 2.5090809287301226727e+3};
    static const double b[8] = {
        1.0,                      4.2313330701600911252e+1,
        6.8718700749205790830e+2, 5.3941960214247511077e+3,
        2.1213794301586595867e+4, 3.9307895800092710610e+4,
        2.8729085735721942674e+4, 5.2264952788528545610e+3};
    r = 0.180625 - q * q;
    double num = a[7], den = b[7];
    for (int i = 6; i >= 0; --i) {
      num = num * r + a[i];
      den = den * r + b[i];
    }
    x = q * num / den;
  } else {
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double num, den;
    if (r <= 5.0) {
      static const double c[8] = {
          1.42343711074968357734e+0, 4.63033784615654529590e+0,
          5.76949722146069140550e+0, 3.64784832476320460504e+0,
          1.27045825245236838258e+0, 2.41780725177450611770e-1,
          2.27238449892691845833e-2, 7.74545014278341407640e-4};
      static const double d[8] = {
          1.0,                       2.05319162663775882187e+0,
          1.67638483018380384940e+0, 6.89767334985100004550e-1,
          1.48103976427480074590e-1, 1.51986665636164571966e-2,
          5.47593808499534494600e-4, 1.05075007164441684324e-9};
      r -= 1.6;
      num = c[7], den = d[7];
      for (int i = 6; i >= 0; --i) {
        num = num * r + c[i];
        den = den * r + d[i];
      }
    } else {
      static const double e[8] = {
          6.65790464350110377720e+0, 5.46378491116411436990e+0,
          1.78482653991729133580e+0, 2.96560571828504891230e-1,
          2.65321895265761230930e-2, 1.24266094738807843860e-3,
          2.71155556874348757815e-5, 2.01033439929228813265e-7};
      static const double f[8] = {
          1.0,                       5.99832206555887937690e-1,
          1.36929880922735805310e-1, 1.48753612908506148525e-2,
          7.86869131145613259100e-4, 1.84631831751005468180e-5,
          1.42151175831644588870e-7, 2.04426310338993978564e-15};
      r -= 5.0;
      num = e[7], den = f[7];
      for (int i = 6; i >= 0; --i) {
        num = num * r + e[i];
        den = den * r + f[i];
      }
    }
    x = num / den;
    if (q < 0.0) x = -x;
  }

  // One Newton step; the pdf is comfortably above underflow for |x| < 37.
  if (std::fabs(x) < 37.0) {
    const double pdf = norm_pdf(x);
    if (pdf > 0.0) x -= (norm_cdf(x) - p) / pdf;
  }
  return x;
}

}  // namespace svbnn
