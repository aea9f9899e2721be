#pragma once

// Naive term-by-term reference implementations, deliberately independent of
// the library paths they are used to check.

#include <cmath>
#include <span>
#include <vector>

namespace oracle {

inline double cross_entropy(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(1.0 / q[i]);
  }
  return s;
}

inline double entropy(std::span<const double> p) { return cross_entropy(p, p); }

inline double kl(std::span<const double> p, std::span<const double> q) {
  return cross_entropy(p, q) - entropy(p);
}

inline double binary_divergence(double p, double q) {
  double s = 0.0;
  if (p > 0.0) s += p * std::log(p / q);
  if (p < 1.0) s += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return s;
}

// Frozen constants computed with the formulas above (and cross-checked by the
// exact decomposition identity) before the library existed.
inline constexpr double kXent_82_55 = 0.6931471805599453;      // H((.8,.2) vs (.5,.5))
inline constexpr double kKl_82_55 = 0.19274475702175742;       // D((.8,.2)||(.5,.5))
inline constexpr double kKl_532_433 = 0.030478754035471844;    // D((.5,.3,.2)||(.4,.3,.3))
inline constexpr double kBdiv_08_06 = 0.09151622184943575;     // d(0.8||0.6)
inline constexpr double kBdiv_02_06 = 0.3347952867143343;      // d(0.2||0.6)
inline constexpr double kBent_01 = 0.3250829733914483;         // h(0.1)
inline constexpr double kOvaRhs_example = 0.42631150856377004; // d(.8||.6)+d(.2||.6)
inline constexpr double kCova3_node0 = 0.020410997260127586;   // d(0.5||0.4)
inline constexpr double kCova3_node1 = 0.020135513550688863;   // d(0.6||0.5)
inline constexpr double kSigmoid_e = 0.7310585786300049;       // e/(e+1)
inline constexpr double kThreeSampleNll = 0.9823140364615197;  // hand-set q/y mean
inline constexpr double kLog2 = 0.6931471805599453;

}  // namespace oracle
