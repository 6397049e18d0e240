// Zipf-distributed ranks via rejection-inversion (Hormann and Derflinger),
// which needs no per-rank table and stays cheap at large exponents.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace aft::harness {

/// Samples ranks in [0, n) with P(rank r) proportional to 1/(r+1)^s. s = 0
/// is uniform.
class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double s) : n_(n), exponent_(s) {
    if (n == 0) throw std::invalid_argument("zipf over an empty range");
    if (s < 0) throw std::invalid_argument("zipf exponent must be >= 0");
    if (s > 0) {
      h_integral_x1_ = h_integral(1.5) - 1.0;
      h_integral_n_ = h_integral(static_cast<double>(n) + 0.5);
      squeeze_ = 2.0 - h_integral_inverse(h_integral(2.5) - h(2.0));
    }
  }

  template <class Rng>
  std::uint64_t operator()(Rng& rng) const {
    if (exponent_ == 0.0) return std::uniform_int_distribution<std::uint64_t>(0, n_ - 1)(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (true) {
      double u = h_integral_n_ + unit(rng) * (h_integral_x1_ - h_integral_n_);
      double x = h_integral_inverse(u);
      auto k = static_cast<std::int64_t>(x + 0.5);
      if (k < 1) {
        k = 1;
      } else if (static_cast<std::uint64_t>(k) > n_) {
        k = static_cast<std::int64_t>(n_);
      }
      double kd = static_cast<double>(k);
      if (kd - x <= squeeze_ || u >= h_integral(kd + 0.5) - h(kd)) return static_cast<std::uint64_t>(k - 1);
    }
  }

  std::uint64_t size() const noexcept { return n_; }
  double exponent() const noexcept { return exponent_; }

 private:
  double h(double x) const { return std::exp(-exponent_ * std::log(x)); }
  double h_integral(double x) const {
    double log_x = std::log(x);
    return helper2((1.0 - exponent_) * log_x) * log_x;
  }
  double h_integral_inverse(double x) const {
    double t = x * (1.0 - exponent_);
    if (t < -1.0) t = -1.0;
    return std::exp(helper1(t) * x);
  }
  // log1p(x)/x and expm1(x)/x with their series near zero
  static double helper1(double x) {
    return std::abs(x) > 1e-8 ? std::log1p(x) / x : 1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x));
  }
  static double helper2(double x) {
    return std::abs(x) > 1e-8 ? std::expm1(x) / x : 1.0 + x * 0.5 * (1.0 + x / 3.0 * (1.0 + 0.25 * x));
  }

  std::uint64_t n_;
  double exponent_;
  double h_integral_x1_ = 0;
  double h_integral_n_ = 0;
  double squeeze_ = 0;
};

/// Exact probability of `rank` (0-based) under Zipf(n, s).
inline double zipf_mass(std::uint64_t n, double s, std::uint64_t rank) {
  double norm = 0;
  for (std::uint64_t i = 1; i <= n; ++i) norm += std::pow(static_cast<double>(i), -s);
  return std::pow(static_cast<double>(rank + 1), -s) / norm;
}

}  // namespace aft::harness
