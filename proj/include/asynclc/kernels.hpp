#pragma once

#include <cstddef>
#include <string>

namespace asynclc {

enum class KernelFamily { Epanechnikov, Uniform };

// Unit-support kernel K(u); zero for |u| >= 1.
double eval_uni(KernelFamily family, double u);

// Product kernel K(u) K(v).
double eval_bi(KernelFamily family, double u, double v);

// K_h(t) = K(t / h) / h. Throws InvalidBandwidth unless h > 0.
double eval_scaled_uni(KernelFamily family, double h, double t);

// K_{h1,h2}(t, s) = K(t / h1, s / h2) / (h1 h2).
double eval_scaled_bi(KernelFamily family, double h1, double h2, double t, double s);

// scale * n^(-exponent). Throws InvalidSampleSize for n == 0.
double bandwidth_rule(std::size_t n, double exponent, double scale = 1.0);

void require_bandwidth(double h, const char* name = "h");

// A bandwidth either given directly or as a rule scale * n^(-exponent).
class Bandwidth {
 public:
  static Bandwidth fixed(double value);
  static Bandwidth rule(double exponent, double scale = 1.0);

  double resolve(std::size_t n) const;
  bool is_rule() const { return is_rule_; }
  double value() const { return value_; }
  double exponent() const { return exponent_; }
  double scale() const { return scale_; }

  // "0.05", "n^-0.6" or "4*n^-0.6".
  std::string describe() const;

 private:
  Bandwidth(bool is_rule, double value, double exponent, double scale)
      : is_rule_(is_rule), value_(value), exponent_(exponent), scale_(scale) {}

  bool is_rule_;
  double value_;
  double exponent_;
  double scale_;
};

}  // namespace asynclc
