#include "asynclc/kernels.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "asynclc/error.hpp"

namespace asynclc {

double eval_uni(KernelFamily family, double u) {
  const double a = std::fabs(u);
  if (!(a < 1.0)) return 0.0;
  switch (family) {
    case KernelFamily::Epanechnikov: return 0.75 * (1.0 - u * u);
    case KernelFamily::Uniform: return 0.5;
  }
  return 0.0;
}

double eval_bi(KernelFamily family, double u, double v) {
  return eval_uni(family, u) * eval_uni(family, v);
}

void require_bandwidth(double h, const char* name) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::InvalidBandwidth,
                std::string("bandwidth ") + name + " must be positive and finite, got " +
                    std::to_string(h));
  }
}

double eval_scaled_uni(KernelFamily family, double h, double t) {
  require_bandwidth(h);
  return eval_uni(family, t / h) / h;
}

double eval_scaled_bi(KernelFamily family, double h1, double h2, double t, double s) {
  require_bandwidth(h1, "h1");
  require_bandwidth(h2, "h2");
  return eval_bi(family, t / h1, s / h2) / (h1 * h2);
}

double bandwidth_rule(std::size_t n, double exponent, double scale) {
  if (n == 0) throw Error(ErrorCode::InvalidSampleSize, "bandwidth rule needs n >= 1");
  if (!(scale > 0.0)) {
    throw Error(ErrorCode::InvalidBandwidth, "bandwidth rule scale must be positive");
  }
  return scale * std::pow(static_cast<double>(n), -exponent);
}

Bandwidth Bandwidth::fixed(double value) {
  require_bandwidth(value);
  return Bandwidth(false, value, 0.0, 1.0);
}

Bandwidth Bandwidth::rule(double exponent, double scale) {
  if (!std::isfinite(exponent) || !(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::InvalidBandwidth, "invalid bandwidth rule");
  }
  return Bandwidth(true, 0.0, exponent, scale);
}

double Bandwidth::resolve(std::size_t n) const {
  return is_rule_ ? bandwidth_rule(n, exponent_, scale_) : value_;
}

std::string Bandwidth::describe() const {
  auto shortest = [](double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  if (!is_rule_) return shortest(value_);
  std::string out = scale_ == 1.0 ? std::string() : shortest(scale_) + "*";
  return out + "n^-" + shortest(exponent_);
}

}  // namespace asynclc
