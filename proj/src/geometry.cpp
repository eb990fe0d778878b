#include "gaid/geometry.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gaid/error.hpp"

namespace gaid {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kLn10 = 2.302585092994045684017991454684364208;
constexpr std::int64_t kMaxNodes = 1 << 20;

void validate(const ConeQuery& q) {
  if (!(q.theta > 0.0 && q.theta <= kPi))
    throw DataError("cone query: theta " + std::to_string(q.theta) + " outside (0, pi]");
  if (q.dim < 2) throw DataError("cone query: dim " + std::to_string(q.dim) + " below 2");
}

// ln of int_0^upper sin^{d-2} via composite Simpson over the log-integrand.
// Interior -inf values (sin = 0 at the endpoints) contribute nothing.
double log_sin_power_integral(double upper, std::int64_t dim, std::int64_t intervals) {
  const double p = static_cast<double>(dim - 2);
  const double h = upper / static_cast<double>(intervals);
  double max_e = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<std::size_t>(intervals) + 1);
  for (std::int64_t k = 0; k <= intervals; ++k) {
    const double phi = (k == intervals) ? upper : h * static_cast<double>(k);
    const double s = std::sin(phi);
    double e = s > 0.0 ? p * std::log(s) : (p == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity());
    const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    e += std::log(w);
    terms[static_cast<std::size_t>(k)] = e;
    if (e > max_e) max_e = e;
  }
  double acc = 0.0;
  for (const double e : terms)
    if (std::isfinite(e)) acc += std::exp(e - max_e);
  return std::log(h / 3.0) + max_e + std::log(acc);
}

double converge_log_integral(double upper, std::int64_t dim) {
  std::int64_t n = 64;
  double prev = log_sin_power_integral(upper, dim, n);
  while (n < kMaxNodes) {
    n *= 2;
    const double cur = log_sin_power_integral(upper, dim, n);
    const double tol = std::max(1e-9, 1e-8 * std::abs(cur));
    if (std::abs(cur - prev) <= tol) return cur;
    prev = cur;
  }
  return prev;
}

}  // namespace

double cap_fraction_log10(const ConeQuery& q) {
  validate(q);
  const double log_num = converge_log_integral(q.theta, q.dim);
  const double log_den = converge_log_integral(kPi, q.dim);
  return (log_num - log_den) / kLn10;
}

double cap_fraction_approx_log10(const ConeQuery& q) {
  validate(q);
  return -static_cast<double>(q.dim - 1) * q.theta * q.theta / (2.0 * kLn10);
}

}  // namespace gaid
