#pragma once

#include <cstdint>

// Hypersphere cone-probability utilities. All probabilities are carried as
// log10 values end to end; at d = 512 the raw cap fractions underflow double.

namespace gaid {

struct ConeQuery {
  double theta = 0.0;    // half-angle in radians, (0, pi]
  std::int64_t dim = 2;  // ambient dimension, >= 2
};

// log10 of the spherical cap ratio
//   P(theta) = int_0^theta sin^{d-2} / int_0^pi sin^{d-2},
// via adaptive composite Simpson on the integrand's logarithm with
// log-sum-exp accumulation. Relative error of the log value <= 1e-6.
double cap_fraction_log10(const ConeQuery& q);

// log10 of the closed-form concentration bound e^{-(d-1) theta^2 / 2}.
double cap_fraction_approx_log10(const ConeQuery& q);

}  // namespace gaid
