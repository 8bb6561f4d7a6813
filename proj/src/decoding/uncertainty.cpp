#include "ipnmt/decoding/uncertainty.hpp"

#include <cmath>

namespace ipnmt::decoding {

double entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h < 0.0 ? 0.0 : h;
}

bool is_uncertain_token(double h, double epsilon) { return h > epsilon; }

bool is_uncertain_sequence(double h, double previous, double epsilon, double delta) {
  if (!is_uncertain_token(h, epsilon)) return false;
  if (!(previous > 0.0)) return false;
  return (h - previous) / previous > delta;
}

}  // namespace ipnmt::decoding
